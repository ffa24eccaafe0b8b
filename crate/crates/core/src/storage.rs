//! On-disk layout of a processed dataset.
//!
//! ```text
//! {datasets_dir}/{dataset_id}/
//!   raw/                          downloaded archive and its extraction
//!   sessions/session_{id}.parquet timestamp (int64 µs) + one float column per channel
//!   windows/window_{id}.parquet   one float column per selected channel
//!   metadata/activity_metadata.parquet
//!   metadata/session_metadata.parquet
//!   metadata/window_metadata.parquet
//!   cache_manifest.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parquet::basic::{Compression, LogicalType, Repetition, Type as PhysicalType};
use parquet::column::reader::get_typed_column_reader;
use parquet::data_type::{ByteArray, ByteArrayType, FloatType, Int64Type};
use parquet::file::properties::WriterProperties;
use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::file::writer::SerializedFileWriter;
use parquet::schema::types::Type;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Stage, WharConfig};
use crate::error::{Error, Result};
use crate::model::{
    build_index, ActivityMetadata, DatasetIndex, SessionData, SessionMetadata, Window,
    WindowMetadata,
};

pub const TIMESTAMP_COLUMN: &str = "timestamp";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = concat!("whar-datasets ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    root: PathBuf,
}

impl DatasetLayout {
    pub fn new(datasets_dir: impl AsRef<Path>, dataset_id: &str) -> Self {
        DatasetLayout {
            root: datasets_dir.as_ref().join(dataset_id),
        }
    }

    pub fn for_config(cfg: &WharConfig) -> Self {
        Self::new(&cfg.datasets_dir, &cfg.dataset_id)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.root.join("raw")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn windows_dir(&self) -> PathBuf {
        self.root.join("windows")
    }

    pub fn metadata_dir(&self) -> PathBuf {
        self.root.join("metadata")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("cache_manifest.json")
    }

    pub fn session_path(&self, session_id: u32) -> PathBuf {
        self.sessions_dir()
            .join(format!("session_{session_id}.parquet"))
    }

    pub fn window_path(&self, window_id: &str) -> PathBuf {
        self.windows_dir()
            .join(format!("window_{window_id}.parquet"))
    }

    pub fn activity_metadata_path(&self) -> PathBuf {
        self.metadata_dir().join("activity_metadata.parquet")
    }

    pub fn session_metadata_path(&self) -> PathBuf {
        self.metadata_dir().join("session_metadata.parquet")
    }

    pub fn window_metadata_path(&self) -> PathBuf {
        self.metadata_dir().join("window_metadata.parquet")
    }
}

pub(crate) fn create_dir_all(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Removes a directory tree if present and recreates it empty.
pub(crate) fn reset_dir(path: &Path) -> Result<()> {
    match fs::remove_dir_all(path) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(Error::io(path, e)),
    }
    create_dir_all(path)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes through `write` into a temporary sibling, then renames over `path`.
pub(crate) fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(File) -> Result<()>,
{
    if let Some(parent) = path.parent() {
        create_dir_all(parent)?;
    }
    let tmp = temp_sibling(path);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = write(file) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    I64(Vec<i64>),
    F32(Vec<f32>),
    Str(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::I64(v) => v.len(),
            ColumnData::F32(v) => v.len(),
            ColumnData::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn writer_properties() -> Arc<WriterProperties> {
    Arc::new(
        WriterProperties::builder()
            .set_compression(Compression::SNAPPY)
            .set_created_by(TOOL_VERSION.to_string())
            .build(),
    )
}

/// Writes a single-row-group parquet table with required columns.
pub fn write_table(path: &Path, columns: &[(&str, ColumnData)]) -> Result<()> {
    let perr = |source| Error::Parquet {
        path: path.to_path_buf(),
        source,
    };
    let rows = columns.first().map_or(0, |(_, c)| c.len());
    if columns.iter().any(|(_, c)| c.len() != rows) {
        return Err(Error::Invariant(format!(
            "{}: columns differ in length",
            path.display()
        )));
    }
    let mut fields = Vec::with_capacity(columns.len());
    for (name, data) in columns {
        let physical = match data {
            ColumnData::I64(_) => PhysicalType::INT64,
            ColumnData::F32(_) => PhysicalType::FLOAT,
            ColumnData::Str(_) => PhysicalType::BYTE_ARRAY,
        };
        let mut builder =
            Type::primitive_type_builder(name, physical).with_repetition(Repetition::REQUIRED);
        if let ColumnData::Str(_) = data {
            builder = builder.with_logical_type(Some(LogicalType::String));
        }
        fields.push(Arc::new(builder.build().map_err(perr)?));
    }
    let schema = Arc::new(
        Type::group_type_builder("schema")
            .with_fields(fields)
            .build()
            .map_err(perr)?,
    );

    write_atomic(path, |file| {
        let mut writer =
            SerializedFileWriter::new(file, schema, writer_properties()).map_err(perr)?;
        let mut row_group = writer.next_row_group().map_err(perr)?;
        for (_, data) in columns {
            let mut col = row_group
                .next_column()
                .map_err(perr)?
                .ok_or_else(|| Error::format(path, "schema has fewer columns than data"))?;
            match data {
                ColumnData::I64(v) => {
                    col.typed::<Int64Type>()
                        .write_batch(v, None, None)
                        .map_err(perr)?;
                }
                ColumnData::F32(v) => {
                    col.typed::<FloatType>()
                        .write_batch(v, None, None)
                        .map_err(perr)?;
                }
                ColumnData::Str(v) => {
                    let bytes: Vec<ByteArray> =
                        v.iter().map(|s| ByteArray::from(s.as_str())).collect();
                    col.typed::<ByteArrayType>()
                        .write_batch(&bytes, None, None)
                        .map_err(perr)?;
                }
            }
            col.close().map_err(perr)?;
        }
        row_group.close().map_err(perr)?;
        writer.close().map_err(perr)?;
        Ok(())
    })
}

/// Reads every column of a parquet table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Vec<(String, ColumnData)>> {
    let perr = |source| Error::Parquet {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    let reader = SerializedFileReader::new(file).map_err(perr)?;
    let meta = reader.metadata();
    let schema = meta.file_metadata().schema_descr();
    let mut out: Vec<(String, ColumnData)> = (0..schema.num_columns())
        .map(|i| {
            let col = schema.column(i);
            let data = match col.physical_type() {
                PhysicalType::INT64 => Ok(ColumnData::I64(Vec::new())),
                PhysicalType::FLOAT => Ok(ColumnData::F32(Vec::new())),
                PhysicalType::BYTE_ARRAY => Ok(ColumnData::Str(Vec::new())),
                other => Err(Error::format(
                    path,
                    format!("unsupported column type {other} for `{}`", col.name()),
                )),
            }?;
            Ok((col.name().to_string(), data))
        })
        .collect::<Result<_>>()?;

    for rg in 0..meta.num_row_groups() {
        let row_group = reader.get_row_group(rg).map_err(perr)?;
        let rows = row_group.metadata().num_rows() as usize;
        for (c, (_, data)) in out.iter_mut().enumerate() {
            let column = row_group.get_column_reader(c).map_err(perr)?;
            let read = match data {
                ColumnData::I64(v) => {
                    let mut r = get_typed_column_reader::<Int64Type>(column);
                    read_all(|n, buf| r.read_records(n, None, None, buf), rows, v)
                }
                ColumnData::F32(v) => {
                    let mut r = get_typed_column_reader::<FloatType>(column);
                    read_all(|n, buf| r.read_records(n, None, None, buf), rows, v)
                }
                ColumnData::Str(v) => {
                    let mut r = get_typed_column_reader::<ByteArrayType>(column);
                    let mut raw: Vec<ByteArray> = Vec::with_capacity(rows);
                    let n = read_all(|n, buf| r.read_records(n, None, None, buf), rows, &mut raw)
                        .map_err(perr)?;
                    for b in raw {
                        let s = b
                            .as_utf8()
                            .map_err(|_| Error::format(path, "string column is not UTF-8"))?;
                        v.push(s.to_string());
                    }
                    Ok(n)
                }
            }
            .map_err(perr)?;
            if read != rows {
                return Err(Error::format(
                    path,
                    format!("row group {rg}: expected {rows} rows, read {read}"),
                ));
            }
        }
    }
    Ok(out)
}

fn read_all<T, F>(
    mut read: F,
    rows: usize,
    buf: &mut Vec<T>,
) -> std::result::Result<usize, parquet::errors::ParquetError>
where
    F: FnMut(
        usize,
        &mut Vec<T>,
    ) -> std::result::Result<(usize, usize, usize), parquet::errors::ParquetError>,
{
    let mut total = 0;
    while total < rows {
        let (records, _, _) = read(rows - total, buf)?;
        if records == 0 {
            break;
        }
        total += records;
    }
    Ok(total)
}

fn take_column(
    path: &Path,
    columns: &mut Vec<(String, ColumnData)>,
    name: &str,
) -> Result<ColumnData> {
    let pos = columns
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::format(path, format!("missing column `{name}`")))?;
    Ok(columns.remove(pos).1)
}

fn take_i64(path: &Path, columns: &mut Vec<(String, ColumnData)>, name: &str) -> Result<Vec<i64>> {
    match take_column(path, columns, name)? {
        ColumnData::I64(v) => Ok(v),
        _ => Err(Error::format(path, format!("column `{name}` is not int64"))),
    }
}

fn take_u32(path: &Path, columns: &mut Vec<(String, ColumnData)>, name: &str) -> Result<Vec<u32>> {
    take_i64(path, columns, name)?
        .into_iter()
        .map(|x| {
            u32::try_from(x)
                .map_err(|_| Error::format(path, format!("column `{name}` value {x} out of range")))
        })
        .collect()
}

fn take_str(
    path: &Path,
    columns: &mut Vec<(String, ColumnData)>,
    name: &str,
) -> Result<Vec<String>> {
    match take_column(path, columns, name)? {
        ColumnData::Str(v) => Ok(v),
        _ => Err(Error::format(
            path,
            format!("column `{name}` is not a string"),
        )),
    }
}

fn ids(v: impl Iterator<Item = u32>) -> ColumnData {
    ColumnData::I64(v.map(i64::from).collect())
}

pub fn write_session(layout: &DatasetLayout, session_id: u32, data: &SessionData) -> Result<()> {
    data.check()
        .map_err(|e| Error::Invariant(format!("refusing to write session {session_id}: {e}")))?;
    if data.channel_names.iter().any(|n| n == TIMESTAMP_COLUMN) {
        return Err(Error::Invariant(format!(
            "refusing to write session {session_id}: channel name `{TIMESTAMP_COLUMN}` is reserved"
        )));
    }
    let mut columns = Vec::with_capacity(data.num_channels() + 1);
    columns.push((TIMESTAMP_COLUMN, ColumnData::I64(data.timestamps.clone())));
    for (name, col) in data.channel_names.iter().zip(&data.columns) {
        columns.push((name.as_str(), ColumnData::F32(col.clone())));
    }
    write_table(&layout.session_path(session_id), &columns)
}

pub fn read_session(layout: &DatasetLayout, session_id: u32) -> Result<SessionData> {
    let path = layout.session_path(session_id);
    let mut columns = read_table(&path)?;
    let timestamps = take_i64(&path, &mut columns, TIMESTAMP_COLUMN)?;
    let mut channels = Vec::with_capacity(columns.len());
    for (name, data) in columns {
        match data {
            ColumnData::F32(v) => channels.push((name, v)),
            _ => {
                return Err(Error::format(
                    &path,
                    format!("channel `{name}` is not float"),
                ))
            }
        }
    }
    SessionData::new(timestamps, channels).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn write_window(
    layout: &DatasetLayout,
    window_id: &str,
    channel_names: &[String],
    window: &Window,
) -> Result<()> {
    if channel_names.len() != window.cols() {
        return Err(Error::Invariant(format!(
            "window {window_id}: {} channel names for {} columns",
            channel_names.len(),
            window.cols()
        )));
    }
    let columns: Vec<(&str, ColumnData)> = channel_names
        .iter()
        .zip(window.columns())
        .map(|(name, col)| (name.as_str(), ColumnData::F32(col)))
        .collect();
    write_table(&layout.window_path(window_id), &columns)
}

/// Reads a window; `expected_shape` (rows, cols) is checked when given.
pub fn read_window(
    layout: &DatasetLayout,
    window_id: &str,
    expected_shape: Option<(usize, usize)>,
) -> Result<Window> {
    let path = layout.window_path(window_id);
    let columns = read_table(&path).map_err(|e| match e {
        Error::NotFound(_) => Error::NotFound(format!("window {window_id}")),
        other => other,
    })?;
    let mut data = Vec::with_capacity(columns.len());
    for (name, col) in columns {
        match col {
            ColumnData::F32(v) => data.push(v),
            _ => {
                return Err(Error::format(
                    &path,
                    format!("channel `{name}` is not float"),
                ))
            }
        }
    }
    let window = Window::from_columns(&data).map_err(|e| Error::format(&path, e.to_string()))?;
    if let Some(shape) = expected_shape {
        if window.shape() != shape {
            return Err(Error::format(
                &path,
                format!(
                    "window shape {:?} does not match expected {:?}",
                    window.shape(),
                    shape
                ),
            ));
        }
    }
    Ok(window)
}

pub fn write_activity_metadata(
    layout: &DatasetLayout,
    activities: &[ActivityMetadata],
) -> Result<()> {
    write_table(
        &layout.activity_metadata_path(),
        &[
            ("activity_id", ids(activities.iter().map(|a| a.activity_id))),
            (
                "activity_name",
                ColumnData::Str(activities.iter().map(|a| a.activity_name.clone()).collect()),
            ),
        ],
    )
}

pub fn write_session_metadata(layout: &DatasetLayout, sessions: &[SessionMetadata]) -> Result<()> {
    write_table(
        &layout.session_metadata_path(),
        &[
            ("session_id", ids(sessions.iter().map(|s| s.session_id))),
            ("subject_id", ids(sessions.iter().map(|s| s.subject_id))),
            ("activity_id", ids(sessions.iter().map(|s| s.activity_id))),
        ],
    )
}

pub fn write_window_metadata(layout: &DatasetLayout, windows: &[WindowMetadata]) -> Result<()> {
    write_table(
        &layout.window_metadata_path(),
        &[
            (
                "window_id",
                ColumnData::Str(windows.iter().map(|w| w.window_id.clone()).collect()),
            ),
            ("session_id", ids(windows.iter().map(|w| w.session_id))),
        ],
    )
}

pub fn read_activity_metadata(layout: &DatasetLayout) -> Result<Vec<ActivityMetadata>> {
    let path = layout.activity_metadata_path();
    let mut cols = read_table(&path)?;
    let id = take_u32(&path, &mut cols, "activity_id")?;
    let name = take_str(&path, &mut cols, "activity_name")?;
    Ok(id
        .into_iter()
        .zip(name)
        .map(|(activity_id, activity_name)| ActivityMetadata {
            activity_id,
            activity_name,
        })
        .collect())
}

pub fn read_session_metadata(layout: &DatasetLayout) -> Result<Vec<SessionMetadata>> {
    let path = layout.session_metadata_path();
    let mut cols = read_table(&path)?;
    let session = take_u32(&path, &mut cols, "session_id")?;
    let subject = take_u32(&path, &mut cols, "subject_id")?;
    let activity = take_u32(&path, &mut cols, "activity_id")?;
    Ok(session
        .into_iter()
        .zip(subject)
        .zip(activity)
        .map(|((session_id, subject_id), activity_id)| SessionMetadata {
            session_id,
            subject_id,
            activity_id,
        })
        .collect())
}

pub fn read_window_metadata(layout: &DatasetLayout) -> Result<Vec<WindowMetadata>> {
    let path = layout.window_metadata_path();
    let mut cols = read_table(&path)?;
    let window = take_str(&path, &mut cols, "window_id")?;
    let session = take_u32(&path, &mut cols, "session_id")?;
    Ok(window
        .into_iter()
        .zip(session)
        .map(|(window_id, session_id)| WindowMetadata {
            window_id,
            session_id,
        })
        .collect())
}

pub fn write_metadata_tables(layout: &DatasetLayout, index: &DatasetIndex) -> Result<()> {
    write_activity_metadata(layout, &index.activities)?;
    write_session_metadata(layout, &index.sessions)?;
    write_window_metadata(layout, &index.windows)
}

/// Reads all three tables and rebuilds the index, checking referential integrity.
pub fn read_metadata_tables(layout: &DatasetLayout) -> Result<DatasetIndex> {
    build_index(
        read_activity_metadata(layout)?,
        read_session_metadata(layout)?,
        read_window_metadata(layout)?,
    )
}

/// Per-stage digests deciding whether a stage can be skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub format_version: u32,
    pub stages: BTreeMap<Stage, String>,
    pub tool_version: String,
}

impl Default for CacheManifest {
    fn default() -> Self {
        CacheManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            stages: BTreeMap::new(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

impl CacheManifest {
    pub fn digest(&self, stage: Stage) -> Option<&str> {
        self.stages.get(&stage).map(String::as_str)
    }
}

/// Reads the manifest; a missing file (or an older format) reads as empty.
pub fn read_manifest(layout: &DatasetLayout) -> Result<CacheManifest> {
    let path = layout.manifest_path();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(CacheManifest::default()),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let manifest: CacheManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        log::warn!(
            "{}: manifest format {} is not {}, ignoring cached stages",
            path.display(),
            manifest.format_version,
            MANIFEST_FORMAT_VERSION
        );
        return Ok(CacheManifest::default());
    }
    Ok(manifest)
}

fn write_manifest(layout: &DatasetLayout, manifest: &CacheManifest) -> Result<()> {
    let path = layout.manifest_path();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&path, |mut f| {
        use std::io::Write;
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .and_then(|_| f.sync_all())
            .map_err(|e| Error::io(&path, e))
    })
}

pub fn update_manifest(layout: &DatasetLayout, stage: Stage, digest: &str) -> Result<()> {
    let mut manifest = read_manifest(layout)?;
    manifest.stages.insert(stage, digest.to_string());
    manifest.tool_version = TOOL_VERSION.to_string();
    write_manifest(layout, &manifest)
}

/// Drops the given stages from the manifest; no write happens if none were recorded.
pub fn invalidate_stages(layout: &DatasetLayout, stages: &[Stage]) -> Result<()> {
    let mut manifest = read_manifest(layout)?;
    let before = manifest.stages.len();
    for s in stages {
        manifest.stages.remove(s);
    }
    if manifest.stages.len() != before {
        write_manifest(layout, &manifest)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    Preload,
    OnDemand,
}

impl LoadMode {
    pub fn from_in_memory(in_memory: bool) -> Self {
        if in_memory {
            LoadMode::Preload
        } else {
            LoadMode::OnDemand
        }
    }
}

/// Access to the windows of a processed dataset, either all resident or read per request.
#[derive(Debug)]
pub struct WindowStore {
    layout: DatasetLayout,
    mode: LoadMode,
    known: HashSet<String>,
    resident: HashMap<String, Window>,
    files_read: AtomicUsize,
}

pub fn open_window_store(layout: &DatasetLayout, mode: LoadMode) -> Result<WindowStore> {
    let ids: Vec<String> = read_window_metadata(layout)?
        .into_iter()
        .map(|w| w.window_id)
        .collect();
    let resident = match mode {
        LoadMode::OnDemand => HashMap::new(),
        LoadMode::Preload => ids
            .par_iter()
            .map(|id| read_window(layout, id, None).map(|w| (id.clone(), w)))
            .collect::<Result<HashMap<_, _>>>()?,
    };
    let files_read = AtomicUsize::new(resident.len());
    Ok(WindowStore {
        layout: layout.clone(),
        mode,
        known: ids.into_iter().collect(),
        resident,
        files_read,
    })
}

impl WindowStore {
    pub fn mode(&self) -> LoadMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn contains(&self, window_id: &str) -> bool {
        self.known.contains(window_id)
    }

    /// Number of window files read since the store was opened.
    pub fn files_read(&self) -> usize {
        self.files_read.load(Ordering::Relaxed)
    }

    pub fn get(&self, window_id: &str) -> Result<Window> {
        if !self.known.contains(window_id) {
            return Err(Error::NotFound(format!("window {window_id}")));
        }
        match self.mode {
            LoadMode::Preload => Ok(self.resident[window_id].clone()),
            LoadMode::OnDemand => {
                self.files_read.fetch_add(1, Ordering::Relaxed);
                read_window(&self.layout, window_id, None)
            }
        }
    }
}
