//! Cached download → standardize → windowing stages.
//!
//! Each stage records a digest of the configuration fields it depends on in
//! the dataset's `cache_manifest.json`. A stage is skipped when its recorded
//! digest matches and its outputs exist; otherwise it and every later stage
//! are recomputed. The manifest entry is written only after a stage's
//! outputs are complete, so an interrupted run is recomputed next time.

pub mod bench;
pub mod download;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{stage_hash, Stage, StageHash, WharConfig};
use crate::error::{Error, Result};
use crate::model::{build_index, DatasetIndex, SessionMetadata, WindowMetadata};
use crate::parsers::{
    validate_standardized, Parser, ParserOutput, ParserRegistry, ValidationReport,
};
use crate::storage::{self, create_dir_all, reset_dir, DatasetLayout};
use crate::transforms::{
    filter_activities, generate_windows, resample, select_channels, WindowGeometry,
};

pub use bench::BenchReport;
pub use download::RetryPolicy;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Recompute every stage regardless of the manifest.
    pub force: bool,
    /// Overrides `in_parallel` from the config.
    pub parallel: Option<bool>,
    /// Worker count; defaults to the number of available cores.
    pub jobs: Option<usize>,
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub index: DatasetIndex,
    /// Whether each stage was served from the cache.
    pub cache_hits: BTreeMap<Stage, bool>,
}

impl RunSummary {
    pub fn recomputed(&self) -> Vec<Stage> {
        self.cache_hits
            .iter()
            .filter(|(_, &hit)| !hit)
            .map(|(&s, _)| s)
            .collect()
    }
}

/// Freshness of one stage as seen from the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageState {
    Fresh,
    Stale,
    Missing,
}

impl StageState {
    pub fn as_str(self) -> &'static str {
        match self {
            StageState::Fresh => "fresh",
            StageState::Stale => "stale",
            StageState::Missing => "missing",
        }
    }
}

pub struct Pipeline {
    cfg: WharConfig,
    layout: DatasetLayout,
    registry: ParserRegistry,
    options: RunOptions,
    retry: RetryPolicy,
}

const CHECKSUM_FILE: &str = download::CHECKSUM_FILE;

impl Pipeline {
    pub fn new(cfg: WharConfig) -> Self {
        Pipeline {
            layout: DatasetLayout::for_config(&cfg),
            cfg,
            registry: ParserRegistry::builtin(),
            options: RunOptions::default(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_registry(mut self, registry: ParserRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_options(mut self, options: RunOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &WharConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &DatasetLayout {
        &self.layout
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    fn parser(&self) -> Result<Arc<dyn Parser>> {
        self.registry.get(&self.cfg.parser_id)
    }

    pub fn stage_hash(&self, stage: Stage) -> Result<StageHash> {
        Ok(stage_hash(&self.cfg, stage, self.parser()?.version()))
    }

    fn parallel(&self) -> bool {
        self.options.parallel.unwrap_or(self.cfg.in_parallel)
    }

    fn jobs(&self) -> usize {
        self.options
            .jobs
            .filter(|&j| j > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn outputs_present(&self, stage: Stage) -> bool {
        match stage {
            Stage::Download => self.layout.raw_dir().is_dir(),
            Stage::Standardize => {
                self.layout.activity_metadata_path().is_file()
                    && self.layout.session_metadata_path().is_file()
                    && self.layout.sessions_dir().is_dir()
            }
            Stage::Windowing => {
                self.layout.window_metadata_path().is_file() && self.layout.windows_dir().is_dir()
            }
        }
    }

    /// Freshness of every stage against the current config, without running anything.
    pub fn stage_states(&self) -> Result<BTreeMap<Stage, StageState>> {
        let manifest = storage::read_manifest(&self.layout)?;
        let mut states = BTreeMap::new();
        for stage in Stage::ALL {
            let state = match manifest.digest(stage) {
                None => StageState::Missing,
                Some(d) if d == self.stage_hash(stage)?.digest && self.outputs_present(stage) => {
                    StageState::Fresh
                }
                Some(_) => StageState::Stale,
            };
            states.insert(stage, state);
        }
        Ok(states)
    }

    fn is_cached(&self, stage: Stage, digest: &str) -> Result<bool> {
        if self.options.force {
            return Ok(false);
        }
        let manifest = storage::read_manifest(&self.layout)?;
        Ok(manifest.digest(stage) == Some(digest) && self.outputs_present(stage))
    }

    /// Makes the raw files available under `raw/`; returns that directory.
    pub fn ensure_downloaded(&self) -> Result<PathBuf> {
        self.download_stage().map(|(p, _)| p)
    }

    fn download_stage(&self) -> Result<(PathBuf, bool)> {
        let hash = self.stage_hash(Stage::Download)?;
        let raw = self.layout.raw_dir();
        if self.is_cached(Stage::Download, &hash.digest)? {
            log::info!("download: cached ({})", raw.display());
            return Ok((raw, true));
        }
        create_dir_all(self.layout.root())?;
        storage::invalidate_stages(&self.layout, Stage::Download.and_downstream())?;
        let previous = fs::read_to_string(raw.join(CHECKSUM_FILE)).ok();
        reset_dir(&raw)?;
        log::info!("download: fetching {}", self.cfg.download_url);
        download::fetch(&self.cfg.download_url, &raw, self.retry)?;
        let checksum = download::archive_checksum(&raw)?;
        download::extract_archives(&raw)?;
        if let Some(sum) = checksum {
            let record = format!("{}\t{}\n", self.cfg.download_url, sum);
            if let Some(prev) = previous {
                if prev.starts_with(&format!("{}\t", self.cfg.download_url)) && prev != record {
                    log::warn!(
                        "download: archive from {} changed since the last download",
                        self.cfg.download_url
                    );
                }
            }
            let path = raw.join(CHECKSUM_FILE);
            fs::write(&path, record).map_err(|e| Error::io(&path, e))?;
        }
        storage::update_manifest(&self.layout, Stage::Download, &hash.digest)?;
        Ok((raw, false))
    }

    /// Standardized sessions and metadata; the returned index has no windows.
    pub fn ensure_standardized(&self) -> Result<DatasetIndex> {
        let mut hits = BTreeMap::new();
        self.standardize_stage(&mut hits)
    }

    fn standardize_stage(&self, hits: &mut BTreeMap<Stage, bool>) -> Result<DatasetIndex> {
        let (raw, download_hit) = self.download_stage()?;
        hits.insert(Stage::Download, download_hit);
        let parser = self.parser()?;
        let hash = self.stage_hash(Stage::Standardize)?;
        if self.is_cached(Stage::Standardize, &hash.digest)? {
            log::info!("standardize: cached");
            hits.insert(Stage::Standardize, true);
            return build_index(
                storage::read_activity_metadata(&self.layout)?,
                storage::read_session_metadata(&self.layout)?,
                Vec::new(),
            );
        }
        hits.insert(Stage::Standardize, false);
        storage::invalidate_stages(&self.layout, Stage::Standardize.and_downstream())?;
        reset_dir(&self.layout.sessions_dir())?;
        remove_window_outputs(&self.layout)?;

        log::info!("standardize: running parser `{}`", parser.id());
        let output = parser.parse(&raw, &self.cfg)?;
        let report = validate_standardized(&output, &self.cfg);
        for w in report.warnings() {
            log::debug!("standardize: {w}");
        }
        if !report.ok() {
            return Err(Error::Validation(report));
        }

        let write = |(meta, data): &(SessionMetadata, crate::model::SessionData)| {
            storage::write_session(&self.layout, meta.session_id, data).map_err(|e| {
                Error::Session {
                    session_id: meta.session_id,
                    source: Box::new(e),
                }
            })
        };
        if self.parallel() {
            self.pool()?.install(|| {
                output
                    .sessions
                    .par_iter()
                    .map(write)
                    .collect::<Result<Vec<()>>>()
            })?;
        } else {
            output.sessions.iter().try_for_each(write)?;
        }
        let sessions = output.session_metadata();
        storage::write_activity_metadata(&self.layout, &output.activities)?;
        storage::write_session_metadata(&self.layout, &sessions)?;
        storage::update_manifest(&self.layout, Stage::Standardize, &hash.digest)?;
        log::info!("standardize: wrote {} sessions", sessions.len());
        build_index(output.activities, sessions, Vec::new())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs())
            .build()
            .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))
    }

    /// Windowed dataset; the returned index is restricted to the configured activities.
    pub fn ensure_windowed(&self) -> Result<DatasetIndex> {
        self.run_all().map(|s| s.index)
    }

    pub fn run_all(&self) -> Result<RunSummary> {
        let mut hits = BTreeMap::new();
        let standardized = self.standardize_stage(&mut hits)?;
        let hash = self.stage_hash(Stage::Windowing)?;
        let index = if self.is_cached(Stage::Windowing, &hash.digest)? {
            log::info!("windowing: cached");
            hits.insert(Stage::Windowing, true);
            let filtered = filter_activities(&standardized, &self.cfg.activity_names)?;
            build_index(
                filtered.activities,
                filtered.sessions,
                storage::read_window_metadata(&self.layout)?,
            )?
        } else {
            hits.insert(Stage::Windowing, false);
            self.window_sessions(&standardized, self.parallel(), &hash)?
        };
        Ok(RunSummary {
            index,
            cache_hits: hits,
        })
    }

    /// Recomputes the windowing stage from the standardized sessions.
    pub(crate) fn window_sessions(
        &self,
        standardized: &DatasetIndex,
        parallel: bool,
        hash: &StageHash,
    ) -> Result<DatasetIndex> {
        storage::invalidate_stages(&self.layout, &[Stage::Windowing])?;
        remove_window_outputs(&self.layout)?;
        reset_dir(&self.layout.windows_dir())?;

        let filtered = filter_activities(standardized, &self.cfg.activity_names)?;
        let geometry = WindowGeometry::new(
            self.cfg.window_time,
            self.cfg.window_overlap,
            self.cfg.effective_freq(),
        )?;
        let task = |meta: &SessionMetadata| {
            self.window_one(meta.session_id, geometry)
                .map_err(|e| Error::Session {
                    session_id: meta.session_id,
                    source: Box::new(e),
                })
        };
        let results: Vec<Result<Vec<WindowMetadata>>> = if parallel {
            log::info!(
                "windowing: {} sessions on {} workers",
                filtered.sessions.len(),
                self.jobs()
            );
            self.pool()?
                .install(|| filtered.sessions.par_iter().map(task).collect())
        } else {
            log::info!(
                "windowing: {} sessions sequentially",
                filtered.sessions.len()
            );
            filtered.sessions.iter().map(task).collect()
        };
        let mut windows = Vec::new();
        for r in results {
            windows.extend(r?);
        }
        windows.sort_by_key(|w| (w.session_id, w.window_index()));
        storage::write_window_metadata(&self.layout, &windows)?;
        storage::update_manifest(&self.layout, Stage::Windowing, &hash.digest)?;
        log::info!("windowing: wrote {} windows", windows.len());
        build_index(filtered.activities, filtered.sessions, windows)
    }

    fn window_one(&self, session_id: u32, geometry: WindowGeometry) -> Result<Vec<WindowMetadata>> {
        let session = storage::read_session(&self.layout, session_id)?;
        let mut session = select_channels(&session, &self.cfg.sensor_channels)?;
        if let Some(freq) = self.cfg.resampling_freq {
            session = resample(&session, freq)?;
        }
        let windows = generate_windows(&session, session_id, geometry)?;
        let mut metas = Vec::with_capacity(windows.len());
        for (meta, window) in windows {
            storage::write_window(
                &self.layout,
                &meta.window_id,
                &session.channel_names,
                &window,
            )?;
            metas.push(meta);
        }
        Ok(metas)
    }

    /// Parses the raw files again (downloading if needed) and checks the result.
    pub fn validate_raw(&self) -> Result<(ParserOutput, ValidationReport)> {
        let raw = self.ensure_downloaded()?;
        let output = self.parser()?.parse(&raw, &self.cfg)?;
        let report = validate_standardized(&output, &self.cfg);
        Ok((output, report))
    }

    /// Reads the stored standardized output back and checks it.
    pub fn validate_stored(&self) -> Result<ValidationReport> {
        let activities = storage::read_activity_metadata(&self.layout)?;
        let metas = storage::read_session_metadata(&self.layout)?;
        let sessions = metas
            .into_iter()
            .map(|m| Ok((m, storage::read_session(&self.layout, m.session_id)?)))
            .collect::<Result<Vec<_>>>()?;
        let output = ParserOutput {
            activities,
            sessions,
            issues: Vec::new(),
        };
        Ok(validate_standardized(&output, &self.cfg))
    }
}

fn remove_window_outputs(layout: &DatasetLayout) -> Result<()> {
    let path = layout.window_metadata_path();
    match fs::remove_file(&path) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(Error::io(&path, e)),
    }
    let dir = layout.windows_dir();
    match fs::remove_dir_all(&dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(&dir, e)),
    }
}
