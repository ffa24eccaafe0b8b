//! Dataset configuration: schema, validation, built-in registry and stage hashing.
//!
//! A [`WharConfig`] is plain data. Configs are stored as TOML documents; every
//! document (file or built-in) goes through [`validate_config`], which reports
//! all violations at once with their field paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable overriding `datasets_dir` when loading configs.
pub const DATASETS_DIR_ENV: &str = "WHAR_DATASETS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    MinMaxPerWindow,
    MinMaxGlobal,
    StdPerWindow,
    StdGlobal,
    RobustPerWindow,
    RobustGlobal,
}

impl Normalization {
    pub const ALL: [Normalization; 7] = [
        Normalization::None,
        Normalization::MinMaxPerWindow,
        Normalization::MinMaxGlobal,
        Normalization::StdPerWindow,
        Normalization::StdGlobal,
        Normalization::RobustPerWindow,
        Normalization::RobustGlobal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::MinMaxPerWindow => "min_max_per_window",
            Normalization::MinMaxGlobal => "min_max_global",
            Normalization::StdPerWindow => "std_per_window",
            Normalization::StdGlobal => "std_global",
            Normalization::RobustPerWindow => "robust_per_window",
            Normalization::RobustGlobal => "robust_global",
        }
    }

    pub fn is_global(self) -> bool {
        matches!(
            self,
            Normalization::MinMaxGlobal | Normalization::StdGlobal | Normalization::RobustGlobal
        )
    }
}

impl std::str::FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Normalization::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Normalization::ALL.iter().map(|n| n.as_str()).collect();
                format!(
                    "unknown normalization `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// Dataset-agnostic configuration driving every pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WharConfig {
    // info
    pub dataset_id: String,
    pub download_url: String,
    pub sampling_freq: f64,
    pub num_of_subjects: u32,
    pub num_of_activities: u32,
    pub num_of_channels: u32,
    pub datasets_dir: PathBuf,
    // parsing
    pub parser_id: String,
    // preprocessing
    pub activity_names: Vec<String>,
    pub sensor_channels: Vec<String>,
    pub window_time: f64,
    pub window_overlap: f64,
    pub in_parallel: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resampling_freq: Option<f64>,
    // training
    pub given_train_subj_ids: Vec<u32>,
    pub given_test_subj_ids: Vec<u32>,
    pub subj_cross_val_split_groups: Vec<Vec<u32>>,
    pub val_percentage: f64,
    pub normalization: Normalization,
    pub in_memory: bool,
    pub seed: u64,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub num_epochs: u32,
}

impl WharConfig {
    /// Sampling rate the windowing stage operates at.
    pub fn effective_freq(&self) -> f64 {
        self.resampling_freq.unwrap_or(self.sampling_freq)
    }

    /// Fails only for values TOML cannot hold (integers above `i64::MAX`).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| self.unrepresentable(e))
    }

    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| self.unrepresentable(e))
    }

    fn unrepresentable(&self, e: toml::ser::Error) -> Error {
        let path = if self.seed > i64::MAX as u64 {
            "seed"
        } else {
            "<config>"
        };
        Error::Config(ConfigErrors(vec![FieldError {
            path: path.into(),
            message: format!("not representable in TOML: {e}"),
        }]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

/// Every violation found while validating a config document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn iter(&self) -> impl Iterator<Item = &FieldError> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_path(&self, path: &str) -> bool {
        self.0.iter().any(|e| e.path == path)
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KNOWN_FIELDS: &[&str] = &[
    "dataset_id",
    "download_url",
    "sampling_freq",
    "num_of_subjects",
    "num_of_activities",
    "num_of_channels",
    "datasets_dir",
    "parser_id",
    "activity_names",
    "sensor_channels",
    "window_time",
    "window_overlap",
    "in_parallel",
    "resampling_freq",
    "given_train_subj_ids",
    "given_test_subj_ids",
    "subj_cross_val_split_groups",
    "val_percentage",
    "normalization",
    "in_memory",
    "seed",
    "batch_size",
    "learning_rate",
    "num_epochs",
];

struct Reader<'a> {
    doc: &'a toml::Table,
    errors: Vec<FieldError>,
}

impl<'a> Reader<'a> {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.into(),
            message: message.into(),
        });
    }

    fn get(&mut self, key: &str) -> Option<&'a toml::Value> {
        let v = self.doc.get(key);
        if v.is_none() {
            self.err(key, "missing field");
        }
        v
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.get(key)? {
            toml::Value::String(s) if s.trim().is_empty() => {
                self.err(key, "must not be empty");
                None
            }
            toml::Value::String(s) => Some(s.clone()),
            other => {
                self.err(key, format!("expected string, found {}", other.type_str()));
                None
            }
        }
    }

    fn number_value(&mut self, path: &str, v: &toml::Value) -> Option<f64> {
        match v {
            toml::Value::Float(x) if x.is_finite() => Some(*x),
            toml::Value::Float(_) => {
                self.err(path, "must be finite");
                None
            }
            toml::Value::Integer(i) => Some(*i as f64),
            other => {
                self.err(path, format!("expected number, found {}", other.type_str()));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        let v = self.get(key)?;
        self.number_value(key, v)
    }

    fn optional_number(&mut self, key: &str) -> Option<Option<f64>> {
        match self.doc.get(key) {
            None => Some(None),
            Some(v) => self.number_value(key, v).map(Some),
        }
    }

    fn uint_value(&mut self, path: &str, v: &toml::Value) -> Option<u64> {
        match v {
            toml::Value::Integer(i) if *i >= 0 => Some(*i as u64),
            toml::Value::Integer(_) => {
                self.err(path, "must be non-negative");
                None
            }
            other => {
                self.err(
                    path,
                    format!("expected integer, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        let v = self.get(key)?;
        self.uint_value(key, v)
    }

    fn u32_value(&mut self, path: &str, v: &toml::Value) -> Option<u32> {
        let x = self.uint_value(path, v)?;
        match u32::try_from(x) {
            Ok(x) => Some(x),
            Err(_) => {
                self.err(path, "out of range");
                None
            }
        }
    }

    fn positive_u32(&mut self, key: &str) -> Option<u32> {
        let v = self.get(key)?;
        let x = self.u32_value(key, v)?;
        if x == 0 {
            self.err(key, "must be positive");
            return None;
        }
        Some(x)
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.get(key)? {
            toml::Value::Boolean(b) => Some(*b),
            other => {
                self.err(key, format!("expected boolean, found {}", other.type_str()));
                None
            }
        }
    }

    fn array(&mut self, key: &str) -> Option<&'a Vec<toml::Value>> {
        match self.get(key)? {
            toml::Value::Array(a) => Some(a),
            other => {
                self.err(key, format!("expected array, found {}", other.type_str()));
                None
            }
        }
    }

    fn string_list(&mut self, key: &str) -> Option<Vec<String>> {
        let arr = self.array(key)?;
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, v) in arr.iter().enumerate() {
            match v {
                toml::Value::String(s) if !s.is_empty() => out.push(s.clone()),
                toml::Value::String(_) => {
                    self.err(format!("{key}[{i}]"), "must not be empty");
                    ok = false;
                }
                other => {
                    self.err(
                        format!("{key}[{i}]"),
                        format!("expected string, found {}", other.type_str()),
                    );
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn id_list_value(&mut self, path: &str, v: &toml::Value) -> Option<Vec<u32>> {
        let arr = match v {
            toml::Value::Array(a) => a,
            other => {
                self.err(path, format!("expected array, found {}", other.type_str()));
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, v) in arr.iter().enumerate() {
            match self.u32_value(&format!("{path}[{i}]"), v) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn id_list(&mut self, key: &str) -> Option<Vec<u32>> {
        let v = self.get(key)?;
        self.id_list_value(key, v)
    }

    fn id_groups(&mut self, key: &str) -> Option<Vec<Vec<u32>>> {
        let arr = self.array(key)?;
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (i, v) in arr.iter().enumerate() {
            match self.id_list_value(&format!("{key}[{i}]"), v) {
                Some(g) => out.push(g),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }
}

fn duplicates<T: Ord + Clone>(items: &[T]) -> BTreeSet<T> {
    let mut seen = BTreeSet::new();
    items
        .iter()
        .filter(|x| !seen.insert((*x).clone()))
        .cloned()
        .collect()
}

fn render_set<T: fmt::Display>(set: &BTreeSet<T>) -> String {
    let items: Vec<String> = set.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

/// Validates a raw config document into a typed [`WharConfig`].
///
/// All problems are collected; the error lists each offending field path.
pub fn validate_config(doc: &toml::Table) -> Result<WharConfig, ConfigErrors> {
    let mut r = Reader {
        doc,
        errors: Vec::new(),
    };

    for key in doc.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            r.err(key.clone(), "unknown field");
        }
    }

    let dataset_id = r.string("dataset_id");
    let download_url = r.string("download_url");
    let sampling_freq = r.number("sampling_freq");
    if matches!(sampling_freq, Some(f) if f <= 0.0) {
        r.err("sampling_freq", "must be > 0");
    }
    let num_of_subjects = r.positive_u32("num_of_subjects");
    let num_of_activities = r.positive_u32("num_of_activities");
    let num_of_channels = r.positive_u32("num_of_channels");
    let datasets_dir = r.string("datasets_dir");
    let parser_id = r.string("parser_id");

    let activity_names = r.string_list("activity_names");
    let sensor_channels = r.string_list("sensor_channels");
    for (key, list) in [
        ("activity_names", &activity_names),
        ("sensor_channels", &sensor_channels),
    ] {
        if let Some(list) = list {
            if list.is_empty() {
                r.err(key, "must not be empty");
            }
            let dups = duplicates(list);
            if !dups.is_empty() {
                let dups: Vec<_> = dups.into_iter().collect();
                r.err(key, format!("duplicate entries: {}", dups.join(", ")));
            }
        }
    }

    let window_time = r.number("window_time");
    if matches!(window_time, Some(t) if t <= 0.0) {
        r.err("window_time", "must be > 0");
    }
    let window_overlap = r.number("window_overlap");
    if matches!(window_overlap, Some(o) if !(0.0..1.0).contains(&o)) {
        r.err("window_overlap", "must satisfy 0 <= window_overlap < 1");
    }
    let in_parallel = r.boolean("in_parallel");
    let resampling_freq = r.optional_number("resampling_freq");
    if matches!(resampling_freq, Some(Some(f)) if f <= 0.0) {
        r.err("resampling_freq", "must be > 0 when present");
    }

    let train = r.id_list("given_train_subj_ids");
    let test = r.id_list("given_test_subj_ids");
    for (key, list) in [
        ("given_train_subj_ids", &train),
        ("given_test_subj_ids", &test),
    ] {
        if let Some(list) = list {
            let dups = duplicates(list);
            if !dups.is_empty() {
                r.err(key, format!("duplicate subject ids {}", render_set(&dups)));
            }
        }
    }
    if let (Some(train), Some(test)) = (&train, &test) {
        let train: BTreeSet<_> = train.iter().copied().collect();
        let test: BTreeSet<_> = test.iter().copied().collect();
        let overlap: BTreeSet<_> = train.intersection(&test).copied().collect();
        if !overlap.is_empty() {
            r.err(
                "given_test_subj_ids",
                format!("train/test subject overlap {}", render_set(&overlap)),
            );
        }
    }
    let groups = r.id_groups("subj_cross_val_split_groups");
    if let Some(groups) = &groups {
        if let Err(message) = check_groups_disjoint(groups) {
            r.err("subj_cross_val_split_groups", message);
        }
    }

    let val_percentage = r.number("val_percentage");
    if matches!(val_percentage, Some(p) if !(0.0..1.0).contains(&p)) {
        r.err("val_percentage", "must satisfy 0 <= val_percentage < 1");
    }
    let normalization = match r.get("normalization") {
        Some(toml::Value::String(s)) => match s.parse::<Normalization>() {
            Ok(n) => Some(n),
            Err(message) => {
                r.err("normalization", message);
                None
            }
        },
        Some(other) => {
            let t = other.type_str();
            r.err("normalization", format!("expected string, found {t}"));
            None
        }
        None => None,
    };
    let in_memory = r.boolean("in_memory");
    let seed = r.uint("seed");
    let batch_size = r.positive_u32("batch_size");
    let learning_rate = r.number("learning_rate");
    if matches!(learning_rate, Some(lr) if lr <= 0.0) {
        r.err("learning_rate", "must be > 0");
    }
    let num_epochs = r.positive_u32("num_epochs");

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }

    // Every field is Some at this point.
    Ok(WharConfig {
        dataset_id: dataset_id.unwrap(),
        download_url: download_url.unwrap(),
        sampling_freq: sampling_freq.unwrap(),
        num_of_subjects: num_of_subjects.unwrap(),
        num_of_activities: num_of_activities.unwrap(),
        num_of_channels: num_of_channels.unwrap(),
        datasets_dir: PathBuf::from(datasets_dir.unwrap()),
        parser_id: parser_id.unwrap(),
        activity_names: activity_names.unwrap(),
        sensor_channels: sensor_channels.unwrap(),
        window_time: window_time.unwrap(),
        window_overlap: window_overlap.unwrap(),
        in_parallel: in_parallel.unwrap(),
        resampling_freq: resampling_freq.unwrap(),
        given_train_subj_ids: train.unwrap(),
        given_test_subj_ids: test.unwrap(),
        subj_cross_val_split_groups: groups.unwrap(),
        val_percentage: val_percentage.unwrap(),
        normalization: normalization.unwrap(),
        in_memory: in_memory.unwrap(),
        seed: seed.unwrap(),
        batch_size: batch_size.unwrap(),
        learning_rate: learning_rate.unwrap(),
        num_epochs: num_epochs.unwrap(),
    })
}

/// Checks that subject groups are pairwise disjoint.
pub fn check_groups_disjoint(groups: &[Vec<u32>]) -> std::result::Result<(), String> {
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
    for (gi, group) in groups.iter().enumerate() {
        for &s in group {
            if let Some(&prev) = owner.get(&s) {
                return Err(format!(
                    "groups {prev} and {gi} are not disjoint (subject {s} appears in both)"
                ));
            }
            owner.insert(s, gi);
        }
    }
    Ok(())
}

/// Parses and validates TOML text.
pub fn parse_config_str(text: &str) -> Result<WharConfig> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![FieldError {
            path: "<document>".into(),
            message: e.message().to_string(),
        }])
    })?;
    Ok(validate_config(&doc)?)
}

/// Loads a config file. A relative `datasets_dir` is resolved against the file's directory.
pub fn load_config_file(path: &Path) -> Result<WharConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text)?;
    if cfg.datasets_dir.is_relative() {
        if let Some(parent) = path.parent() {
            cfg.datasets_dir = parent.join(&cfg.datasets_dir);
        }
    }
    apply_env_overrides(&mut cfg);
    Ok(cfg)
}

fn apply_env_overrides(cfg: &mut WharConfig) {
    if let Some(dir) = std::env::var_os(DATASETS_DIR_ENV) {
        if !dir.is_empty() {
            cfg.datasets_dir = PathBuf::from(dir);
        }
    }
}

const BUILTIN_CONFIGS: &[(&str, &str)] = &[
    ("uci_har", include_str!("../configs/uci_har.toml")),
    ("wisdm", include_str!("../configs/wisdm.toml")),
    ("mhealth", include_str!("../configs/mhealth.toml")),
    ("pamap2", include_str!("../configs/pamap2.toml")),
    ("opportunity", include_str!("../configs/opportunity.toml")),
    ("motion_sense", include_str!("../configs/motion_sense.toml")),
    ("dsads", include_str!("../configs/dsads.toml")),
    ("daphnet", include_str!("../configs/daphnet.toml")),
    ("har_sense", include_str!("../configs/har_sense.toml")),
];

pub fn builtin_ids() -> Vec<&'static str> {
    BUILTIN_CONFIGS.iter().map(|(id, _)| *id).collect()
}

/// Returns the registered config for a built-in dataset.
pub fn get_builtin_config(dataset_id: &str) -> Result<WharConfig> {
    let (_, text) = BUILTIN_CONFIGS
        .iter()
        .find(|(id, _)| *id == dataset_id)
        .ok_or_else(|| Error::UnknownDataset {
            id: dataset_id.to_string(),
            available: builtin_ids().iter().map(|s| s.to_string()).collect(),
        })?;
    let mut cfg = parse_config_str(text)?;
    apply_env_overrides(&mut cfg);
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Download,
    Standardize,
    Windowing,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Download, Stage::Standardize, Stage::Windowing];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Download => "download",
            Stage::Standardize => "standardize",
            Stage::Windowing => "windowing",
        }
    }

    /// This stage and every stage after it.
    pub fn and_downstream(self) -> &'static [Stage] {
        match self {
            Stage::Download => &Stage::ALL,
            Stage::Standardize => &Stage::ALL[1..],
            Stage::Windowing => &Stage::ALL[2..],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StageHash {
    pub stage: Stage,
    /// Lowercase hex SHA-256.
    pub digest: String,
}

/// A value in the canonical hashing form.
enum Canon {
    Str(String),
    Num(f64),
    Int(u64),
    Null,
    StrList(Vec<String>),
}

impl Canon {
    fn render(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            Canon::Str(s) => out.push_str(&serde_json::to_string(s).unwrap()),
            // `Display` for f64 is the shortest decimal that round-trips.
            Canon::Num(x) => write!(out, "{x}").unwrap(),
            Canon::Int(i) => write!(out, "{i}").unwrap(),
            Canon::Null => out.push_str("null"),
            Canon::StrList(items) => {
                out.push('[');
                for (i, s) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(s).unwrap());
                }
                out.push(']');
            }
        }
    }
}

fn contributing_fields(
    cfg: &WharConfig,
    stage: Stage,
    parser_version: u32,
) -> BTreeMap<&'static str, Canon> {
    let mut fields = BTreeMap::new();
    match stage {
        Stage::Download => {
            fields.insert("dataset_id", Canon::Str(cfg.dataset_id.clone()));
            fields.insert("download_url", Canon::Str(cfg.download_url.clone()));
        }
        Stage::Standardize => {
            let upstream = stage_hash(cfg, Stage::Download, parser_version);
            fields.insert("upstream", Canon::Str(upstream.digest));
            fields.insert("parser_id", Canon::Str(cfg.parser_id.clone()));
            fields.insert("parser_version", Canon::Int(parser_version as u64));
        }
        Stage::Windowing => {
            let upstream = stage_hash(cfg, Stage::Standardize, parser_version);
            fields.insert("upstream", Canon::Str(upstream.digest));
            fields.insert("activity_names", Canon::StrList(cfg.activity_names.clone()));
            fields.insert(
                "sensor_channels",
                Canon::StrList(cfg.sensor_channels.clone()),
            );
            fields.insert(
                "resampling_freq",
                cfg.resampling_freq.map_or(Canon::Null, Canon::Num),
            );
            // Window length depends on the native rate when no resampling is set.
            fields.insert("sampling_freq", Canon::Num(cfg.sampling_freq));
            fields.insert("window_time", Canon::Num(cfg.window_time));
            fields.insert("window_overlap", Canon::Num(cfg.window_overlap));
        }
    }
    fields
}

/// Canonical text that a stage digest is computed over.
pub fn canonical_stage_input(cfg: &WharConfig, stage: Stage, parser_version: u32) -> String {
    let mut out = format!("stage={}\n", stage.as_str());
    for (key, value) in contributing_fields(cfg, stage, parser_version) {
        out.push_str(key);
        out.push('=');
        value.render(&mut out);
        out.push('\n');
    }
    out
}

/// Digest over exactly the config fields (and parser version) that influence `stage`.
pub fn stage_hash(cfg: &WharConfig, stage: Stage, parser_version: u32) -> StageHash {
    let canonical = canonical_stage_input(cfg, stage, parser_version);
    let digest = Sha256::digest(canonical.as_bytes());
    StageHash {
        stage,
        digest: format!("{digest:x}"),
    }
}
