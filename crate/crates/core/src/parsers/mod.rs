//! Dataset-specific parsers converting raw downloads into the standardized format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::WharConfig;
use crate::error::{Error, Result};
use crate::model::{ActivityMetadata, SessionData, SessionMetadata};

pub mod stub;
pub mod synthetic;
pub mod uci_har;
pub mod wisdm;

pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Standardized parser output: activity table plus one entry per session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParserOutput {
    pub activities: Vec<ActivityMetadata>,
    pub sessions: Vec<(SessionMetadata, SessionData)>,
    /// Non-fatal findings (skipped lines, dropped samples).
    pub issues: Vec<Issue>,
}

impl ParserOutput {
    pub fn session_metadata(&self) -> Vec<SessionMetadata> {
        self.sessions.iter().map(|(m, _)| *m).collect()
    }

    pub fn subject_ids(&self) -> BTreeSet<u32> {
        self.sessions.iter().map(|(m, _)| m.subject_id).collect()
    }
}

pub trait Parser: Send + Sync {
    fn id(&self) -> &str;

    /// Bumped whenever parser behaviour changes, invalidating cached sessions.
    fn version(&self) -> u32;

    fn parse(&self, raw_dir: &Path, cfg: &WharConfig) -> Result<ParserOutput>;
}

/// Parsers keyed by `parser_id`.
#[derive(Clone, Default)]
pub struct ParserRegistry {
    parsers: BTreeMap<String, Arc<dyn Parser>>,
}

impl ParserRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with every parser shipped in this crate.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(uci_har::UciHarParser);
        reg.register(wisdm::WisdmParser);
        reg.register(synthetic::SyntheticCsvParser);
        for id in stub::STUB_PARSER_IDS {
            reg.register(stub::NotImplementedParser::new(id));
        }
        reg
    }

    /// Adds a parser, replacing any with the same id.
    pub fn register(&mut self, parser: impl Parser + 'static) {
        self.parsers
            .insert(parser.id().to_string(), Arc::new(parser));
    }

    pub fn get(&self, parser_id: &str) -> Result<Arc<dyn Parser>> {
        self.parsers
            .get(parser_id)
            .cloned()
            .ok_or_else(|| Error::UnknownParser(parser_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.parsers.keys().map(String::as_str)
    }
}

impl fmt::Debug for ParserRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.parsers.keys()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl Issue {
    pub fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        Issue {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev} [{}]: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {issue}")?;
        }
        Ok(())
    }
}

/// Checks parser output against the standardized-format constraints.
///
/// Parser-reported issues are carried over into the report.
pub fn validate_standardized(output: &ParserOutput, cfg: &WharConfig) -> ValidationReport {
    let mut issues = output.issues.clone();

    let activity_ids: HashSet<u32> = output.activities.iter().map(|a| a.activity_id).collect();
    let names: HashSet<&str> = output
        .activities
        .iter()
        .map(|a| a.activity_name.as_str())
        .collect();
    if output.activities.len() > cfg.num_of_activities as usize {
        issues.push(Issue::error(
            "activities",
            format!(
                "{} activities exceed num_of_activities = {}",
                output.activities.len(),
                cfg.num_of_activities
            ),
        ));
    }
    for name in &cfg.activity_names {
        if !names.contains(name.as_str()) {
            issues.push(Issue::error(
                "activities",
                format!("configured activity `{name}` is not in the parsed activity table"),
            ));
        }
    }

    let subjects = output.subject_ids();
    if subjects.len() > cfg.num_of_subjects as usize {
        issues.push(Issue::error(
            "sessions",
            format!(
                "{} distinct subjects exceed num_of_subjects = {}",
                subjects.len(),
                cfg.num_of_subjects
            ),
        ));
    }
    if output.sessions.is_empty() {
        issues.push(Issue::error("sessions", "parser produced no sessions"));
    }

    let mut seen_sessions = HashSet::new();
    for (meta, data) in &output.sessions {
        let loc = format!("session {}", meta.session_id);
        if !seen_sessions.insert(meta.session_id) {
            issues.push(Issue::error(&loc, "duplicate session_id"));
        }
        if !activity_ids.contains(&meta.activity_id) {
            issues.push(Issue::error(
                &loc,
                format!(
                    "activity_id {} is not in the activity table",
                    meta.activity_id
                ),
            ));
        }
        if data.timestamps.len() < 2 {
            issues.push(Issue::error(
                &loc,
                format!(
                    "session has {} rows, needs at least 2",
                    data.timestamps.len()
                ),
            ));
        }
        if data.timestamps.first().is_some_and(|&t| t != 0) {
            issues.push(Issue::error(&loc, "first timestamp is not 0"));
        }
        if let Some(i) = data.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            issues.push(Issue::error(
                &loc,
                format!("timestamps not strictly increasing at row {}", i + 1),
            ));
        }
        for channel in &cfg.sensor_channels {
            if !data.channel_names.contains(channel) {
                issues.push(Issue::error(
                    &loc,
                    format!("missing configured channel `{channel}`"),
                ));
            }
        }
        for (name, col) in data.channel_names.iter().zip(&data.columns) {
            let chan_loc = format!("session {}, channel {name}", meta.session_id);
            if col.len() != data.timestamps.len() {
                issues.push(Issue::error(
                    &chan_loc,
                    format!(
                        "{} values for {} timestamps",
                        col.len(),
                        data.timestamps.len()
                    ),
                ));
            }
            let missing = col.iter().filter(|v| !v.is_finite()).count();
            if missing > 0 {
                issues.push(Issue::error(
                    &chan_loc,
                    format!("{missing} missing or non-finite values"),
                ));
            }
        }
    }
    ValidationReport { issues }
}

/// Finds the first file named `name` below `root` (depth-first, sorted).
pub(crate) fn find_file(root: &Path, name: &str) -> Option<PathBuf> {
    find(root, &|p: &Path| {
        p.is_file() && p.file_name().is_some_and(|n| n == name)
    })
}

/// Finds the first directory below `root` (inclusive) satisfying `pred`.
pub(crate) fn find_dir(root: &Path, pred: &dyn Fn(&Path) -> bool) -> Option<PathBuf> {
    find(root, &|p: &Path| p.is_dir() && pred(p))
}

fn find(root: &Path, pred: &dyn Fn(&Path) -> bool) -> Option<PathBuf> {
    if pred(root) {
        return Some(root.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    // Skip macOS resource-fork trees shipped inside some archives.
    entries.retain(|p| p.file_name().is_some_and(|n| n != "__MACOSX"));
    for p in &entries {
        if pred(p) {
            return Some(p.clone());
        }
    }
    entries
        .iter()
        .filter(|p| p.is_dir())
        .find_map(|p| find(p, pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::get_builtin_config;

    fn tiny_output() -> ParserOutput {
        let spec = SyntheticSpec {
            num_subjects: 2,
            num_activities: 2,
            duration_s: 1.0,
            freq: 10.0,
            num_channels: 3,
            seed: 0,
        };
        generate_synthetic(&spec).unwrap()
    }

    fn tiny_cfg(output: &ParserOutput) -> WharConfig {
        let mut cfg = get_builtin_config("uci_har").unwrap();
        cfg.activity_names = output
            .activities
            .iter()
            .map(|a| a.activity_name.clone())
            .collect();
        cfg.sensor_channels = output.sessions[0].1.channel_names.clone();
        cfg
    }

    #[test]
    fn valid_synthetic_output_is_ok() {
        let out = tiny_output();
        let report = validate_standardized(&out, &tiny_cfg(&out));
        assert!(report.ok(), "{report}");
    }

    #[test]
    fn nan_sample_reported_at_session_and_channel() {
        let mut out = tiny_output();
        let cfg = tiny_cfg(&out);
        out.sessions[1].1.columns[2][3] = f32::NAN;
        let report = validate_standardized(&out, &cfg);
        assert!(!report.ok());
        let loc = format!("session 1, channel {}", out.sessions[1].1.channel_names[2]);
        assert!(report.errors().any(|i| i.location == loc), "{report}");
    }

    #[test]
    fn too_many_subjects() {
        let spec = SyntheticSpec {
            num_subjects: 31,
            num_activities: 1,
            duration_s: 0.5,
            freq: 10.0,
            num_channels: 1,
            seed: 0,
        };
        let out = generate_synthetic(&spec).unwrap();
        let cfg = tiny_cfg(&out);
        assert_eq!(cfg.num_of_subjects, 30);
        let report = validate_standardized(&out, &cfg);
        assert!(report
            .errors()
            .any(|i| i.message.contains("31 distinct subjects")));
    }

    #[test]
    fn missing_channel_and_activity_reported() {
        let out = tiny_output();
        let mut cfg = tiny_cfg(&out);
        cfg.sensor_channels.push("mag_x".into());
        cfg.activity_names.push("swimming".into());
        let report = validate_standardized(&out, &cfg);
        assert!(report.errors().any(|i| i.message.contains("mag_x")));
        assert!(report.errors().any(|i| i.message.contains("swimming")));
    }

    #[test]
    fn registry_lookup() {
        let reg = ParserRegistry::builtin();
        assert_eq!(reg.get("uci_har").unwrap().id(), "uci_har");
        assert!(reg.get("pamap2").is_ok());
        assert!(matches!(reg.get("nope"), Err(Error::UnknownParser(_))));
    }
}
