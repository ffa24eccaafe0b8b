//! UCI-HAR ("Human Activity Recognition Using Smartphones").
//!
//! The archive ships pre-windowed data: each row of the inertial-signal files
//! is a 128-sample window overlapping its predecessor by 50%. Continuous
//! sessions are rebuilt by keeping the first 64 samples of every row in a run
//! and the full final row.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Parser, ParserOutput};
use crate::config::WharConfig;
use crate::error::{Error, Result};
use crate::model::{ActivityMetadata, SessionData, SessionMetadata};

pub const PARSER_ID: &str = "uci_har";
pub const ROW_LEN: usize = 128;
pub const HOP: usize = 64;
pub const SAMPLE_PERIOD_US: i64 = 20_000;
pub const SPLITS: [&str; 2] = ["train", "test"];
pub const SIGNALS: [&str; 9] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];
/// Raw label value `i + 1` maps to `LABELS[i]`.
pub const LABELS: [&str; 6] = [
    "walking",
    "walking_upstairs",
    "walking_downstairs",
    "sitting",
    "standing",
    "laying",
];

#[derive(Debug, Clone, Copy)]
pub struct UciHarParser;

impl Parser for UciHarParser {
    fn id(&self) -> &str {
        PARSER_ID
    }

    fn version(&self) -> u32 {
        1
    }

    fn parse(&self, raw_dir: &Path, _cfg: &WharConfig) -> Result<ParserOutput> {
        let root = super::find_dir(raw_dir, &|p| {
            p.join("train").join("Inertial Signals").is_dir()
        })
        .ok_or_else(|| {
            Error::parse(
                PARSER_ID,
                format!(
                    "no `train/Inertial Signals` directory under {}",
                    raw_dir.display()
                ),
            )
        })?;

        let activities = LABELS
            .iter()
            .enumerate()
            .map(|(i, name)| ActivityMetadata {
                activity_id: i as u32,
                activity_name: name.to_string(),
            })
            .collect();

        let mut sessions = Vec::new();
        for split in SPLITS {
            parse_split(&root, split, &mut sessions)?;
        }
        Ok(ParserOutput {
            activities,
            sessions,
            issues: Vec::new(),
        })
    }
}

fn split_file(root: &Path, split: &str, name: &str) -> PathBuf {
    root.join(split).join(format!("{name}_{split}.txt"))
}

fn signal_file(root: &Path, split: &str, signal: &str) -> PathBuf {
    root.join(split)
        .join("Inertial Signals")
        .join(format!("{signal}_{split}.txt"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::parse(PARSER_ID, format!("missing file {}", path.display()))
        }
        _ => Error::io(path, e),
    })
}

fn read_int_vector(path: &Path) -> Result<Vec<u32>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| {
                Error::parse(
                    PARSER_ID,
                    format!(
                        "{} line {}: expected integer, got `{}`",
                        path.display(),
                        i + 1,
                        l.trim()
                    ),
                )
            })
        })
        .collect()
}

/// Reads a file of fixed-width rows, each holding [`ROW_LEN`] floats.
fn read_signal_rows(path: &Path) -> Result<Vec<Vec<f32>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split_whitespace()
            .map(|t| t.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::parse(PARSER_ID, format!("{} line {}: {e}", path.display(), i + 1))
            })?;
        if row.len() != ROW_LEN {
            return Err(Error::parse(
                PARSER_ID,
                format!(
                    "{} line {}: expected {ROW_LEN} values, found {}",
                    path.display(),
                    i + 1,
                    row.len()
                ),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_split(
    root: &Path,
    split: &str,
    sessions: &mut Vec<(SessionMetadata, SessionData)>,
) -> Result<()> {
    let labels = read_int_vector(&split_file(root, split, "y"))?;
    let subjects = read_int_vector(&split_file(root, split, "subject"))?;
    if labels.len() != subjects.len() {
        return Err(Error::parse(
            PARSER_ID,
            format!(
                "{split}: {} labels but {} subject entries",
                labels.len(),
                subjects.len()
            ),
        ));
    }
    for (i, &label) in labels.iter().enumerate() {
        if label == 0 || label as usize > LABELS.len() {
            return Err(Error::parse(
                PARSER_ID,
                format!("{split} row {}: unknown label value {label}", i + 1),
            ));
        }
    }
    if let Some(i) = subjects.iter().position(|&s| s == 0) {
        return Err(Error::parse(
            PARSER_ID,
            format!("{split} row {}: subject ids start at 1", i + 1),
        ));
    }

    let mut signals = Vec::with_capacity(SIGNALS.len());
    for signal in SIGNALS {
        let rows = read_signal_rows(&signal_file(root, split, signal))?;
        if rows.len() != labels.len() {
            return Err(Error::parse(
                PARSER_ID,
                format!(
                    "{split}: {signal} has {} rows, expected {}",
                    rows.len(),
                    labels.len()
                ),
            ));
        }
        signals.push(rows);
    }

    let mut start = 0;
    while start < labels.len() {
        let key = (subjects[start], labels[start]);
        let mut end = start + 1;
        while end < labels.len() && (subjects[end], labels[end]) == key {
            end += 1;
        }
        let columns: Vec<Vec<f32>> = signals
            .iter()
            .map(|rows| deoverlap(&rows[start..end]))
            .collect();
        let n = columns[0].len() as i64;
        let meta = SessionMetadata {
            session_id: sessions.len() as u32,
            subject_id: key.0 - 1,
            activity_id: key.1 - 1,
        };
        let data = SessionData {
            timestamps: (0..n).map(|i| i * SAMPLE_PERIOD_US).collect(),
            channel_names: SIGNALS.iter().map(|s| s.to_string()).collect(),
            columns,
        };
        sessions.push((meta, data));
        start = end;
    }
    Ok(())
}

/// Concatenates half-overlapping rows of one run into a continuous signal.
pub fn deoverlap(rows: &[Vec<f32>]) -> Vec<f32> {
    let Some((last, head)) = rows.split_last() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(head.len() * HOP + last.len());
    for row in head {
        out.extend_from_slice(&row[..HOP]);
    }
    out.extend_from_slice(last);
    out
}
