//! WISDM activity prediction dataset (v1.1 raw accelerometer file).
//!
//! Records look like `user,activity,timestamp,x,y,z;`. The file is dirty:
//! blank lines, missing fields, several records on one line, repeated and
//! out-of-order timestamps. Malformed records are skipped and reported.

use std::collections::HashMap;
use std::path::Path;

use super::{Issue, Parser, ParserOutput};
use crate::config::WharConfig;
use crate::error::{Error, Result};
use crate::model::{ActivityMetadata, SessionData, SessionMetadata};

pub const PARSER_ID: &str = "wisdm";
pub const RAW_FILE: &str = "WISDM_ar_v1.1_raw.txt";
/// Parsing fails when more than this fraction of records is malformed.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;
/// Raw timestamps are nanoseconds.
pub const RAW_UNITS_PER_US: i64 = 1_000;
pub const CHANNELS: [&str; 3] = ["acc_x", "acc_y", "acc_z"];
/// Raw activity label and its standardized name; the position is the activity id.
pub const ACTIVITIES: [(&str, &str); 6] = [
    ("Walking", "walking"),
    ("Jogging", "jogging"),
    ("Upstairs", "upstairs"),
    ("Downstairs", "downstairs"),
    ("Sitting", "sitting"),
    ("Standing", "standing"),
];

/// Counters surfaced in the parser's issues.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WisdmStats {
    pub records: usize,
    pub malformed: usize,
    pub duplicate_timestamps: usize,
    pub out_of_order: usize,
    pub short_sessions: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct WisdmParser;

impl Parser for WisdmParser {
    fn id(&self) -> &str {
        PARSER_ID
    }

    fn version(&self) -> u32 {
        1
    }

    fn parse(&self, raw_dir: &Path, _cfg: &WharConfig) -> Result<ParserOutput> {
        let path = super::find_file(raw_dir, RAW_FILE).ok_or_else(|| {
            Error::parse(
                PARSER_ID,
                format!("{RAW_FILE} not found under {}", raw_dir.display()),
            )
        })?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8_lossy(&bytes);
        parse_text(&text).map(|(out, _)| out)
    }
}

struct Record {
    user: u32,
    activity: u32,
    ts_us: i64,
    xyz: [f32; 3],
}

fn parse_record(chunk: &str, labels: &HashMap<&str, u32>) -> Option<Record> {
    let mut fields: Vec<&str> = chunk.split(',').map(str::trim).collect();
    // Some records carry a trailing comma before the terminator.
    if fields.len() == 7 && fields[6].is_empty() {
        fields.pop();
    }
    if fields.len() != 6 {
        return None;
    }
    let user: u32 = fields[0].parse().ok().filter(|&u| u > 0)?;
    let activity = *labels.get(fields[1])?;
    let ts: i64 = fields[2].parse().ok()?;
    let mut xyz = [0f32; 3];
    for (v, f) in xyz.iter_mut().zip(&fields[3..]) {
        *v = f.parse().ok().filter(|x: &f32| x.is_finite())?;
    }
    Some(Record {
        user,
        activity,
        ts_us: ts / RAW_UNITS_PER_US,
        xyz,
    })
}

/// (user, activity, samples) of consecutive records.
type Run = (u32, u32, Vec<(i64, [f32; 3])>);

/// Parses the raw file contents; also returns the counters.
pub fn parse_text(text: &str) -> Result<(ParserOutput, WisdmStats)> {
    let labels: HashMap<&str, u32> = ACTIVITIES
        .iter()
        .enumerate()
        .map(|(i, (raw, _))| (*raw, i as u32))
        .collect();
    let mut stats = WisdmStats::default();
    let mut issues = Vec::new();

    let mut runs: Vec<Run> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            stats.records += 1;
            stats.malformed += 1;
            issues.push(Issue::warning(
                format!("line {}", lineno + 1),
                "skipped blank line",
            ));
            continue;
        }
        for chunk in line.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            stats.records += 1;
            let Some(rec) = parse_record(chunk, &labels) else {
                stats.malformed += 1;
                issues.push(Issue::warning(
                    format!("line {}", lineno + 1),
                    format!("skipped malformed record `{chunk}`"),
                ));
                continue;
            };
            match runs.last_mut() {
                Some((u, a, samples)) if *u == rec.user && *a == rec.activity => {
                    samples.push((rec.ts_us, rec.xyz))
                }
                _ => runs.push((rec.user, rec.activity, vec![(rec.ts_us, rec.xyz)])),
            }
        }
    }

    if stats.records > 0 && stats.malformed as f64 / stats.records as f64 > MAX_MALFORMED_FRACTION {
        return Err(Error::parse(
            PARSER_ID,
            format!(
                "{} of {} records malformed (limit {:.0}%)",
                stats.malformed,
                stats.records,
                MAX_MALFORMED_FRACTION * 100.0
            ),
        ));
    }

    let mut sessions = Vec::new();
    for (user, activity, samples) in runs {
        let mut ts = Vec::with_capacity(samples.len());
        let mut cols = [
            Vec::with_capacity(samples.len()),
            Vec::with_capacity(samples.len()),
            Vec::with_capacity(samples.len()),
        ];
        for (t, xyz) in samples {
            if let Some(&last) = ts.last() {
                // Keep the earlier sample when timestamps repeat or go backwards.
                if t == last {
                    stats.duplicate_timestamps += 1;
                    continue;
                }
                if t < last {
                    stats.out_of_order += 1;
                    continue;
                }
            }
            ts.push(t);
            for (col, v) in cols.iter_mut().zip(xyz) {
                col.push(v);
            }
        }
        if ts.len() < 2 {
            stats.short_sessions += 1;
            issues.push(Issue::warning(
                format!("user {user}"),
                format!(
                    "dropped a `{}` run with {} usable sample(s)",
                    ACTIVITIES[activity as usize].1,
                    ts.len()
                ),
            ));
            continue;
        }
        let t0 = ts[0];
        let meta = SessionMetadata {
            session_id: sessions.len() as u32,
            subject_id: user - 1,
            activity_id: activity,
        };
        let data = SessionData {
            timestamps: ts.into_iter().map(|t| t - t0).collect(),
            channel_names: CHANNELS.iter().map(|c| c.to_string()).collect(),
            columns: cols.into_iter().collect(),
        };
        sessions.push((meta, data));
    }

    issues.push(Issue::warning(
        "summary",
        format!(
            "{} malformed records skipped of {}; dropped {} duplicate-timestamp and {} out-of-order samples",
            stats.malformed, stats.records, stats.duplicate_timestamps, stats.out_of_order
        ),
    ));

    let activities = ACTIVITIES
        .iter()
        .enumerate()
        .map(|(i, (_, name))| ActivityMetadata {
            activity_id: i as u32,
            activity_name: name.to_string(),
        })
        .collect();
    Ok((
        ParserOutput {
            activities,
            sessions,
            issues,
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_records_one_session() {
        let text = "1,Walking,0,0.1,0.2,0.3;\n1,Walking,50000000,0.1,0.2,0.3;\n";
        let (out, stats) = parse_text(text).unwrap();
        assert_eq!(out.sessions.len(), 1);
        assert_eq!(out.sessions[0].1.timestamps, vec![0, 50_000]);
        assert_eq!(out.sessions[0].1.columns[2], vec![0.3, 0.3]);
        assert_eq!(stats.malformed, 0);
        assert_eq!(out.activities.len(), 6);
    }

    #[test]
    fn blank_line_is_skipped_and_reported() {
        let mut text = String::new();
        for i in 0..10 {
            if i == 4 {
                text.push('\n');
            }
            text.push_str(&format!(
                "3,Jogging,{},1.0,2.0,3.0;\n",
                1_000_000_000 + i * 50_000_000
            ));
        }
        let (out, stats) = parse_text(&text).unwrap();
        assert_eq!(out.sessions.len(), 1);
        assert_eq!(out.sessions[0].1.len(), 10);
        assert_eq!(stats.malformed, 1);
        let skipped: Vec<_> = out
            .issues
            .iter()
            .filter(|i| i.message.starts_with("skipped"))
            .collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].location, "line 5");
    }

    #[test]
    fn dirty_records() {
        let text = "\
33,Jogging,49105962326000,-0.6946377,12.680544,0.50395286;
33,Jogging,49106062271000,5.012288,11.264028,0.95342433;33,Jogging,49106112167000,4.903325,10.882658,-0.08172209;
33,Jogging,49106112167000,9.0,9.0,9.0;
33,Jogging,49106162000000,1.0,,2.0;
33,Jogging,49106212000000,1.0,2.0,3.0,;
33,Walking,1,2,3,4;
34,Walking,1000,1,2,3;
34,Walking,51000,1,2,3;
34,Walking,21000,1,2,3;
";
        let (out, stats) = parse_text(text).unwrap();
        assert_eq!(stats.records, 10);
        assert_eq!(stats.malformed, 1);
        assert_eq!(stats.duplicate_timestamps, 1);
        assert_eq!(stats.out_of_order, 1);
        assert_eq!(stats.short_sessions, 1);
        let shapes: Vec<_> = out
            .sessions
            .iter()
            .map(|(m, d)| (m.session_id, m.subject_id, m.activity_id, d.len()))
            .collect();
        assert_eq!(shapes, vec![(0, 32, 1, 4), (1, 33, 0, 2)]);
        assert_eq!(
            out.sessions[0].1.timestamps,
            vec![0, 99_945, 149_841, 249_674]
        );
        assert_eq!(out.sessions[1].1.timestamps, vec![0, 50]);
    }

    #[test]
    fn too_many_malformed_records() {
        let mut text = String::new();
        for i in 0..8 {
            text.push_str(&format!("1,Walking,{i}000000,1,2,3;\n"));
        }
        text.push_str("garbage\n1,Swimming,0,1,2,3;\n");
        let err = parse_text(&text).unwrap_err();
        assert!(
            err.to_string().contains("2 of 10 records malformed"),
            "{err}"
        );
    }

    #[test]
    fn sessions_split_on_user_or_activity_change() {
        let text = "\
1,Walking,0,1,1,1;
1,Walking,50000000,1,1,1;
1,Sitting,100000000,1,1,1;
1,Sitting,150000000,1,1,1;
2,Sitting,0,1,1,1;
2,Sitting,50000000,1,1,1;
1,Walking,0,1,1,1;
1,Walking,50000000,1,1,1;
";
        let (out, _) = parse_text(text).unwrap();
        let keys: Vec<_> = out
            .sessions
            .iter()
            .map(|(m, _)| (m.subject_id, m.activity_id))
            .collect();
        assert_eq!(keys, vec![(0, 0), (0, 4), (1, 4), (0, 0)]);
    }
}
