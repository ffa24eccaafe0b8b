//! Deterministic synthetic dataset for offline runs, plus a parser for its raw CSV form.
//!
//! Raw layout written by [`write_synthetic_raw`]:
//!
//! ```text
//! activities.csv   activity_id,activity_name
//! data.csv         subject_id,activity_name,timestamp_us,<channel>...
//! ```
//!
//! `data.csv` rows are grouped into sessions on (subject, activity) change.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Parser, ParserOutput};
use crate::config::{Normalization, WharConfig};
use crate::error::{Error, Result};
use crate::model::{ActivityMetadata, SessionData, SessionMetadata};

pub const PARSER_ID: &str = "synthetic_csv";
pub const NOISE_STD: f64 = 0.05;

const ACTIVITY_NAMES: [&str; 8] = [
    "walking",
    "sitting",
    "laying",
    "standing",
    "jogging",
    "cycling",
    "upstairs",
    "downstairs",
];
const CHANNEL_NAMES: [&str; 6] = ["acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_subjects: u32,
    pub num_activities: u32,
    pub duration_s: f64,
    pub freq: f64,
    pub num_channels: u32,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn rows_per_session(&self) -> usize {
        (self.duration_s * self.freq).round() as usize
    }

    pub fn activity_name(a: u32) -> String {
        ACTIVITY_NAMES
            .get(a as usize)
            .map_or_else(|| format!("activity_{a}"), |s| s.to_string())
    }

    pub fn channel_name(c: u32) -> String {
        CHANNEL_NAMES
            .get(c as usize)
            .map_or_else(|| format!("ch_{c}"), |s| s.to_string())
    }
}

/// One session per (subject, activity); channel `c` of activity `a` is
/// `sin(2π(a+1)t + c)` plus seeded gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ParserOutput> {
    let bad = |m: &str| Err(Error::parse(PARSER_ID, m.to_string()));
    if spec.num_subjects == 0 || spec.num_activities == 0 || spec.num_channels == 0 {
        return bad("subjects, activities and channels must be positive");
    }
    if !(spec.duration_s > 0.0 && spec.freq > 0.0) {
        return bad("duration and frequency must be positive");
    }
    let rows = spec.rows_per_session();
    if rows < 2 {
        return bad("duration x frequency must give at least 2 samples");
    }
    let step_us = (1e6 / spec.freq).round() as i64;

    let activities: Vec<ActivityMetadata> = (0..spec.num_activities)
        .map(|a| ActivityMetadata {
            activity_id: a,
            activity_name: SyntheticSpec::activity_name(a),
        })
        .collect();
    let channel_names: Vec<String> = (0..spec.num_channels)
        .map(SyntheticSpec::channel_name)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let timestamps: Vec<i64> = (0..rows as i64).map(|i| i * step_us).collect();

    let mut sessions = Vec::with_capacity((spec.num_subjects * spec.num_activities) as usize);
    for subject in 0..spec.num_subjects {
        for activity in 0..spec.num_activities {
            let mut columns = vec![Vec::with_capacity(rows); spec.num_channels as usize];
            for i in 0..rows {
                let t = i as f64 / spec.freq;
                for (c, col) in columns.iter_mut().enumerate() {
                    let clean = (2.0 * PI * (activity as f64 + 1.0) * t + c as f64).sin();
                    col.push((clean + noise.sample(&mut rng)) as f32);
                }
            }
            let meta = SessionMetadata {
                session_id: subject * spec.num_activities + activity,
                subject_id: subject,
                activity_id: activity,
            };
            let data = SessionData {
                timestamps: timestamps.clone(),
                channel_names: channel_names.clone(),
                columns,
            };
            sessions.push((meta, data));
        }
    }
    Ok(ParserOutput {
        activities,
        sessions,
        issues: Vec::new(),
    })
}

/// Writes parser output in the raw CSV form read by [`SyntheticCsvParser`].
pub fn write_synthetic_raw(output: &ParserOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e: std::io::Error| Error::io(&p, e)
    };

    let path = dir.join("activities.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
    writeln!(w, "activity_id,activity_name").map_err(io(&path))?;
    for a in &output.activities {
        writeln!(w, "{},{}", a.activity_id, a.activity_name).map_err(io(&path))?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join("data.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
    let channels = output
        .sessions
        .first()
        .map(|(_, d)| d.channel_names.clone())
        .unwrap_or_default();
    writeln!(
        w,
        "subject_id,activity_name,timestamp_us,{}",
        channels.join(",")
    )
    .map_err(io(&path))?;
    for (meta, data) in &output.sessions {
        let name = &output
            .activities
            .iter()
            .find(|a| a.activity_id == meta.activity_id)
            .ok_or_else(|| Error::Invariant(format!("dangling activity {}", meta.activity_id)))?
            .activity_name;
        for (row, ts) in data.timestamps.iter().enumerate() {
            write!(w, "{},{},{}", meta.subject_id, name, ts).map_err(io(&path))?;
            for col in &data.columns {
                // `Display` for f32 is the shortest representation that round-trips.
                write!(w, ",{}", col[row]).map_err(io(&path))?;
            }
            writeln!(w).map_err(io(&path))?;
        }
    }
    w.flush().map_err(io(&path))
}

/// Generates a synthetic raw dataset under `out_dir/raw_source` and returns a matching config.
pub fn write_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<WharConfig> {
    let output = generate_synthetic(spec)?;
    let raw = out_dir.join("raw_source");
    write_synthetic_raw(&output, &raw)?;
    let raw = raw.canonicalize().map_err(|e| Error::io(&raw, e))?;
    let datasets_dir = out_dir.join("datasets");

    let n = spec.num_subjects;
    let n_test = if n >= 2 {
        ((n as f64) * 0.2).round().max(1.0) as u32
    } else {
        0
    };
    let channels: Vec<String> = (0..spec.num_channels)
        .map(SyntheticSpec::channel_name)
        .collect();
    Ok(WharConfig {
        dataset_id: "synthetic".into(),
        download_url: raw.display().to_string(),
        sampling_freq: spec.freq,
        num_of_subjects: n,
        num_of_activities: spec.num_activities,
        num_of_channels: spec.num_channels,
        datasets_dir,
        parser_id: PARSER_ID.into(),
        activity_names: output
            .activities
            .iter()
            .map(|a| a.activity_name.clone())
            .collect(),
        sensor_channels: channels,
        window_time: 2.56,
        window_overlap: 0.5,
        in_parallel: true,
        resampling_freq: None,
        given_train_subj_ids: (0..n - n_test).collect(),
        given_test_subj_ids: (n - n_test..n).collect(),
        subj_cross_val_split_groups: (0..n).map(|s| vec![s]).collect(),
        val_percentage: 0.1,
        normalization: Normalization::StdGlobal,
        in_memory: true,
        seed: spec.seed,
        batch_size: 64,
        learning_rate: 1e-4,
        num_epochs: 100,
    })
}

/// Reads the raw CSV form written by [`write_synthetic_raw`].
#[derive(Debug, Clone, Copy)]
pub struct SyntheticCsvParser;

impl Parser for SyntheticCsvParser {
    fn id(&self) -> &str {
        PARSER_ID
    }

    fn version(&self) -> u32 {
        1
    }

    fn parse(&self, raw_dir: &Path, _cfg: &WharConfig) -> Result<ParserOutput> {
        let perr = |m: String| Error::parse(PARSER_ID, m);
        let act_path = super::find_file(raw_dir, "activities.csv").ok_or_else(|| {
            perr(format!(
                "activities.csv not found under {}",
                raw_dir.display()
            ))
        })?;
        let data_path = act_path.with_file_name("data.csv");

        let mut activities = Vec::new();
        let mut rdr = csv::Reader::from_path(&act_path).map_err(|e| perr(e.to_string()))?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let id = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr(format!("{}: bad activity_id", act_path.display())))?;
            let name = rec.get(1).unwrap_or_default().to_string();
            activities.push(ActivityMetadata {
                activity_id: id,
                activity_name: name,
            });
        }

        let mut rdr = csv::Reader::from_path(&data_path).map_err(|e| perr(e.to_string()))?;
        let header = rdr.headers().map_err(|e| perr(e.to_string()))?.clone();
        if header.len() < 4 || &header[0] != "subject_id" || &header[2] != "timestamp_us" {
            return Err(perr(format!("{}: unexpected header", data_path.display())));
        }
        let channel_names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();

        let mut sessions: Vec<(SessionMetadata, SessionData)> = Vec::new();
        let mut current: Option<(u32, u32)> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let at = |m: &str| perr(format!("{} row {}: {m}", data_path.display(), line + 2));
            let subject: u32 = rec[0].parse().map_err(|_| at("bad subject_id"))?;
            let activity = activities
                .iter()
                .find(|a| a.activity_name == rec[1])
                .ok_or_else(|| at(&format!("unknown activity `{}`", &rec[1])))?
                .activity_id;
            let ts: i64 = rec[2].parse().map_err(|_| at("bad timestamp"))?;
            if current != Some((subject, activity)) {
                current = Some((subject, activity));
                sessions.push((
                    SessionMetadata {
                        session_id: sessions.len() as u32,
                        subject_id: subject,
                        activity_id: activity,
                    },
                    SessionData {
                        timestamps: Vec::new(),
                        channel_names: channel_names.clone(),
                        columns: vec![Vec::new(); channel_names.len()],
                    },
                ));
            }
            let data = &mut sessions.last_mut().expect("session pushed").1;
            data.timestamps.push(ts);
            for (c, col) in data.columns.iter_mut().enumerate() {
                let v: f32 = rec
                    .get(c + 3)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| at(&format!("bad value for `{}`", channel_names[c])))?;
                col.push(v);
            }
        }
        Ok(ParserOutput {
            activities,
            sessions,
            issues: Vec::new(),
        })
    }
}
