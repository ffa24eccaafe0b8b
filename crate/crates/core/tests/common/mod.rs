#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use whar::config::{Stage, WharConfig};
use whar::parsers::synthetic::SyntheticCsvParser;
use whar::parsers::synthetic::{write_synthetic_dataset, SyntheticSpec};
use whar::parsers::{Parser, ParserOutput, ParserRegistry};
use whar::pipeline::Pipeline;
use whar::storage::DatasetLayout;

pub fn synthetic_spec(subjects: u32, activities: u32, duration_s: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_subjects: subjects,
        num_activities: activities,
        duration_s,
        freq: 50.0,
        num_channels: 3,
        seed,
    }
}

pub fn synthetic(dir: &Path, subjects: u32, activities: u32, duration_s: f64) -> WharConfig {
    write_synthetic_dataset(&synthetic_spec(subjects, activities, duration_s, 0), dir).unwrap()
}

/// (modification time, size) of every file under `root`, keyed by relative path.
pub type Snapshot = BTreeMap<PathBuf, (SystemTime, u64)>;

pub fn snapshot(root: &Path) -> Snapshot {
    fn walk(root: &Path, dir: &Path, out: &mut Snapshot) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for e in entries {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let meta = fs::metadata(&path).unwrap();
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    (meta.modified().unwrap(), meta.len()),
                );
            }
        }
    }
    let mut out = Snapshot::new();
    walk(root, root, &mut out);
    out
}

/// Relative paths that are new, gone or rewritten between two snapshots.
pub fn changed(before: &Snapshot, after: &Snapshot) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = after
        .iter()
        .filter(|(p, v)| before.get(*p) != Some(v))
        .map(|(p, _)| p.clone())
        .collect();
    out.extend(before.keys().filter(|p| !after.contains_key(*p)).cloned());
    out.sort();
    out.dedup();
    out
}

/// Byte contents of every file under `dir`, keyed by relative path.
pub fn file_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    snapshot(dir)
        .into_keys()
        .map(|p| {
            let bytes = fs::read(dir.join(&p)).unwrap();
            (p, bytes)
        })
        .collect()
}

/// Let file modification times move past the previous run.
pub fn tick() {
    std::thread::sleep(std::time::Duration::from_millis(20));
}

// --- UCI-HAR-format fixture -------------------------------------------------

pub const UCI_SIGNALS: [&str; 9] = [
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
/// Subjects (1-based, as in the raw files) of the original test split.
pub const UCI_TEST_SUBJECTS: [u32; 9] = [2, 4, 9, 10, 12, 13, 18, 20, 24];

fn uci_value(channel: usize, run: usize, sample: usize) -> f32 {
    ((sample as f32) * 0.07 + channel as f32 + run as f32 * 0.3).sin()
}

/// Writes the directory layout of the UCI-HAR archive: 30 subjects, each doing
/// all 6 activities as runs of `rows_per_run` 128-sample rows (50% overlap).
pub fn write_uci_tree(root: &Path, rows_per_run: usize) {
    for split in ["train", "test"] {
        let dir = root.join(split).join("Inertial Signals");
        fs::create_dir_all(&dir).unwrap();
        let mut y = String::new();
        let mut subj = String::new();
        let mut sig = vec![String::new(); UCI_SIGNALS.len()];
        let mut run = 0;
        for s in 1..=30u32 {
            if UCI_TEST_SUBJECTS.contains(&s) != (split == "test") {
                continue;
            }
            for label in 1..=6u32 {
                for r in 0..rows_per_run {
                    writeln!(y, "{label}").unwrap();
                    writeln!(subj, "{s}").unwrap();
                    for (c, text) in sig.iter_mut().enumerate() {
                        for k in 0..128 {
                            write!(text, " {:e}", uci_value(c, run, r * 64 + k)).unwrap();
                        }
                        text.push('\n');
                    }
                }
                run += 1;
            }
        }
        fs::write(root.join(split).join(format!("y_{split}.txt")), y).unwrap();
        fs::write(root.join(split).join(format!("subject_{split}.txt")), subj).unwrap();
        for (c, name) in UCI_SIGNALS.iter().enumerate() {
            fs::write(dir.join(format!("{name}_{split}.txt")), &sig[c]).unwrap();
        }
    }
    fs::write(
        root.join("activity_labels.txt"),
        "1 WALKING\n2 WALKING_UPSTAIRS\n3 WALKING_DOWNSTAIRS\n4 SITTING\n5 STANDING\n6 LAYING\n",
    )
    .unwrap();
}

fn zip_dir(src: &Path, prefix: &str, dest: &Path) {
    let mut w = zip::ZipWriter::new(File::create(dest).unwrap());
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    let mut files: Vec<PathBuf> = snapshot(src).into_keys().collect();
    files.sort();
    for rel in files {
        let name = format!("{prefix}/{}", rel.to_string_lossy());
        w.start_file(name, opts).unwrap();
        w.write_all(&fs::read(src.join(&rel)).unwrap()).unwrap();
    }
    w.finish().unwrap();
}

/// Builds an archive shaped like the published one (a zip holding a zip of
/// `UCI HAR Dataset/`) and returns its path.
pub fn write_uci_archive(dir: &Path, rows_per_run: usize) -> PathBuf {
    let tree = dir.join("tree");
    write_uci_tree(&tree, rows_per_run);
    let inner = dir.join("UCI HAR Dataset.zip");
    zip_dir(&tree, "UCI HAR Dataset", &inner);
    let outer = dir.join("human+activity+recognition+using+smartphones.zip");
    let mut w = zip::ZipWriter::new(File::create(&outer).unwrap());
    w.start_file(
        "UCI HAR Dataset.zip",
        zip::write::SimpleFileOptions::default(),
    )
    .unwrap();
    w.write_all(&fs::read(&inner).unwrap()).unwrap();
    w.finish().unwrap();
    outer
}

// --- WISDM-format fixture ---------------------------------------------------

pub const WISDM_ACTIVITIES: [&str; 6] = [
    "Walking",
    "Jogging",
    "Upstairs",
    "Downstairs",
    "Sitting",
    "Standing",
];

/// Raw WISDM-style text: 36 users × 6 activities, `samples` records each at
/// 20 Hz, with `malformed` broken records spread through the file.
pub fn wisdm_text(samples: usize, malformed: usize) -> String {
    let mut text = String::new();
    let mut bad_left = malformed;
    let mut n = 0usize;
    for user in 1..=36u32 {
        for (a, act) in WISDM_ACTIVITIES.iter().enumerate() {
            let t0: u64 = 1_000_000_000_000 + (user as u64 * 10 + a as u64) * 1_000_000_000_000;
            for i in 0..samples {
                let ts = t0 + i as u64 * 50_000_000;
                let x = (i as f32 * 0.1).sin() * 10.0;
                writeln!(text, "{user},{act},{ts},{x:.6},{:.6},{:.6};", x / 2.0, 9.81).unwrap();
                n += 1;
                if bad_left > 0 && n.is_multiple_of(97) {
                    match bad_left % 3 {
                        0 => text.push('\n'),
                        1 => writeln!(text, "{user},{act},{ts},1.0,,2.0;").unwrap(),
                        _ => writeln!(text, "{user},{act},notatime,1.0,2.0,3.0;").unwrap(),
                    }
                    bad_left -= 1;
                }
            }
        }
    }
    assert_eq!(
        bad_left, 0,
        "fixture too small for {malformed} malformed records"
    );
    text
}

/// `WISDM_ar_latest.tar.gz` holding `WISDM_ar_v1.1/WISDM_ar_v1.1_raw.txt`.
pub fn write_wisdm_archive(dir: &Path, samples: usize, malformed: usize) -> PathBuf {
    let path = dir.join("WISDM_ar_latest.tar.gz");
    let data = wisdm_text(samples, malformed);
    let gz =
        flate2::write::GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
    let mut tar = tar::Builder::new(gz);
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_cksum();
    tar.append_data(
        &mut header,
        "WISDM_ar_v1.1/WISDM_ar_v1.1_raw.txt",
        data.as_bytes(),
    )
    .unwrap();
    tar.into_inner().unwrap().finish().unwrap();
    path
}

// --- cache matrix -------------------------------------------------------------

/// The synthetic parser reporting a different version.
pub struct Bumped(pub u32);

impl Parser for Bumped {
    fn id(&self) -> &str {
        SyntheticCsvParser.id()
    }
    fn version(&self) -> u32 {
        self.0
    }
    fn parse(&self, raw_dir: &Path, cfg: &WharConfig) -> whar::Result<ParserOutput> {
        SyntheticCsvParser.parse(raw_dir, cfg)
    }
}

fn registry(version: u32) -> ParserRegistry {
    let mut reg = ParserRegistry::builtin();
    reg.register(Bumped(version));
    reg
}

/// Top-level areas touched: directory names, or file names inside `metadata/`.
fn areas(paths: &[PathBuf]) -> Vec<String> {
    let mut out: Vec<String> = paths
        .iter()
        .map(|p| {
            let first = p
                .components()
                .next()
                .unwrap()
                .as_os_str()
                .to_string_lossy()
                .to_string();
            if first == "metadata" {
                p.file_name().unwrap().to_string_lossy().to_string()
            } else {
                first
            }
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

type Mutation = fn(&mut WharConfig);
/// (name, mutation, parser version, stages expected to rerun, areas expected to change)
type Case = (&'static str, Mutation, u32, Vec<Stage>, Vec<String>);

/// Runs the eight cache cases on a synthetic dataset under `dir`, judging
/// each by file modification times. Returns (case, outcome) pairs.
pub fn cache_matrix(dir: &Path) -> Vec<(String, Result<(), String>)> {
    let base = synthetic(dir, 3, 3, 10.0);
    let root = DatasetLayout::for_config(&base).root().to_path_buf();
    let run = |cfg: &WharConfig, version: u32| {
        Pipeline::new(cfg.clone())
            .with_registry(registry(version))
            .run_all()
            .map_err(|e| e.to_string())
    };
    let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let windowing = strs(&["cache_manifest.json", "window_metadata.parquet", "windows"]);
    let standardize = strs(&[
        "activity_metadata.parquet",
        "cache_manifest.json",
        "session_metadata.parquet",
        "sessions",
        "window_metadata.parquet",
        "windows",
    ]);

    let cases: Vec<Case> = vec![
        ("unchanged", |_| {}, 1, vec![], vec![]),
        (
            "window_overlap",
            |c| c.window_overlap = 0.25,
            1,
            vec![Stage::Windowing],
            windowing.clone(),
        ),
        (
            "window_time",
            |c| c.window_time = 2.0,
            1,
            vec![Stage::Windowing],
            windowing.clone(),
        ),
        (
            "sensor_channels",
            |c| c.sensor_channels.truncate(2),
            1,
            vec![Stage::Windowing],
            windowing.clone(),
        ),
        (
            "resampling_freq",
            |c| c.resampling_freq = Some(25.0),
            1,
            vec![Stage::Windowing],
            windowing.clone(),
        ),
        (
            "activity_names",
            |c| c.activity_names.truncate(2),
            1,
            vec![Stage::Windowing],
            windowing.clone(),
        ),
        (
            "parser_version",
            |_| {},
            2,
            vec![Stage::Standardize, Stage::Windowing],
            standardize,
        ),
        (
            "learning_rate",
            |c| c.learning_rate = 0.5,
            1,
            vec![],
            vec![],
        ),
    ];

    let mut results = Vec::new();
    for (name, mutate, version, stages, touched) in cases {
        let outcome = (|| {
            run(&base, 1)?;
            tick();
            let before = snapshot(&root);
            let mut cfg = base.clone();
            mutate(&mut cfg);
            let summary = run(&cfg, version)?;
            if summary.recomputed() != stages {
                return Err(format!(
                    "recomputed {:?}, expected {:?}",
                    summary.recomputed(),
                    stages
                ));
            }
            let got = areas(&changed(&before, &snapshot(&root)));
            if got != touched {
                return Err(format!("touched {got:?}, expected {touched:?}"));
            }
            Ok(())
        })();
        results.push((name.to_string(), outcome));
    }
    results
}
