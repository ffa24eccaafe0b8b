mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::{file_bytes, synthetic};
use whar::config::Stage;
use whar::parsers::synthetic::SyntheticCsvParser;
use whar::parsers::Parser;
use whar::pipeline::{Pipeline, RunOptions};
use whar::storage::{self, read_manifest, DatasetLayout};

#[test]
fn cache_matrix() {
    let dir = tempfile::tempdir().unwrap();
    for (case, outcome) in common::cache_matrix(dir.path()) {
        assert!(outcome.is_ok(), "{case}: {}", outcome.unwrap_err());
    }
}

#[test]
fn download_url_change_recomputes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 2, 2, 6.0);
    Pipeline::new(cfg.clone()).run_all().unwrap();
    let copy = dir.path().join("copy");
    std::fs::create_dir_all(&copy).unwrap();
    for f in ["activities.csv", "data.csv"] {
        std::fs::copy(dir.path().join("raw_source").join(f), copy.join(f)).unwrap();
    }
    let mut moved = cfg.clone();
    moved.download_url = copy.display().to_string();
    let summary = Pipeline::new(moved).run_all().unwrap();
    assert_eq!(summary.recomputed(), Stage::ALL.to_vec());
}

#[test]
fn parallel_and_sequential_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 4, 3, 20.0);
    let root = DatasetLayout::for_config(&cfg).root().to_path_buf();
    let run = |parallel: bool| {
        Pipeline::new(cfg.clone())
            .with_options(RunOptions {
                force: true,
                parallel: Some(parallel),
                jobs: Some(4),
            })
            .run_all()
            .unwrap();
        let mut bytes = file_bytes(&root.join("metadata"));
        bytes.extend(file_bytes(&root.join("windows")));
        bytes.extend(file_bytes(&root.join("sessions")));
        bytes
    };
    let seq = run(false);
    let par = run(true);
    assert!(seq.len() > 100);
    assert_eq!(
        seq.keys().collect::<Vec<_>>(),
        par.keys().collect::<Vec<_>>()
    );
    for (path, bytes) in &seq {
        assert!(bytes == &par[path], "{} differs", path.display());
    }
}

#[test]
fn failed_windowing_leaves_no_digest_and_is_redone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 3, 2, 10.0);
    let layout = DatasetLayout::for_config(&cfg);
    let p = Pipeline::new(cfg.clone());
    let clean = p.run_all().unwrap().index;

    // Corrupt one session so the next windowing run fails part-way.
    let victim = layout.session_path(4);
    let good = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, b"not parquet").unwrap();
    let mut changed_cfg = cfg.clone();
    changed_cfg.window_overlap = 0.25;
    let err = Pipeline::new(changed_cfg.clone()).run_all().unwrap_err();
    assert!(err.to_string().starts_with("session 4:"), "{err}");
    let manifest = read_manifest(&layout).unwrap();
    assert!(manifest.digest(Stage::Windowing).is_none());
    assert!(manifest.digest(Stage::Standardize).is_some());

    std::fs::write(&victim, good).unwrap();
    let summary = p.run_all().unwrap();
    assert_eq!(summary.recomputed(), vec![Stage::Windowing]);
    assert_eq!(summary.index.windows, clean.windows);
    assert_eq!(
        storage::read_window_metadata(&layout).unwrap().len(),
        clean.windows.len()
    );
}

#[test]
fn killed_windowing_is_redone_completely() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 6, 6, 60.0);
    let layout = DatasetLayout::for_config(&cfg);
    let config_path = dir.path().join("synthetic.toml");
    std::fs::write(&config_path, cfg.to_toml().unwrap()).unwrap();
    let p = Pipeline::new(cfg.clone()).with_options(RunOptions {
        parallel: Some(false),
        ..Default::default()
    });
    p.ensure_standardized().unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_whar"))
        .args(["preprocess", "--sequential", "--config"])
        .arg(&config_path)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let windows_dir = layout.windows_dir();
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let n = std::fs::read_dir(&windows_dir).map_or(0, |d| d.count());
        if n >= 20 {
            break;
        }
        assert!(
            child.try_wait().unwrap().is_none(),
            "preprocess ended before it could be killed"
        );
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(2));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(read_manifest(&layout)
        .unwrap()
        .digest(Stage::Windowing)
        .is_none());
    let summary = p.run_all().unwrap();
    assert_eq!(summary.recomputed(), vec![Stage::Windowing]);
    // 6 × 6 sessions of 3000 samples, 45 windows each.
    assert_eq!(summary.index.windows.len(), 36 * 45);
    let files = std::fs::read_dir(&windows_dir).unwrap().count();
    assert_eq!(files, 36 * 45);
}

#[test]
fn stored_sessions_round_trip_parser_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 2, 3, 5.0);
    let layout = DatasetLayout::for_config(&cfg);
    let p = Pipeline::new(cfg.clone());
    let index = p.ensure_standardized().unwrap();
    let parsed = SyntheticCsvParser.parse(&layout.raw_dir(), &cfg).unwrap();
    assert_eq!(index.sessions, parsed.session_metadata());
    for (meta, data) in &parsed.sessions {
        let stored = storage::read_session(&layout, meta.session_id).unwrap();
        assert_eq!(&stored, data);
    }
}
