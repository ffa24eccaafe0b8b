use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use whar::config::{builtin_ids, get_builtin_config, load_config_file, Stage, WharConfig};
use whar::parsers::synthetic::{write_synthetic_dataset, SyntheticSpec};
use whar::parsers::ValidationReport;
use whar::pipeline::{Pipeline, RunOptions, StageState};
use whar::transforms::WindowGeometry;
use whar::Error;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NETWORK: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "whar",
    version,
    about = "Download, standardize and window wearable HAR datasets"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch and extract the raw dataset.
    Download(Target),
    /// Run download, standardization and windowing.
    Preprocess {
        #[command(flatten)]
        target: Target,
        /// Process sessions one at a time.
        #[arg(long, conflicts_with = "parallel")]
        sequential: bool,
        /// Process sessions on a worker pool.
        #[arg(long)]
        parallel: bool,
        /// Worker count (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Ignore cached stages.
        #[arg(long)]
        force: bool,
    },
    /// Summarize a dataset configuration and its cache state.
    Info {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        json: bool,
    },
    /// Check the configuration and, if present, the standardized sessions.
    Validate {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        json: bool,
    },
    /// Time sequential against parallel windowing.
    Bench {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic raw dataset and a matching config file.
    GenerateSynthetic {
        #[arg(long, default_value_t = 6)]
        subjects: u32,
        #[arg(long, default_value_t = 6)]
        activities: u32,
        /// Seconds per session.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 50.0)]
        freq: f64,
        #[arg(long, default_value_t = 3)]
        channels: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the built-in dataset ids.
    List,
}

#[derive(Args)]
struct Target {
    /// Built-in dataset id or path to a config file.
    #[arg(required_unless_present = "config", conflicts_with = "config")]
    dataset: Option<String>,
    /// Path to a config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Target {
    fn load(&self) -> Result<WharConfig, Error> {
        if let Some(path) = &self.config {
            return load_config_file(path);
        }
        let name = self.dataset.as_deref().unwrap_or_default();
        if builtin_ids().contains(&name) {
            return get_builtin_config(name);
        }
        let path = Path::new(name);
        if path.is_file() {
            return load_config_file(path);
        }
        get_builtin_config(name)
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config() {
        EXIT_CONFIG
    } else if err.is_network() {
        EXIT_NETWORK
    } else if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_OTHER
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Download(target) => {
            let raw = Pipeline::new(target.load()?).ensure_downloaded()?;
            println!("{}", raw.display());
            Ok(0)
        }
        Command::Preprocess {
            target,
            sequential,
            parallel,
            jobs,
            force,
        } => {
            let options = RunOptions {
                force,
                parallel: if sequential {
                    Some(false)
                } else if parallel {
                    Some(true)
                } else {
                    None
                },
                jobs,
            };
            let pipeline = Pipeline::new(target.load()?).with_options(options);
            let summary = pipeline.run_all()?;
            for (stage, hit) in &summary.cache_hits {
                eprintln!("{stage}: {}", if *hit { "cached" } else { "computed" });
            }
            println!(
                "{} sessions, {} windows",
                summary.index.sessions.len(),
                summary.index.windows.len()
            );
            Ok(0)
        }
        Command::Info { target, json } => info(target.load()?, json),
        Command::Validate { target, json } => validate(&target, json),
        Command::Bench {
            target,
            reps,
            jobs,
            json,
        } => {
            let pipeline = Pipeline::new(target.load()?).with_options(RunOptions {
                jobs,
                ..Default::default()
            });
            let report = pipeline.benchmark(reps)?;
            if json {
                print_json(&serde_json::to_value(&report).expect("report serializes"));
            } else {
                println!(
                    "{:<16} {:>9} {:>8} {:>8} {:>14} {:>12} {:>8}",
                    "dataset",
                    "sessions",
                    "windows",
                    "workers",
                    "sequential_s",
                    "parallel_s",
                    "speedup"
                );
                println!(
                    "{:<16} {:>9} {:>8} {:>8} {:>14.4} {:>12.4} {:>7.2}x",
                    report.dataset_id,
                    report.sessions,
                    report.windows,
                    report.workers,
                    report.sequential_median_s,
                    report.parallel_median_s,
                    report.speedup
                );
            }
            Ok(0)
        }
        Command::GenerateSynthetic {
            subjects,
            activities,
            duration,
            freq,
            channels,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                num_subjects: subjects,
                num_activities: activities,
                duration_s: duration,
                freq,
                num_channels: channels,
                seed,
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let out = out.canonicalize().map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let cfg = write_synthetic_dataset(&spec, &out)?;
            let path = out.join("synthetic.toml");
            std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::List => {
            for id in builtin_ids() {
                println!("{id}");
            }
            Ok(0)
        }
    }
}

fn info(cfg: WharConfig, json: bool) -> Result<u8, Error> {
    let pipeline = Pipeline::new(cfg);
    let cfg = pipeline.config();
    let window_len = WindowGeometry::new(cfg.window_time, cfg.window_overlap, cfg.effective_freq())
        .ok()
        .map(|g| g.len);
    // A dataset whose parser is not available still has a summary; its cache state is unknown.
    let states = pipeline.stage_states().ok();
    let state_of = |s: Stage| states.as_ref().map_or("unknown", |m| m[&s].as_str());
    if json {
        let stages: serde_json::Map<_, _> = Stage::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), json!(state_of(*s))))
            .collect();
        print_json(&json!({
            "dataset_id": cfg.dataset_id,
            "num_of_subjects": cfg.num_of_subjects,
            "num_of_activities": cfg.num_of_activities,
            "num_of_channels": cfg.num_of_channels,
            "sampling_freq": cfg.sampling_freq,
            "sensor_channels": cfg.sensor_channels,
            "activity_names": cfg.activity_names,
            "parser_id": cfg.parser_id,
            "window_len": window_len,
            "datasets_dir": cfg.datasets_dir,
            "stages": stages,
        }));
        return Ok(0);
    }
    println!(
        "{}: {} subjects, {} activities, {} Hz",
        cfg.dataset_id, cfg.num_of_subjects, cfg.num_of_activities, cfg.sampling_freq
    );
    println!(
        "channels ({}): {}",
        cfg.num_of_channels,
        cfg.sensor_channels.join(", ")
    );
    println!("activities: {}", cfg.activity_names.join(", "));
    if let Some(len) = window_len {
        println!(
            "windows: {} s, overlap {}, {} samples",
            cfg.window_time, cfg.window_overlap, len
        );
    }
    println!(
        "cache: {}",
        Stage::ALL
            .iter()
            .map(|s| format!("{s}={}", state_of(*s)))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(0)
}

fn issue_json(report: &ValidationReport) -> serde_json::Value {
    json!({
        "ok": report.ok(),
        "errors": report.errors().collect::<Vec<_>>(),
        "warnings": report.warnings().count(),
    })
}

fn validate(target: &Target, json: bool) -> Result<u8, Error> {
    let cfg = match target.load() {
        Ok(cfg) => cfg,
        Err(Error::Config(errors)) => {
            if json {
                let fields: Vec<_> = errors
                    .iter()
                    .map(|e| json!({"field": e.path, "message": e.message}))
                    .collect();
                print_json(&json!({"ok": false, "config_errors": fields}));
            } else {
                println!("config: invalid");
                for e in errors.iter() {
                    println!("  {}: {}", e.path, e.message);
                }
            }
            return Ok(EXIT_VALIDATION);
        }
        Err(e) => return Err(e),
    };
    let pipeline = Pipeline::new(cfg);
    let states = pipeline.stage_states()?;
    let report = if states[&Stage::Standardize] == StageState::Fresh {
        Some(pipeline.validate_stored()?)
    } else {
        None
    };
    let ok = report.as_ref().is_none_or(ValidationReport::ok);
    if json {
        print_json(&json!({
            "ok": ok,
            "config_errors": [],
            "standardized": report.as_ref().map(issue_json),
        }));
    } else {
        println!("config: ok");
        match &report {
            None => println!("standardized: not available (run `preprocess` first)"),
            Some(r) if r.ok() => println!("standardized: ok ({} warnings)", r.warnings().count()),
            Some(r) => {
                println!("standardized: {} errors", r.errors().count());
                for issue in r.errors() {
                    println!("  {issue}");
                }
            }
        }
    }
    Ok(if ok { 0 } else { EXIT_VALIDATION })
}
