//! Sequential vs. parallel timing of the windowing stage.

use std::time::Instant;

use serde::Serialize;

use super::Pipeline;
use crate::config::Stage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub dataset_id: String,
    pub sessions: usize,
    pub windows: usize,
    pub workers: usize,
    pub repetitions: usize,
    pub sequential_runs_s: Vec<f64>,
    pub parallel_runs_s: Vec<f64>,
    pub sequential_median_s: f64,
    pub parallel_median_s: f64,
    /// Sequential median divided by parallel median.
    pub speedup: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

impl Pipeline {
    /// Times `repetitions` forced windowing runs in each mode, alternating modes.
    pub fn benchmark(&self, repetitions: usize) -> Result<BenchReport> {
        if repetitions == 0 {
            return Err(Error::Invariant(
                "benchmark needs at least one repetition".into(),
            ));
        }
        let standardized = self.ensure_standardized()?;
        let hash = self.stage_hash(Stage::Windowing)?;
        let mut seq = Vec::with_capacity(repetitions);
        let mut par = Vec::with_capacity(repetitions);
        let mut windows = 0;
        for _ in 0..repetitions {
            for parallel in [false, true] {
                let start = Instant::now();
                let index = self.window_sessions(&standardized, parallel, &hash)?;
                let elapsed = start.elapsed().as_secs_f64();
                windows = index.windows.len();
                if parallel {
                    par.push(elapsed);
                } else {
                    seq.push(elapsed);
                }
            }
        }
        let sequential_median_s = median(&seq);
        let parallel_median_s = median(&par);
        Ok(BenchReport {
            dataset_id: self.config().dataset_id.clone(),
            sessions: standardized.sessions.len(),
            windows,
            workers: self.jobs(),
            repetitions,
            sequential_runs_s: seq,
            parallel_runs_s: par,
            sequential_median_s,
            parallel_median_s,
            speedup: sequential_median_s / parallel_median_s,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parsers::synthetic::{write_synthetic_dataset, SyntheticSpec};

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn tiny_benchmark_completes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            num_subjects: 2,
            num_activities: 2,
            duration_s: 5.0,
            freq: 50.0,
            num_channels: 3,
            seed: 0,
        };
        let cfg = write_synthetic_dataset(&spec, dir.path()).unwrap();
        let report = Pipeline::new(cfg).benchmark(2).unwrap();
        assert_eq!(report.sessions, 4);
        assert_eq!(report.sequential_runs_s.len(), 2);
        assert!(report.speedup.is_finite() && report.speedup > 0.0);
    }
}
