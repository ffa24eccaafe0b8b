//! Brute-force reference computations, written independently of the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Window starts by stepping through the sample range one stride at a time.
pub fn window_starts(n: usize, window_time: f64, overlap: f64, freq: f64) -> Option<Vec<usize>> {
    let len = (window_time * freq).round();
    if len < 1.0 {
        return None;
    }
    let len = len as usize;
    let stride = ((len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + len <= n {
        starts.push(s);
        s += stride;
    }
    Some(starts)
}

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Percentile by linear interpolation between the two neighbouring order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * p;
    let below = h.floor() as usize;
    if below + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let w = h - below as f64;
    sorted[below] * (1.0 - w) + sorted[below + 1] * w
}

pub fn stats(values: &[f64]) -> Stats {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for v in values {
        sq += (v - mean) * (v - mean);
    }
    Stats {
        min: sorted[0],
        max: *sorted.last().unwrap(),
        mean,
        std: (sq / n).sqrt(),
        median: percentile(&sorted, 0.5),
        q25: percentile(&sorted, 0.25),
        q75: percentile(&sorted, 0.75),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MinMax,
    Std,
    Robust,
}

pub fn normalize_value(x: f64, s: &Stats, method: Method) -> f64 {
    const EPS: f64 = 1e-8;
    match method {
        Method::MinMax => (x - s.min) / (s.max - s.min + EPS),
        Method::Std => (x - s.mean) / (s.std + EPS),
        Method::Robust => (x - s.median) / (s.q75 - s.q25 + EPS),
    }
}

/// Column `c` of several row-major `rows × cols` matrices, concatenated.
pub fn column(mats: &[&[f32]], cols: usize, c: usize) -> Vec<f64> {
    mats.iter()
        .flat_map(|m| m.iter().skip(c).step_by(cols).map(|&v| v as f64))
        .collect()
}

/// `N / (K n_k)` for each class.
pub fn class_weights(labels: &[u32]) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    counts
        .into_iter()
        .map(|(c, nk)| (c, n / (k * nk as f64)))
        .collect()
}

/// Linear interpolation of `(t, v)` samples at time `t`.
pub fn interpolate(ts: &[i64], vs: &[f64], t: i64) -> f64 {
    let i = ts.iter().rposition(|&x| x <= t).unwrap();
    if ts[i] == t || i + 1 == ts.len() {
        return vs[i];
    }
    let f = (t - ts[i]) as f64 / (ts[i + 1] - ts[i]) as f64;
    vs[i] * (1.0 - f) + vs[i + 1] * f
}
