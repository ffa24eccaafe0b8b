//! Per-session and per-window operations: activity filtering, channel
//! selection, resampling, windowing, normalization and class weighting.

use std::collections::{BTreeMap, HashSet};

use crate::config::Normalization;
use crate::error::{Error, Result};
use crate::model::{build_index, DatasetIndex, SessionData, Window, WindowMetadata};

/// Guard added to normalization denominators.
pub const NORM_EPSILON: f64 = 1e-8;

/// Keeps only sessions (and their windows) whose activity is in `activity_names`.
pub fn filter_activities(index: &DatasetIndex, activity_names: &[String]) -> Result<DatasetIndex> {
    let known: Vec<&str> = index
        .activities
        .iter()
        .map(|a| a.activity_name.as_str())
        .collect();
    for name in activity_names {
        if !known.contains(&name.as_str()) {
            return Err(Error::Transform(format!(
                "unknown activity `{name}` (known: {})",
                known.join(", ")
            )));
        }
    }
    let activities: Vec<_> = index
        .activities
        .iter()
        .filter(|a| activity_names.contains(&a.activity_name))
        .cloned()
        .collect();
    let kept: HashSet<u32> = activities.iter().map(|a| a.activity_id).collect();
    let sessions: Vec<_> = index
        .sessions
        .iter()
        .filter(|s| kept.contains(&s.activity_id))
        .copied()
        .collect();
    let session_ids: HashSet<u32> = sessions.iter().map(|s| s.session_id).collect();
    let windows = index
        .windows
        .iter()
        .filter(|w| session_ids.contains(&w.session_id))
        .cloned()
        .collect();
    build_index(activities, sessions, windows)
}

/// Reorders and prunes channels to exactly `sensor_channels`.
pub fn select_channels(session: &SessionData, sensor_channels: &[String]) -> Result<SessionData> {
    let mut columns = Vec::with_capacity(sensor_channels.len());
    for name in sensor_channels {
        let col = session.channel(name).ok_or_else(|| {
            Error::Transform(format!(
                "channel `{name}` not present (available: {})",
                session.channel_names.join(", ")
            ))
        })?;
        columns.push(col.to_vec());
    }
    Ok(SessionData {
        timestamps: session.timestamps.clone(),
        channel_names: sensor_channels.to_vec(),
        columns,
    })
}

/// Grid step in whole microseconds for a target rate.
pub fn resampling_step_us(target_freq: f64) -> i64 {
    ((1e6 / target_freq).round() as i64).max(1)
}

/// Linear interpolation onto the grid `t_i = i * round(1e6 / target_freq)` µs.
///
/// Grid points coinciding with an input timestamp copy that sample exactly.
pub fn resample(session: &SessionData, target_freq: f64) -> Result<SessionData> {
    if session.len() < 2 {
        return Err(Error::Transform(format!(
            "resampling needs at least 2 rows, session has {}",
            session.len()
        )));
    }
    // Negated so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(target_freq > 0.0) {
        return Err(Error::Transform(format!(
            "target frequency must be positive, got {target_freq}"
        )));
    }
    let step = resampling_step_us(target_freq);
    let ts = &session.timestamps;
    let first = ts[0];
    let last = *ts.last().unwrap();
    let grid: Vec<i64> = (0..)
        .map(|i: i64| first + i * step)
        .take_while(|&t| t <= last)
        .collect();

    // (left index, fraction) per grid point; fraction 0 means an exact hit.
    let mut brackets = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &t in &grid {
        while j + 1 < ts.len() && ts[j + 1] <= t {
            j += 1;
        }
        if ts[j] == t || j + 1 == ts.len() {
            brackets.push((j, 0.0));
        } else {
            let frac = (t - ts[j]) as f64 / (ts[j + 1] - ts[j]) as f64;
            brackets.push((j, frac));
        }
    }

    let columns = session
        .columns
        .iter()
        .map(|col| {
            brackets
                .iter()
                .map(|&(j, frac)| {
                    if frac == 0.0 {
                        col[j]
                    } else {
                        let a = col[j] as f64;
                        let b = col[j + 1] as f64;
                        (a + (b - a) * frac) as f32
                    }
                })
                .collect()
        })
        .collect();
    Ok(SessionData {
        timestamps: grid.into_iter().map(|t| t - first).collect(),
        channel_names: session.channel_names.clone(),
        columns,
    })
}

/// Window length and stride in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    pub len: usize,
    pub stride: usize,
}

impl WindowGeometry {
    /// `len = round(window_time * freq)`, `stride = max(1, round(len * (1 - overlap)))`.
    pub fn new(window_time: f64, window_overlap: f64, freq: f64) -> Result<Self> {
        let len = (window_time * freq).round();
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(len >= 1.0) {
            return Err(Error::Transform(format!(
                "window of {window_time} s at {freq} Hz is shorter than one sample"
            )));
        }
        let len = len as usize;
        let stride = ((len as f64 * (1.0 - window_overlap)).round() as usize).max(1);
        Ok(WindowGeometry { len, stride })
    }

    /// Number of full windows in `n` samples.
    pub fn count(&self, n: usize) -> usize {
        if n < self.len {
            0
        } else {
            (n - self.len) / self.stride + 1
        }
    }

    pub fn starts(&self, n: usize) -> impl Iterator<Item = usize> {
        let stride = self.stride;
        (0..self.count(n)).map(move |k| k * stride)
    }
}

/// Cuts a session into fixed-length windows; a trailing partial window is dropped.
pub fn generate_windows(
    session: &SessionData,
    session_id: u32,
    geometry: WindowGeometry,
) -> Result<Vec<(WindowMetadata, Window)>> {
    let cols = session.num_channels();
    geometry
        .starts(session.len())
        .enumerate()
        .map(|(index, start)| {
            let mut data = Vec::with_capacity(geometry.len * cols);
            for r in start..start + geometry.len {
                data.extend(session.columns.iter().map(|c| c[r]));
            }
            let window = Window::from_row_major(geometry.len, cols, data)?;
            Ok((WindowMetadata::new(session_id, index), window))
        })
        .collect()
}

/// Statistics of one channel. Computed in f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl ChannelStats {
    fn from_values(values: &mut [f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        values.sort_by(|a, b| a.total_cmp(b));
        ChannelStats {
            min: values[0],
            max: values[values.len() - 1],
            mean,
            std: var.sqrt(),
            median: quantile_sorted(values, 0.5),
            q25: quantile_sorted(values, 0.25),
            q75: quantile_sorted(values, 0.75),
        }
    }
}

/// Quantile with linear interpolation between order statistics (position `q * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub channels: Vec<ChannelStats>,
}

/// Per-channel statistics over the concatenation of all given windows.
pub fn compute_norm_stats<'a>(windows: impl IntoIterator<Item = &'a Window>) -> Result<NormStats> {
    let mut per_channel: Vec<Vec<f64>> = Vec::new();
    let mut any = false;
    for w in windows {
        if !any {
            per_channel = vec![Vec::new(); w.cols()];
            any = true;
        } else if w.cols() != per_channel.len() {
            return Err(Error::Transform(format!(
                "window has {} channels, expected {}",
                w.cols(),
                per_channel.len()
            )));
        }
        for (c, acc) in per_channel.iter_mut().enumerate() {
            acc.extend(w.column(c).map(f64::from));
        }
    }
    if !any || per_channel.iter().any(|c| c.is_empty()) {
        return Err(Error::Transform(
            "cannot compute normalization statistics from no samples".into(),
        ));
    }
    Ok(NormStats {
        channels: per_channel
            .iter_mut()
            .map(|v| ChannelStats::from_values(v))
            .collect(),
    })
}

/// Normalizes each channel; per-window modes derive statistics from `w` itself.
pub fn apply_normalization(
    w: &Window,
    mode: Normalization,
    stats: Option<&NormStats>,
) -> Result<Window> {
    let own;
    let stats = match mode {
        Normalization::None => return Ok(w.clone()),
        Normalization::MinMaxPerWindow
        | Normalization::StdPerWindow
        | Normalization::RobustPerWindow => {
            own = compute_norm_stats([w])?;
            &own
        }
        _ => stats.ok_or_else(|| {
            Error::Transform(format!("{} needs training statistics", mode.as_str()))
        })?,
    };
    if stats.channels.len() < w.cols() {
        return Err(Error::Transform(format!(
            "statistics cover {} channels, window has {}",
            stats.channels.len(),
            w.cols()
        )));
    }
    let scale: Vec<(f64, f64)> = stats.channels[..w.cols()]
        .iter()
        .map(|s| match mode {
            Normalization::MinMaxPerWindow | Normalization::MinMaxGlobal => {
                (s.min, s.max - s.min + NORM_EPSILON)
            }
            Normalization::StdPerWindow | Normalization::StdGlobal => {
                (s.mean, s.std + NORM_EPSILON)
            }
            _ => (s.median, (s.q75 - s.q25) + NORM_EPSILON),
        })
        .collect();
    let cols = w.cols();
    let data = w
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let (center, denom) = scale[i % cols];
            ((x as f64 - center) / denom) as f32
        })
        .collect();
    Window::from_row_major(w.rows(), cols, data)
}

/// Balanced class weights `N / (K * n_k)` keyed by activity id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub BTreeMap<u32, f64>);

impl ClassWeights {
    pub fn get(&self, activity_id: u32) -> Option<f64> {
        self.0.get(&activity_id).copied()
    }

    /// Weights ordered by activity id.
    pub fn to_vec(&self) -> Vec<f64> {
        self.0.values().copied().collect()
    }
}

pub fn class_weights_from_counts(counts: &BTreeMap<u32, usize>) -> Result<ClassWeights> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::Transform(
            "cannot compute class weights from an empty training set".into(),
        ));
    }
    let k = counts.values().filter(|&&n| n > 0).count() as f64;
    Ok(ClassWeights(
        counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(&id, &n)| (id, total as f64 / (k * n as f64)))
            .collect(),
    ))
}

pub fn compute_class_weights(
    index: &DatasetIndex,
    train_window_ids: &[String],
) -> Result<ClassWeights> {
    let mut counts = BTreeMap::new();
    for id in train_window_ids {
        let label = index
            .label(id)
            .ok_or_else(|| Error::NotFound(format!("window {id}")))?;
        *counts.entry(label).or_insert(0) += 1;
    }
    class_weights_from_counts(&counts)
}
