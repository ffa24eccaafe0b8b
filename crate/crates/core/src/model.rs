//! In-memory form of the standardized data format: three relational metadata
//! tables plus session and window payloads.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityMetadata {
    pub activity_id: u32,
    pub activity_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionMetadata {
    pub session_id: u32,
    pub subject_id: u32,
    pub activity_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMetadata {
    /// `{session_id}_{window_index}`
    pub window_id: String,
    pub session_id: u32,
}

impl WindowMetadata {
    pub fn new(session_id: u32, window_index: usize) -> Self {
        WindowMetadata {
            window_id: format_window_id(session_id, window_index),
            session_id,
        }
    }

    pub fn window_index(&self) -> Option<usize> {
        parse_window_id(&self.window_id).map(|(_, i)| i)
    }
}

pub fn format_window_id(session_id: u32, window_index: usize) -> String {
    format!("{session_id}_{window_index}")
}

/// Splits a window id into `(session_id, window_index)`.
pub fn parse_window_id(id: &str) -> Option<(u32, usize)> {
    let (s, i) = id.split_once('_')?;
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    if !digits(s) || !digits(i) {
        return None;
    }
    Some((s.parse().ok()?, i.parse().ok()?))
}

/// Timestamp-indexed multivariate series for one subject performing one activity.
///
/// Timestamps are integer microseconds since session start.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub timestamps: Vec<i64>,
    pub channel_names: Vec<String>,
    /// One column per channel, each as long as `timestamps`.
    pub columns: Vec<Vec<f32>>,
}

impl SessionData {
    pub fn new(timestamps: Vec<i64>, channels: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let (channel_names, columns) = channels.into_iter().unzip();
        let data = SessionData {
            timestamps,
            channel_names,
            columns,
        };
        data.check()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.columns.len()
    }

    pub fn channel(&self, name: &str) -> Option<&[f32]> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Verifies the structural invariants; the first violation is returned.
    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        if self.timestamps.len() < 2 {
            return fail(format!(
                "session needs at least 2 rows, has {}",
                self.timestamps.len()
            ));
        }
        if self.timestamps[0] != 0 {
            return fail(format!(
                "first timestamp must be 0, found {}",
                self.timestamps[0]
            ));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return fail(format!(
                "timestamps not strictly increasing at row {}",
                i + 1
            ));
        }
        if self.channel_names.len() != self.columns.len() {
            return fail("channel name count differs from column count".into());
        }
        let mut seen = HashSet::new();
        for (name, col) in self.channel_names.iter().zip(&self.columns) {
            if !seen.insert(name.as_str()) {
                return fail(format!("duplicate channel `{name}`"));
            }
            if col.len() != self.timestamps.len() {
                return fail(format!(
                    "channel `{name}` has {} values for {} timestamps",
                    col.len(),
                    self.timestamps.len()
                ));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return fail(format!("channel `{name}` has a missing value at row {row}"));
            }
        }
        Ok(())
    }
}

/// Fixed-length multivariate sample block, row-major `(rows × cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Window {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Invariant(format!(
                "window data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Window { rows, cols, data })
    }

    pub fn from_columns(columns: &[Vec<f32>]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Invariant("window columns differ in length".into()));
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(columns.iter().map(|c| c[r]));
        }
        Ok(Window { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f32> + '_ {
        self.data
            .iter()
            .skip(col)
            .step_by(self.cols.max(1))
            .copied()
    }

    pub fn columns(&self) -> Vec<Vec<f32>> {
        (0..self.cols).map(|c| self.column(c).collect()).collect()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Bit-level equality (distinguishes `-0.0` from `0.0`, equal NaN payloads compare equal).
    pub fn bit_eq(&self, other: &Window) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// The three metadata tables with derived window lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub activities: Vec<ActivityMetadata>,
    pub sessions: Vec<SessionMetadata>,
    pub windows: Vec<WindowMetadata>,
    labels: HashMap<String, u32>,
    subjects: HashMap<String, u32>,
}

/// Builds an index and checks referential integrity across the three tables.
pub fn build_index(
    activities: Vec<ActivityMetadata>,
    sessions: Vec<SessionMetadata>,
    windows: Vec<WindowMetadata>,
) -> Result<DatasetIndex> {
    let mut activity_ids = HashSet::new();
    let mut activity_names = HashSet::new();
    for a in &activities {
        if a.activity_name.is_empty() {
            return Err(Error::Invariant(format!(
                "activity {} has an empty name",
                a.activity_id
            )));
        }
        if !activity_ids.insert(a.activity_id) {
            return Err(Error::Invariant(format!(
                "duplicate activity_id {}",
                a.activity_id
            )));
        }
        if !activity_names.insert(a.activity_name.as_str()) {
            return Err(Error::Invariant(format!(
                "duplicate activity_name `{}`",
                a.activity_name
            )));
        }
    }

    let mut by_session = HashMap::with_capacity(sessions.len());
    for s in &sessions {
        if !activity_ids.contains(&s.activity_id) {
            return Err(Error::Invariant(format!(
                "dangling activity_id {} in session {}",
                s.activity_id, s.session_id
            )));
        }
        if by_session.insert(s.session_id, *s).is_some() {
            return Err(Error::Invariant(format!(
                "duplicate session_id {}",
                s.session_id
            )));
        }
    }

    let mut labels = HashMap::with_capacity(windows.len());
    let mut subjects = HashMap::with_capacity(windows.len());
    for w in &windows {
        let session = by_session.get(&w.session_id).ok_or_else(|| {
            Error::Invariant(format!(
                "dangling session_id {} in window {}",
                w.session_id, w.window_id
            ))
        })?;
        match parse_window_id(&w.window_id) {
            Some((sid, _)) if sid == w.session_id => {}
            _ => {
                return Err(Error::Invariant(format!(
                    "window id `{}` does not match `{}_<index>`",
                    w.window_id, w.session_id
                )))
            }
        }
        if labels
            .insert(w.window_id.clone(), session.activity_id)
            .is_some()
        {
            return Err(Error::Invariant(format!(
                "duplicate window_id {}",
                w.window_id
            )));
        }
        subjects.insert(w.window_id.clone(), session.subject_id);
    }

    Ok(DatasetIndex {
        activities,
        sessions,
        windows,
        labels,
        subjects,
    })
}

impl DatasetIndex {
    pub fn label(&self, window_id: &str) -> Option<u32> {
        self.labels.get(window_id).copied()
    }

    pub fn subject(&self, window_id: &str) -> Option<u32> {
        self.subjects.get(window_id).copied()
    }

    pub fn session(&self, session_id: u32) -> Option<&SessionMetadata> {
        self.sessions.iter().find(|s| s.session_id == session_id)
    }

    pub fn activity_name(&self, activity_id: u32) -> Option<&str> {
        self.activities
            .iter()
            .find(|a| a.activity_id == activity_id)
            .map(|a| a.activity_name.as_str())
    }

    pub fn subject_ids(&self) -> BTreeSet<u32> {
        self.sessions.iter().map(|s| s.subject_id).collect()
    }

    /// Window ids of the given subjects, in table order.
    pub fn windows_of_subjects(&self, subjects: &BTreeSet<u32>) -> Vec<String> {
        self.windows
            .iter()
            .filter(|w| subjects.contains(&self.subjects[&w.window_id]))
            .map(|w| w.window_id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_tables() {
        let idx = build_index(
            vec![ActivityMetadata {
                activity_id: 0,
                activity_name: "walking".into(),
            }],
            vec![SessionMetadata {
                session_id: 0,
                subject_id: 0,
                activity_id: 0,
            }],
            vec![WindowMetadata::new(0, 0)],
        )
        .unwrap();
        assert_eq!(idx.windows[0].window_id, "0_0");
        assert_eq!(idx.label("0_0"), Some(0));
        assert_eq!(idx.subject("0_0"), Some(0));
    }

    #[test]
    fn dangling_session_is_named() {
        let err = build_index(
            vec![ActivityMetadata {
                activity_id: 0,
                activity_name: "walking".into(),
            }],
            vec![SessionMetadata {
                session_id: 0,
                subject_id: 0,
                activity_id: 0,
            }],
            vec![WindowMetadata::new(7, 0)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("dangling session_id 7"), "{err}");
    }

    #[test]
    fn dangling_activity_rejected() {
        let err = build_index(
            vec![],
            vec![SessionMetadata {
                session_id: 0,
                subject_id: 0,
                activity_id: 3,
            }],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("dangling activity_id 3"));
    }

    #[test]
    fn synthetic_grid_index_is_total() {
        // 2 subjects x 3 activities, one session each, 4 windows per session.
        let activities: Vec<_> = (0..3)
            .map(|a| ActivityMetadata {
                activity_id: a,
                activity_name: format!("a{a}"),
            })
            .collect();
        let mut sessions = Vec::new();
        let mut windows = Vec::new();
        for subject in 0..2 {
            for activity in 0..3 {
                let session_id = subject * 3 + activity;
                sessions.push(SessionMetadata {
                    session_id,
                    subject_id: subject,
                    activity_id: activity,
                });
                windows.extend((0..4).map(|i| WindowMetadata::new(session_id, i)));
            }
        }
        let idx = build_index(activities, sessions, windows).unwrap();
        assert_eq!(idx.windows.len(), 24);
        for w in &idx.windows {
            let s = idx.session(w.session_id).unwrap();
            assert_eq!(idx.label(&w.window_id), Some(s.activity_id));
            assert_eq!(idx.subject(&w.window_id), Some(s.subject_id));
        }
    }

    #[test]
    fn window_id_format() {
        assert_eq!(parse_window_id("12_3"), Some((12, 3)));
        assert_eq!(parse_window_id("12-3"), None);
        assert_eq!(parse_window_id("_3"), None);
        assert_eq!(parse_window_id("1_2_3"), None);
        assert_eq!(WindowMetadata::new(4, 9).window_index(), Some(9));
    }

    #[test]
    fn session_invariants() {
        let ok = SessionData::new(vec![0, 20_000], vec![("acc_x".into(), vec![0.0, 1.0])]);
        assert!(ok.is_ok());
        let non_mono = SessionData::new(
            vec![0, 20_000, 10_000],
            vec![("acc_x".into(), vec![0.0, 1.0, 2.0])],
        );
        assert!(non_mono.is_err());
        let short = SessionData::new(vec![0], vec![("acc_x".into(), vec![0.0])]);
        assert!(short.is_err());
        let dup = SessionData::new(
            vec![0, 1],
            vec![("a".into(), vec![0.0, 1.0]), ("a".into(), vec![0.0, 1.0])],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn window_layout() {
        let w = Window::from_columns(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(w.shape(), (2, 3));
        assert_eq!(w.as_slice(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(w.column(1).collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(w.get(1, 2), 6.0);
    }
}
