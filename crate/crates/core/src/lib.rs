//! Config-driven standardization, caching and preprocessing of wearable
//! human-activity-recognition datasets.
//!
//! A dataset is described by a [`config::WharConfig`]. The [`pipeline`]
//! downloads the raw archive, standardizes it with a registered parser and
//! cuts the sessions into windows, caching every stage on disk.
//! [`loader::Dataset`] then serves normalized, labelled windows for
//! subject-disjoint splits.

pub mod config;
pub mod error;
pub mod loader;
pub mod model;
pub mod parsers;
pub mod pipeline;
pub mod splits;
pub mod storage;
pub mod transforms;

pub use error::{Error, Result};
