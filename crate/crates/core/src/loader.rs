//! Sample access over a processed dataset: splits, normalization, batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::WharConfig;
use crate::error::{Error, Result};
use crate::model::{DatasetIndex, Window};
use crate::pipeline::{Pipeline, RunOptions};
use crate::splits::{loso_folds, split_given, Partition, SplitSpec};
use crate::storage::{open_window_store, LoadMode, WindowStore};
use crate::transforms::{
    apply_normalization, compute_class_weights, compute_norm_stats, ClassWeights, NormStats,
};

/// A batch of windows stacked as `(batch, rows, channels)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub window_ids: Vec<String>,
    pub data: Vec<f32>,
    pub labels: Vec<u32>,
    pub shape: (usize, usize, usize),
}

/// A windowed dataset ready for sampling.
pub struct Dataset {
    cfg: WharConfig,
    index: DatasetIndex,
    store: WindowStore,
    split: SplitSpec,
    stats: Option<NormStats>,
}

impl Dataset {
    /// Runs the pipeline (reusing cached stages unless `override_cache`) and opens the result
    /// with the configured train/test split.
    pub fn open(cfg: WharConfig, override_cache: bool) -> Result<Self> {
        let pipeline = Pipeline::new(cfg).with_options(RunOptions {
            force: override_cache,
            ..Default::default()
        });
        Self::from_pipeline(&pipeline)
    }

    pub fn from_pipeline(pipeline: &Pipeline) -> Result<Self> {
        let index = pipeline.run_all()?.index;
        let cfg = pipeline.config().clone();
        let store = open_window_store(pipeline.layout(), LoadMode::from_in_memory(cfg.in_memory))?;
        let split = split_given(&index, &cfg)?;
        let mut ds = Dataset {
            cfg,
            index,
            store,
            split: SplitSpec::default(),
            stats: None,
        };
        ds.set_split(split)?;
        Ok(ds)
    }

    /// Replaces the active split; global normalization statistics are recomputed
    /// from its training windows.
    pub fn set_split(&mut self, split: SplitSpec) -> Result<()> {
        self.stats = if self.cfg.normalization.is_global() {
            let windows = split
                .train_windows
                .iter()
                .map(|id| self.store.get(id))
                .collect::<Result<Vec<Window>>>()?;
            Some(compute_norm_stats(&windows)?)
        } else {
            None
        };
        self.split = split;
        Ok(())
    }

    /// Cross-validation folds over the configured subject groups.
    pub fn folds(&self) -> Result<Vec<SplitSpec>> {
        loso_folds(&self.index, &self.cfg)
    }

    pub fn config(&self) -> &WharConfig {
        &self.cfg
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    pub fn store(&self) -> &WindowStore {
        &self.store
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub fn window_ids(&self, partition: Partition) -> &[String] {
        self.split.windows(partition)
    }

    /// Normalized window and its activity id.
    pub fn sample(&self, window_id: &str) -> Result<(Window, u32)> {
        let label = self
            .index
            .label(window_id)
            .ok_or_else(|| Error::NotFound(format!("window {window_id}")))?;
        let raw = self.store.get(window_id)?;
        let window = apply_normalization(&raw, self.cfg.normalization, self.stats.as_ref())?;
        Ok((window, label))
    }

    /// Batches over a partition. Training order is shuffled from `seed` and `epoch`;
    /// validation and test keep table order.
    pub fn batches(
        &self,
        partition: Partition,
        batch_size: usize,
        epoch: u64,
    ) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::Invariant("batch size must be positive".into()));
        }
        let mut ids: Vec<&String> = self.split.windows(partition).iter().collect();
        if partition == Partition::Train {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ epoch.rotate_left(32));
            ids.shuffle(&mut rng);
        }
        ids.chunks(batch_size)
            .map(|chunk| {
                let mut batch = Batch {
                    window_ids: Vec::with_capacity(chunk.len()),
                    data: Vec::new(),
                    labels: Vec::with_capacity(chunk.len()),
                    shape: (chunk.len(), 0, 0),
                };
                for id in chunk {
                    let (w, label) = self.sample(id)?;
                    let (rows, cols) = w.shape();
                    if batch.window_ids.is_empty() {
                        batch.shape = (chunk.len(), rows, cols);
                    } else if (rows, cols) != (batch.shape.1, batch.shape.2) {
                        return Err(Error::Invariant(format!(
                            "window {id} has shape {:?}, batch expects {:?}",
                            (rows, cols),
                            (batch.shape.1, batch.shape.2)
                        )));
                    }
                    batch.data.extend_from_slice(w.as_slice());
                    batch.labels.push(label);
                    batch.window_ids.push((*id).clone());
                }
                Ok(batch)
            })
            .collect()
    }

    /// Balanced class weights over the training windows, keyed by activity id.
    pub fn class_weights(&self) -> Result<ClassWeights> {
        compute_class_weights(&self.index, &self.split.train_windows)
    }
}
