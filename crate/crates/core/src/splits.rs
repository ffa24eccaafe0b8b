//! Subject-disjoint train/validation/test partitions and cross-validation folds.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{check_groups_disjoint, WharConfig};
use crate::error::{Error, Result};
use crate::model::DatasetIndex;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitSpec {
    pub train_subjects: BTreeSet<u32>,
    pub val_subjects: BTreeSet<u32>,
    pub test_subjects: BTreeSet<u32>,
    pub train_windows: Vec<String>,
    pub val_windows: Vec<String>,
    pub test_windows: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl SplitSpec {
    pub fn windows(&self, partition: Partition) -> &[String] {
        match partition {
            Partition::Train => &self.train_windows,
            Partition::Val => &self.val_windows,
            Partition::Test => &self.test_windows,
        }
    }

    pub fn subjects(&self, partition: Partition) -> &BTreeSet<u32> {
        match partition {
            Partition::Train => &self.train_subjects,
            Partition::Val => &self.val_subjects,
            Partition::Test => &self.test_subjects,
        }
    }
}

/// Number of validation subjects drawn from a pool of `pool` subjects.
pub fn validation_count(val_percentage: f64, pool: usize) -> usize {
    // The tolerance keeps products like 0.3 * 10 = 3.0000000000000004 from rounding up.
    let raw = val_percentage * pool as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(pool)
}

/// Deterministic permutation of `subjects` (sorted ascending first) from `seed`.
pub fn seeded_shuffle(subjects: &BTreeSet<u32>, seed: u64) -> Vec<u32> {
    let mut v: Vec<u32> = subjects.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    v.shuffle(&mut rng);
    v
}

fn check_known(index_subjects: &BTreeSet<u32>, ids: &[u32], what: &str) -> Result<()> {
    if let Some(missing) = ids.iter().find(|s| !index_subjects.contains(s)) {
        return Err(Error::Split(format!(
            "{what} references subject {missing}, which has no data"
        )));
    }
    Ok(())
}

fn assemble(
    index: &DatasetIndex,
    pool: &BTreeSet<u32>,
    test: BTreeSet<u32>,
    val_percentage: f64,
    seed: u64,
) -> SplitSpec {
    let shuffled = seeded_shuffle(pool, seed);
    let n_val = validation_count(val_percentage, pool.len());
    let val: BTreeSet<u32> = shuffled[..n_val].iter().copied().collect();
    let train: BTreeSet<u32> = shuffled[n_val..].iter().copied().collect();
    SplitSpec {
        train_windows: index.windows_of_subjects(&train),
        val_windows: index.windows_of_subjects(&val),
        test_windows: index.windows_of_subjects(&test),
        train_subjects: train,
        val_subjects: val,
        test_subjects: test,
    }
}

/// Split from the configured train/test subject lists; validation subjects
/// are drawn from the train list.
pub fn split_given(index: &DatasetIndex, cfg: &WharConfig) -> Result<SplitSpec> {
    let subjects = index.subject_ids();
    check_known(&subjects, &cfg.given_train_subj_ids, "given_train_subj_ids")?;
    check_known(&subjects, &cfg.given_test_subj_ids, "given_test_subj_ids")?;
    let train: BTreeSet<u32> = cfg.given_train_subj_ids.iter().copied().collect();
    let test: BTreeSet<u32> = cfg.given_test_subj_ids.iter().copied().collect();
    if let Some(s) = train.intersection(&test).next() {
        return Err(Error::Split(format!(
            "subject {s} is in both train and test"
        )));
    }
    Ok(assemble(index, &train, test, cfg.val_percentage, cfg.seed))
}

/// One split per configured group: the group is the test set, validation is
/// drawn from all remaining subjects.
pub fn loso_folds(index: &DatasetIndex, cfg: &WharConfig) -> Result<Vec<SplitSpec>> {
    check_groups_disjoint(&cfg.subj_cross_val_split_groups).map_err(Error::Split)?;
    let subjects = index.subject_ids();
    cfg.subj_cross_val_split_groups
        .iter()
        .enumerate()
        .map(|(i, group)| {
            check_known(&subjects, group, &format!("cross-validation group {i}"))?;
            let test: BTreeSet<u32> = group.iter().copied().collect();
            let pool: BTreeSet<u32> = subjects.difference(&test).copied().collect();
            Ok(assemble(index, &pool, test, cfg.val_percentage, cfg.seed))
        })
        .collect()
}
