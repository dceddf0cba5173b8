//! Seeded train/test partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::slices::{DomainTag, SliceImage};
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceDataset {
    pub train: Vec<SliceImage>,
    pub test: Vec<SliceImage>,
    pub domain: DomainTag,
    pub split_seed: u64,
}

impl SliceDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `floor(fraction * n)`, robust to the product landing a hair under an integer.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("train fraction must lie in (0,1), got {fraction}")))
    }
}

/// Slice-level split: shuffle by `seed`, first `floor(fraction * n)` go to train.
pub fn split_dataset(slices: Vec<SliceImage>, fraction: f64, seed: u64) -> Result<SliceDataset> {
    check_fraction(fraction)?;
    if slices.len() < 2 {
        return Err(Error::Dataset(format!("need at least 2 slices to split, got {}", slices.len())));
    }
    let domain = slices[0].domain;
    let k = train_count(slices.len(), fraction);
    let mut order: Vec<usize> = (0..slices.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<SliceImage>> = slices.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<SliceImage> { ids.iter().map(|&i| slots[i].take().unwrap()).collect() };
    let train = take(&order[..k]);
    let test = take(&order[k..]);
    Ok(SliceDataset { train, test, domain, split_seed: seed })
}

/// Volume-level split: whole source volumes are assigned to one side, so no
/// subject leaks between train and test. Volumes are shuffled by `seed` and
/// added to train while the train count stays within `floor(fraction * n)`.
pub fn split_by_volume(slices: Vec<SliceImage>, fraction: f64, seed: u64) -> Result<SliceDataset> {
    check_fraction(fraction)?;
    if slices.len() < 2 {
        return Err(Error::Dataset(format!("need at least 2 slices to split, got {}", slices.len())));
    }
    let domain = slices[0].domain;
    let target = train_count(slices.len(), fraction);
    let mut ids: Vec<String> = Vec::new();
    for s in &slices {
        if !ids.contains(&s.provenance.source_id) {
            ids.push(s.provenance.source_id.clone());
        }
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = |id: &str| slices.iter().filter(|s| s.provenance.source_id == id).count();
    let mut chosen = Vec::new();
    let mut filled = 0;
    for id in &ids {
        let n = size(id);
        if filled + n <= target {
            filled += n;
            chosen.push(id.clone());
        }
    }
    let (train, test) = slices
        .into_iter()
        .partition(|s| chosen.contains(&s.provenance.source_id));
    Ok(SliceDataset { train, test, domain, split_seed: seed })
}
