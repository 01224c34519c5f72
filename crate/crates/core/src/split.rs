//! Deterministic train/validation splitting keyed on item ids.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Rank key of an id under a seed. Items are ordered by this key, so the
/// relative order of existing ids never changes when items are added.
fn rank_key(seed: u64, id: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    hasher.finalize().into()
}

/// Splits `ids` so that `|train| = round(fraction * n)`, clamped to leave at
/// least one id on each side.
pub fn split_ids<'a>(ids: impl IntoIterator<Item = &'a str>, spec: SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut keyed: Vec<([u8; 32], &str)> = ids.into_iter().map(|id| (rank_key(spec.seed, id), id)).collect();
    let n = keyed.len();
    if n < 2 {
        return Err(Error::TooFewItems { needed: 2, found: n });
    }
    keyed.sort_unstable();
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut ids = keyed.into_iter().map(|(_, id)| id.to_owned());
    let train = ids.by_ref().take(n_train).collect();
    let val = ids.collect();
    Ok(Split { train, val })
}

pub fn split(manifest: &DatasetManifest, spec: SplitSpec) -> Result<Split> {
    split_ids(manifest.items.iter().map(|item| item.id.as_str()), spec)
}
