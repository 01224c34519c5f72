//! Offline indexing of a source dataset: gate it, then train one expert per
//! subset.

use rayon::prelude::*;

use crate::error::Result;
use crate::experts::{train_expert, ExpertKind, ExpertModel, TrainConfig};
use crate::gating::{partition, GatingConfig, Partition};
use crate::manifest::{DatasetManifest, Item};

#[derive(Debug, Clone)]
pub struct SourceModel {
    pub partition: Partition,
    pub experts: Vec<ExpertModel>,
}

/// Items of each subset, in manifest order.
pub fn subsets<'a>(manifest: &'a DatasetManifest, partition: &Partition) -> Result<Vec<Vec<&'a Item>>> {
    let mut members = vec![Vec::new(); partition.k];
    for item in &manifest.items {
        members[partition.gate(&item.id)?].push(item);
    }
    Ok(members)
}

/// Trains the experts of an existing partition in parallel. Expert `i` uses
/// seed `cfg.seed + i`, so results do not depend on scheduling.
pub fn train_experts(
    manifest: &DatasetManifest,
    partition: &Partition,
    kind: ExpertKind,
    cfg: &TrainConfig,
) -> Result<Vec<ExpertModel>> {
    subsets(manifest, partition)?
        .par_iter()
        .enumerate()
        .map(|(i, items)| {
            let mut cfg = *cfg;
            cfg.seed = cfg.seed.wrapping_add(i as u64);
            let mut trained = train_expert(kind, items, &cfg).map_err(|e| e.for_expert(i))?;
            trained.model.subset_index = i;
            Ok(trained.model)
        })
        .collect()
}

pub fn build_source_model(
    manifest: &DatasetManifest,
    gating: &GatingConfig,
    kind: ExpertKind,
    cfg: &TrainConfig,
) -> Result<SourceModel> {
    let partition = partition(manifest, gating)?;
    let experts = train_experts(manifest, &partition, kind, cfg)?;
    Ok(SourceModel { partition, experts })
}
