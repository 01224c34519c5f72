#![allow(dead_code)]

use nds_core::experts::TrainConfig;
use nds_core::gating::GatingConfig;
use nds_core::manifest::{DatasetManifest, Item, Role};
use nds_core::protocol::BuildRequest;
use nds_core::ExpertKind;

/// `n` items in d=16 spread over `clusters` well separated groups. Features
/// double as a 4x4 grid for rotation experts.
pub fn source(name: &str, n: usize, clusters: usize) -> DatasetManifest {
    let items = (0..n)
        .map(|i| {
            let c = i % clusters;
            let features = (0..16)
                .map(|d| {
                    let centre = if d % clusters == c { 10.0 } else { 0.0 };
                    centre + (d as f64) * 0.1 + ((i * 31 + d * 17) % 13) as f64 * 0.05
                })
                .collect();
            Item {
                id: format!("{name}-{i}"),
                url: format!("https://data.example.org/{name}/{i}.jpg"),
                label: None,
                features,
                image: None,
                size_bytes: Some(1000 + i as u64),
            }
        })
        .collect();
    DatasetManifest::new(name, Role::Source, 16, None, Vec::new(), items).unwrap()
}

pub fn quick_build(k: usize) -> BuildRequest {
    BuildRequest {
        gating_cfg: GatingConfig::unsupervised(k, 0),
        train_cfg: TrainConfig {
            epochs: 2,
            hidden: 8,
            ..TrainConfig::default()
        },
        expert_kind: ExpertKind::Rotation,
    }
}
