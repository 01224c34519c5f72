//! Building a new dataset must not touch existing ones, and its cost must
//! not depend on how much data is already indexed.

use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use nds_core::manifest::DatasetManifest;
use nds_core::protocol::BuildRequest;
use nds_server::store::Registry;
use serde::{Deserialize, Serialize};

use crate::fixture::{Fixture, FixtureConfig};
use crate::stats::median;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementalConfig {
    /// Items of A in the small setting; the large one has ten times as many.
    pub a_items: usize,
    pub b_items: usize,
    /// Timed builds of B per setting.
    pub repeats: usize,
    pub build: BuildRequest,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            a_items: 500,
            b_items: 1000,
            repeats: 3,
            build: BuildRequest {
                gating_cfg: nds_core::GatingConfig::unsupervised(5, 0),
                train_cfg: nds_core::TrainConfig::default(),
                expert_kind: nds_core::ExpertKind::Rotation,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementalReport {
    pub a_items_small: usize,
    pub a_items_large: usize,
    pub b_items: usize,
    pub build_b_seconds_small: Vec<f64>,
    pub build_b_seconds_large: Vec<f64>,
    pub median_small: f64,
    pub median_large: f64,
    /// Larger median over smaller median.
    pub ratio: f64,
    /// A's expert files are byte-identical before and after every build of B.
    pub a_blobs_identical: bool,
}

fn renamed(mut manifest: DatasetManifest, name: &str) -> DatasetManifest {
    manifest.name = name.to_owned();
    manifest
}

fn source_of(items: usize, seed: u64) -> DatasetManifest {
    let blobs = FixtureConfig::default().blobs();
    let cfg = FixtureConfig {
        seed,
        items_per_blob: items.div_ceil(blobs),
        target_size: 1,
        test_size: 1,
        ..FixtureConfig::default()
    };
    Fixture::generate(&cfg).source
}

fn expert_files(root: &Path, id: &str) -> Result<Vec<(String, Vec<u8>)>> {
    let dir = root.join(id).join("experts");
    let mut files = Vec::new();
    for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        files.push((name, std::fs::read(&path)?));
    }
    files.sort();
    Ok(files)
}

struct Setting {
    registry: std::sync::Arc<Registry>,
    _dir: tempfile::TempDir,
    a_items: usize,
    before: Vec<(String, Vec<u8>)>,
    seconds: Vec<f64>,
}

impl Setting {
    fn new(a: DatasetManifest, build: &BuildRequest) -> Result<Self> {
        let dir = tempfile::tempdir()?;
        let registry = Registry::open(dir.path())?;
        let a_items = a.len();
        registry.register(renamed(a, "a"))?;
        registry.build_blocking("a", build)?;
        let before = expert_files(dir.path(), "a")?;
        ensure!(!before.is_empty(), "dataset a has no expert files");
        Ok(Setting {
            registry,
            _dir: dir,
            a_items,
            before,
            seconds: Vec::new(),
        })
    }

    fn time_build(&mut self, b: &DatasetManifest, round: usize, build: &BuildRequest) -> Result<bool> {
        let id = format!("b-{round}");
        self.registry.register(renamed(b.clone(), &id))?;
        let start = Instant::now();
        self.registry.build_blocking(&id, build)?;
        self.seconds.push(start.elapsed().as_secs_f64());
        Ok(expert_files(self.registry.root(), "a")? == self.before)
    }
}

/// Builds B next to a small and a ten times larger A. Builds alternate
/// between the two settings so that drift in machine load hits both.
pub fn incremental_build_check(cfg: &IncrementalConfig) -> Result<IncrementalReport> {
    let mut small = Setting::new(source_of(cfg.a_items, 11), &cfg.build)?;
    let mut large = Setting::new(source_of(10 * cfg.a_items, 11), &cfg.build)?;
    let b = source_of(cfg.b_items, 12);

    let mut identical = true;
    for round in 0..cfg.repeats.max(1) {
        identical &= small.time_build(&b, round, &cfg.build)?;
        identical &= large.time_build(&b, round, &cfg.build)?;
    }
    let median_small = median(&small.seconds);
    let median_large = median(&large.seconds);
    Ok(IncrementalReport {
        a_items_small: small.a_items,
        a_items_large: large.a_items,
        b_items: b.len(),
        ratio: median_small.max(median_large) / median_small.min(median_large),
        build_b_seconds_small: small.seconds,
        build_b_seconds_large: large.seconds,
        median_small,
        median_large,
        a_blobs_identical: identical,
    })
}
