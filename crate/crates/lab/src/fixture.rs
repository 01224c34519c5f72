//! The standard synthetic fixture.
//!
//! Five Gaussian blobs in feature space stand in for five source datasets.
//! Every blob has its own 8x8 image pattern and its own labelling direction,
//! each a mix of the target blob's pattern/direction and a private random
//! one. The mixing weight (the blob's `similarity`) is known, so the most
//! relevant source data is known by construction.

use nds_core::manifest::{DatasetManifest, Image, ImageShape, Item, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const LABELS: [&str; 2] = ["neg", "pos"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub seed: u64,
    pub items_per_blob: usize,
    pub dim: usize,
    /// Distance between any two blob centres.
    pub separation: f64,
    pub sigma: f64,
    pub side: usize,
    /// Cosine between each blob's pattern/direction and the target blob's.
    pub similarity: Vec<f64>,
    /// Per-pixel noise relative to the unit-RMS blob pattern.
    pub pixel_noise: f64,
    /// Pixel standard deviation around mid-grey.
    pub contrast: f64,
    pub target_blob: usize,
    pub target_size: usize,
    pub test_size: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 0,
            items_per_blob: 1000,
            dim: 16,
            separation: 10.0,
            sigma: 1.0,
            side: 8,
            similarity: vec![0.4, 0.0, 1.0, 0.6, 0.2],
            pixel_noise: 3.0,
            contrast: 0.15,
            target_blob: 2,
            target_size: 100,
            test_size: 500,
        }
    }
}

impl FixtureConfig {
    pub fn blobs(&self) -> usize {
        self.similarity.len()
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    /// All blobs as one labelled source dataset.
    pub source: DatasetManifest,
    /// Generating blob of each source item, in manifest order.
    pub source_blob: Vec<usize>,
    /// The client's labelled target sample.
    pub target: DatasetManifest,
    /// Held-out target data for downstream evaluation.
    pub test: DatasetManifest,
}

struct Blob {
    centre: Vec<f64>,
    direction: Vec<f64>,
    pattern: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn rescale(v: &mut [f64], target_norm: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x *= target_norm / norm);
}

/// `cos a + sin b`, rescaled; with `a` and `b` near-orthogonal the result
/// has cosine about `cos` with `a`.
fn mix(a: &[f64], b: &[f64], cos: f64, target_norm: f64) -> Vec<f64> {
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| cos * x + sin * y).collect();
    rescale(&mut v, target_norm);
    v
}

fn blobs(cfg: &FixtureConfig, rng: &mut ChaCha8Rng) -> Vec<Blob> {
    let pixels = cfg.side * cfg.side;
    // Centres on scaled axes: every pair is `separation` apart.
    let axis = cfg.separation / std::f64::consts::SQRT_2;
    let mut target_direction = gaussian(rng, cfg.dim);
    rescale(&mut target_direction, 1.0);
    let mut target_pattern = gaussian(rng, pixels);
    rescale(&mut target_pattern, (pixels as f64).sqrt());
    (0..cfg.blobs())
        .map(|b| {
            let mut centre = vec![0.0; cfg.dim];
            centre[b % cfg.dim] = axis;
            let mut own_direction = gaussian(rng, cfg.dim);
            rescale(&mut own_direction, 1.0);
            let mut own_pattern = gaussian(rng, pixels);
            rescale(&mut own_pattern, (pixels as f64).sqrt());
            let alpha = cfg.similarity[b];
            Blob {
                centre,
                direction: mix(&target_direction, &own_direction, alpha, 1.0),
                pattern: mix(&target_pattern, &own_pattern, alpha, (pixels as f64).sqrt()),
            }
        })
        .collect()
}

fn sample_item(cfg: &FixtureConfig, blob: &Blob, id: String, url: String, rng: &mut ChaCha8Rng) -> Item {
    let features: Vec<f64> = blob
        .centre
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            c + cfg.sigma * z
        })
        .collect();
    let margin: f64 = features
        .iter()
        .zip(&blob.centre)
        .zip(&blob.direction)
        .map(|((x, c), u)| (x - c) * u)
        .sum();
    let scale = cfg.contrast / (1.0 + cfg.pixel_noise * cfg.pixel_noise).sqrt();
    let pixels = blob
        .pattern
        .iter()
        .map(|p| {
            let noise: f64 = StandardNormal.sample(rng);
            let v = 0.5 + scale * (p + cfg.pixel_noise * noise);
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    Item {
        id,
        url,
        label: Some(usize::from(margin > 0.0)),
        features,
        image: Some(
            Image::new(
                ImageShape {
                    size: cfg.side,
                    channels: 1,
                },
                pixels,
            )
            .expect("pixel count matches the shape"),
        ),
        size_bytes: Some(rng.random_range(20_000..60_000)),
    }
}

impl Fixture {
    pub fn generate(cfg: &FixtureConfig) -> Fixture {
        assert!(cfg.target_blob < cfg.blobs(), "target blob out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let blobs = blobs(cfg, &mut rng);
        let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        let shape = Some(ImageShape {
            size: cfg.side,
            channels: 1,
        });

        let mut items = Vec::with_capacity(cfg.blobs() * cfg.items_per_blob);
        let mut source_blob = Vec::with_capacity(items.capacity());
        for (b, blob) in blobs.iter().enumerate() {
            for i in 0..cfg.items_per_blob {
                let url = format!("https://fixture.example.org/blob{b}/{i:05}.png");
                items.push(sample_item(cfg, blob, format!("b{b}-{i:05}"), url, &mut rng));
                source_blob.push(b);
            }
        }
        let source = DatasetManifest::new("fixture", Role::Source, cfg.dim, shape, labels.clone(), items)
            .expect("fixture source is valid");

        let target_blob = &blobs[cfg.target_blob];
        let client = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| -> Vec<Item> {
            (0..n)
                .map(|i| {
                    let id = format!("{prefix}-{i:04}");
                    sample_item(cfg, target_blob, id, String::new(), rng)
                })
                .collect()
        };
        let target_items = client("t", cfg.target_size, &mut rng);
        let test_items = client("v", cfg.test_size, &mut rng);
        let target = DatasetManifest::new(
            "fixture-target",
            Role::Target,
            cfg.dim,
            shape,
            labels.clone(),
            target_items,
        )
        .expect("fixture target is valid");
        let test = DatasetManifest::new("fixture-test", Role::Target, cfg.dim, shape, labels, test_items)
            .expect("fixture test set is valid");

        Fixture {
            config: cfg.clone(),
            source,
            source_blob,
            target,
            test,
        }
    }

    /// Generating blob of a source item id.
    pub fn blob_of(&self, id: &str) -> Option<usize> {
        let b = id.strip_prefix('b')?.split('-').next()?;
        b.parse().ok()
    }
}
