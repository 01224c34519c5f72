#![allow(dead_code)]

use nds_core::manifest::{DatasetManifest, Image, ImageShape, Item, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 8;

/// A bright band across the top rows and a mid-grey column down the left
/// edge, with per-item brightness jitter and pixel noise. No two quarter
/// turns of it look alike.
pub fn stripe_image(rng: &mut ChaCha8Rng) -> Image {
    let jitter: i32 = rng.random_range(-25..=25);
    let mut px = vec![0u8; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let base = if r < 2 {
                210
            } else if c == 0 {
                140
            } else {
                40
            };
            let noise: i32 = rng.random_range(-12..=12);
            px[r * SIDE + c] = (base + jitter + noise).clamp(0, 255) as u8;
        }
    }
    Image::new(
        ImageShape {
            size: SIDE,
            channels: 1,
        },
        px,
    )
    .unwrap()
}

/// A bright square in the bottom-right corner on a noisy background.
pub fn corner_image(rng: &mut ChaCha8Rng) -> Image {
    let mut px = vec![0u8; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let base: i32 = if r >= 5 && c >= 5 { 230 } else { 60 };
            px[r * SIDE + c] = (base + rng.random_range(-20..=20)).clamp(0, 255) as u8;
        }
    }
    Image::new(
        ImageShape {
            size: SIDE,
            channels: 1,
        },
        px,
    )
    .unwrap()
}

pub fn image_items(prefix: &str, n: usize, seed: u64, make: fn(&mut ChaCha8Rng) -> Image) -> Vec<Item> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Item {
            id: format!("{prefix}{i}"),
            url: format!("https://example.org/{prefix}/{i}.png"),
            label: None,
            features: vec![i as f64, 0.0],
            image: Some(make(&mut rng)),
            size_bytes: None,
        })
        .collect()
}

pub fn image_manifest(name: &str, role: Role, items: Vec<Item>) -> DatasetManifest {
    DatasetManifest::new(
        name,
        role,
        2,
        Some(ImageShape {
            size: SIDE,
            channels: 1,
        }),
        Vec::new(),
        items,
    )
    .unwrap()
}

/// Two Gaussian classes at `+-offset` along every axis.
pub fn two_class_items(n_per_class: usize, dim: usize, offset: f64, seed: u64) -> Vec<Item> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let class = i % 2;
        let sign = if class == 0 { -1.0 } else { 1.0 };
        let features = (0..dim).map(|_| sign * offset + rng.random_range(-1.0..1.0)).collect();
        items.push(Item {
            id: format!("c{i}"),
            url: String::new(),
            label: Some(class),
            features,
            image: None,
            size_bytes: None,
        });
    }
    items
}
