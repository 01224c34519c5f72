//! Lloyd's k-means with k-means++ seeding and empty-cluster repair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; equidistant centroids resolve to the
/// lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_seeds<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), points[chosen[0]].as_ref()))
        .collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just past the final sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            // Every remaining point coincides with a chosen centroid.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p.as_ref(), points[next].as_ref());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen
}

fn assign<P: AsRef<[f64]> + Sync>(points: &[P], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points.par_iter().map(|p| nearest(p.as_ref(), centroids)).collect()
}

/// Moves the point farthest from its centroid into each empty cluster and
/// re-centres the empty cluster on it.
fn repair_empty(assigned: &mut [(usize, f64)], centroids: &mut [Vec<f64>], points: &[impl AsRef<[f64]>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &(l, _) in assigned.iter() {
        sizes[l] += 1;
    }
    for cluster in 0..k {
        if sizes[cluster] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, &(l, d)) in assigned.iter().enumerate() {
            if sizes[l] > 1 && donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let Some((i, _)) = donor else { break };
        sizes[assigned[i].0] -= 1;
        sizes[cluster] += 1;
        assigned[i] = (cluster, 0.0);
        centroids[cluster] = points[i].as_ref().to_vec();
    }
}

fn means<P: AsRef<[f64]>>(points: &[P], labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = previous.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut counts = vec![0usize; previous.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(previous)
        .map(|((mut s, c), prev)| {
            if c == 0 {
                return prev.clone();
            }
            let inv = 1.0 / c as f64;
            s.iter_mut().for_each(|v| *v *= inv);
            s
        })
        .collect()
}

pub fn kmeans<P: AsRef<[f64]> + Sync>(points: &[P], cfg: &KMeansConfig) -> Result<KMeans> {
    let n = points.len();
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, available: n });
    }
    if cfg.tol.is_nan() || cfg.tol < 0.0 {
        return Err(Error::InvalidConfig("tol must be non-negative".into()));
    }
    let dim = points[0].as_ref().len();
    if let Some(bad) = points.iter().position(|p| p.as_ref().len() != dim) {
        return Err(Error::InputDimension {
            expected: dim,
            found: points[bad].as_ref().len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids: Vec<Vec<f64>> = plus_plus_seeds(points, cfg.k, &mut rng)
        .into_iter()
        .map(|i| points[i].as_ref().to_vec())
        .collect();

    let mut inertia_history = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut assigned = assign(points, &centroids);
        repair_empty(&mut assigned, &mut centroids, points);
        inertia_history.push(assigned.iter().map(|&(_, d)| d).sum());

        let labels: Vec<usize> = assigned.iter().map(|&(l, _)| l).collect();
        let updated = means(points, &labels, &centroids);
        let shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < cfg.tol {
            break;
        }
    }

    let mut assigned = assign(points, &centroids);
    repair_empty(&mut assigned, &mut centroids, points);
    inertia_history.push(assigned.iter().map(|&(_, d)| d).sum());
    let labels: Vec<usize> = assigned.into_iter().map(|(l, _)| l).collect();
    let centroids = means(points, &labels, &centroids);

    Ok(KMeans {
        labels,
        centroids,
        iterations,
        inertia_history,
    })
}
