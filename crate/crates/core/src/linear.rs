//! Multinomial logistic regression trained by full-batch gradient descent.
//!
//! Used for the client's linear probe heads and by the validation harness
//! for domain classifiers and downstream models.

use serde::{Deserialize, Serialize};

use crate::experts::{argmax, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight every class equally regardless of its frequency.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    n_in: usize,
    n_classes: usize,
    /// Row-major `n_in x n_classes`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(n_in: usize, n_classes: usize) -> Self {
        LinearClassifier {
            n_in,
            n_classes,
            w: vec![0.0; n_in * n_classes],
            b: vec![0.0; n_classes],
        }
    }

    /// Fits from zero weights. `ys` must lie in `0..n_classes`.
    pub fn fit(xs: &[Vec<f64>], ys: &[usize], n_classes: usize, cfg: &LinearFit) -> Self {
        let n_in = xs.first().map_or(0, Vec::len);
        let mut model = LinearClassifier::zeros(n_in, n_classes);
        model.train(xs, ys, cfg);
        model
    }

    /// Continues gradient descent from the current weights.
    pub fn train(&mut self, xs: &[Vec<f64>], ys: &[usize], cfg: &LinearFit) {
        assert_eq!(xs.len(), ys.len(), "inputs and labels differ in length");
        if xs.is_empty() {
            return;
        }
        let n_classes = self.n_classes;

        let mut counts = vec![0usize; n_classes];
        for &y in ys {
            counts[y] += 1;
        }
        let sample_weight: Vec<f64> = ys
            .iter()
            .map(|&y| {
                if cfg.balanced {
                    xs.len() as f64 / (n_classes as f64 * counts[y] as f64)
                } else {
                    1.0
                }
            })
            .collect();
        let total: f64 = sample_weight.iter().sum();

        let mut gw = vec![0.0; self.w.len()];
        let mut gb = vec![0.0; n_classes];
        for _ in 0..cfg.epochs {
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            for ((x, &y), &sw) in xs.iter().zip(ys).zip(&sample_weight) {
                let mut delta = softmax(&self.logits(x));
                delta[y] -= 1.0;
                for (xi, row) in x.iter().zip(gw.chunks_exact_mut(n_classes)) {
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += sw * xi * d;
                    }
                }
                for (g, d) in gb.iter_mut().zip(&delta) {
                    *g += sw * d;
                }
            }
            let step = cfg.learning_rate / total;
            for (w, g) in self.w.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in self.b.iter_mut().zip(&gb) {
                *b -= step * g;
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n_in
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for (xi, row) in x.iter().zip(self.w.chunks_exact(self.n_classes)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    /// Predicted class; ties resolve to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let correct = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        correct as f64 / xs.len() as f64
    }
}

/// Per-dimension z-scoring with statistics taken from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let dim = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, inv_std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    pub fn transform_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.transform(x)).collect()
    }
}
