//! Two-layer tanh perceptron with a softmax head, trained by cross-entropy.

use rand::Rng;

/// Weights are stored row-major: `w1[i * hidden + j]` connects input `i` to
/// hidden unit `j`, `w2[j * n_out + k]` connects hidden `j` to output `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) d_in: usize,
    pub(crate) hidden: usize,
    pub(crate) n_out: usize,
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    /// All partial derivatives in parameter order (`w1`, `b1`, `w2`, `b2`).
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Mlp {
    pub fn zeros(d_in: usize, hidden: usize, n_out: usize) -> Self {
        Mlp {
            d_in,
            hidden,
            n_out,
            w1: vec![0.0; d_in * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * n_out],
            b2: vec![0.0; n_out],
        }
    }

    /// Uniform initialisation with variance `scale^2 / fan_in`; biases start at 0.
    pub fn random(d_in: usize, hidden: usize, n_out: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut mlp = Mlp::zeros(d_in, hidden, n_out);
        let a1 = scale * (3.0 / d_in as f64).sqrt();
        let a2 = scale * (3.0 / hidden as f64).sqrt();
        mlp.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..=a1));
        mlp.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..=a2));
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.n_out
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|w| w.is_finite())
    }

    /// Hidden-layer activations.
    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d_in);
        let mut h = self.b1.clone();
        for (xi, row) in x.iter().zip(self.w1.chunks_exact(self.hidden)) {
            if *xi == 0.0 {
                continue;
            }
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += xi * w;
            }
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        h
    }

    fn head(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.b2.clone();
        for (hj, row) in h.iter().zip(self.w2.chunks_exact(self.n_out)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += hj * w;
            }
        }
        out
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.head(&self.hidden(x))
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Mean cross-entropy `-ln p_target` over `batch` and its gradient.
    ///
    /// The loss is taken from the probabilities themselves, so a target
    /// probability that underflows to zero yields an infinite loss.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], usize)]) -> (f64, Gradients) {
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut loss = 0.0;
        let mut delta_h = vec![0.0; self.hidden];
        for &(x, target) in batch {
            let h = self.hidden(x);
            let mut delta = softmax(&self.head(&h));
            loss -= delta[target].ln();
            delta[target] -= 1.0;

            for (j, hj) in h.iter().enumerate() {
                let row = &self.w2[j * self.n_out..(j + 1) * self.n_out];
                let grow = &mut g.w2[j * self.n_out..(j + 1) * self.n_out];
                let mut back = 0.0;
                for ((gw, w), d) in grow.iter_mut().zip(row).zip(&delta) {
                    *gw += hj * d;
                    back += w * d;
                }
                delta_h[j] = back * (1.0 - hj * hj);
            }
            for (gb, d) in g.b2.iter_mut().zip(&delta) {
                *gb += d;
            }
            for (xi, grow) in x.iter().zip(g.w1.chunks_exact_mut(self.hidden)) {
                if *xi == 0.0 {
                    continue;
                }
                for (gw, d) in grow.iter_mut().zip(&delta_h) {
                    *gw += xi * d;
                }
            }
            for (gb, d) in g.b1.iter_mut().zip(&delta_h) {
                *gb += d;
            }
        }
        let inv = 1.0 / batch.len().max(1) as f64;
        for v in [&mut g.w1, &mut g.b1, &mut g.w2, &mut g.b2] {
            v.iter_mut().for_each(|x| *x *= inv);
        }
        (loss * inv, g)
    }

    pub fn step(&mut self, grads: &Gradients, learning_rate: f64) {
        for (w, g) in self.parameters_mut().zip(grads.flat()) {
            *w -= learning_rate * g;
        }
    }

    /// Rounds every weight to the nearest `f32` so the model survives the
    /// 32-bit blob format unchanged.
    pub fn round_to_f32(&mut self) {
        self.parameters_mut().for_each(|w| *w = f64::from(*w as f32));
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 4]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4]), 1);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::random(5, 4, 3, 1.0, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 3)).collect();
        let (_, g) = mlp.loss_and_gradient(&batch);
        let analytic = g.flat();
        let eps = 1e-6;
        for (p, &a) in analytic.iter().enumerate() {
            let mut plus = mlp.clone();
            *plus.parameters_mut().nth(p).unwrap() += eps;
            let mut minus = mlp.clone();
            *minus.parameters_mut().nth(p).unwrap() -= eps;
            let numeric = (plus.loss_and_gradient(&batch).0 - minus.loss_and_gradient(&batch).0) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-7);
            assert!((a - numeric).abs() / denom < 1e-4, "param {p}");
        }
    }

    #[test]
    fn overflowing_logits_give_infinite_loss() {
        let mut mlp = Mlp::zeros(1, 1, 2);
        mlp.b2 = vec![0.0, 1e4];
        let (loss, _) = mlp.loss_and_gradient(&[(&[0.0], 0)]);
        assert!(loss.is_infinite());
    }
}
