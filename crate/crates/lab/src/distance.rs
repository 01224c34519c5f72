//! Proxy A-distance between a source subset and the target.

use nds_core::linear::{LinearClassifier, LinearFit, Standardizer};
use nds_core::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Domain-classifier settings: logistic regression on standardized inputs.
pub const DOMAIN_FIT: LinearFit = LinearFit {
    epochs: 200,
    learning_rate: 0.5,
    balanced: true,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainDistance {
    /// Held-out balanced error of the domain classifier.
    pub epsilon: f64,
    /// `2 (1 - 2 epsilon)`.
    pub d_a: f64,
}

fn halves(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = n.div_ceil(2);
    let held = idx.split_off(cut);
    (idx, held)
}

/// Trains a linear classifier to tell `subset` (class 0) from `target`
/// (class 1) on half of each set and measures its balanced error on the
/// other half.
pub fn proxy_a_distance(subset: &[Vec<f64>], target: &[Vec<f64>], seed: u64) -> Result<DomainDistance, Error> {
    if subset.len() < 2 || target.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            found: subset.len().min(target.len()),
        });
    }
    let dim = subset[0].len();
    if let Some(bad) = subset.iter().chain(target).find(|x| x.len() != dim) {
        return Err(Error::InputDimension {
            expected: dim,
            found: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s_train, s_test) = halves(subset.len(), &mut rng);
    let (t_train, t_test) = halves(target.len(), &mut rng);

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(s_train.len() + t_train.len());
    let mut ys = Vec::with_capacity(xs.capacity());
    for &i in &s_train {
        xs.push(subset[i].clone());
        ys.push(0);
    }
    for &i in &t_train {
        xs.push(target[i].clone());
        ys.push(1);
    }
    let scaler = Standardizer::fit(&xs);
    let model = LinearClassifier::fit(&scaler.transform_all(&xs), &ys, 2, &DOMAIN_FIT);

    let error_rate = |set: &[Vec<f64>], idx: &[usize], class: usize| -> f64 {
        let wrong = idx
            .iter()
            .filter(|&&i| model.predict(&scaler.transform(&set[i])) != class)
            .count();
        wrong as f64 / idx.len() as f64
    };
    let epsilon = 0.5 * (error_rate(subset, &s_test, 0) + error_rate(target, &t_test, 1));
    Ok(DomainDistance {
        epsilon,
        d_a: 2.0 * (1.0 - 2.0 * epsilon),
    })
}
