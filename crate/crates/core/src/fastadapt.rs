//! Client-side evaluation of downloaded experts on a private target set.
//!
//! The only thing that leaves the client is the [`AccuracyReport`]: one score
//! per expert plus scalar metadata.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experts::{argmax, ExpertKind, ExpertModel, ROTATIONS};
use crate::linear::{LinearClassifier, LinearFit};
use crate::manifest::{DatasetManifest, Item};
use crate::split::{split, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rotation accuracy of each expert, inference only.
    Proxy,
    /// Validation accuracy of a linear head trained on frozen hidden features.
    Probe,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proxy" => Ok(Mode::Proxy),
            "probe" => Ok(Mode::Probe),
            other => Err(format!("unknown mode `{other}` (expected proxy or probe)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub split: SplitSpec,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 10,
            learning_rate: 0.01,
            split: SplitSpec {
                train_fraction: 0.8,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub dataset_ref: String,
    pub mode: Mode,
    pub z: Vec<f64>,
    pub target_size: usize,
    pub client_nonce: String,
    /// Probe settings, present in probe mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
}

impl AccuracyReport {
    /// Checks the report against a bundle of `k` experts.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.z.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                found: self.z.len(),
            });
        }
        if let Some(i) = self.z.iter().position(|z| !(z.is_finite() && (0.0..=1.0).contains(z))) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }
}

pub fn new_nonce() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn require_kind(expert: &ExpertModel, kind: ExpertKind) -> Result<()> {
    if expert.kind != kind {
        return Err(Error::KindMismatch {
            expected: kind.as_str(),
            found: expert.kind.as_str(),
        });
    }
    Ok(())
}

/// Fraction of the `4 |T|` rotated target inputs whose rotation the expert
/// predicts correctly. Argmax ties go to the lowest class.
pub fn proxy_accuracy(expert: &ExpertModel, target: &DatasetManifest) -> Result<f64> {
    require_kind(expert, ExpertKind::Rotation)?;
    let correct: usize = target
        .items
        .par_iter()
        .map(|item| -> Result<usize> {
            let mut hits = 0;
            for j in 0..ROTATIONS {
                let probs = expert.predict(&expert.input_for(item, j)?)?;
                hits += usize::from(argmax(&probs) == j);
            }
            Ok(hits)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / (ROTATIONS * target.len()) as f64)
}

fn representations(expert: &ExpertModel, items: &[&Item]) -> Result<Vec<Vec<f64>>> {
    items
        .iter()
        .map(|item| expert.represent(&expert.input_for(item, 0)?))
        .collect()
}

/// Trains a fresh linear head on the expert's frozen hidden layer over the
/// target's train split and returns top-1 accuracy on its validation split.
pub fn linear_probe(expert: &ExpertModel, target: &DatasetManifest, cfg: &ProbeConfig) -> Result<f64> {
    if !target.is_labeled() {
        return Err(Error::MissingLabels);
    }
    let parts = split(target, cfg.split)?;
    let lookup = |ids: &[String]| -> Vec<&Item> {
        let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        target.items.iter().filter(|i| wanted.contains(i.id.as_str())).collect()
    };
    let train = lookup(&parts.train);
    let val = lookup(&parts.val);
    let label = |items: &[&Item]| -> Vec<usize> { items.iter().map(|i| i.label.expect("labeled")).collect() };

    let head = LinearClassifier::fit(
        &representations(expert, &train)?,
        &label(&train),
        target.label_set.len(),
        &LinearFit {
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            balanced: false,
        },
    );
    Ok(head.accuracy(&representations(expert, &val)?, &label(&val)))
}

/// Scores every expert in bundle order.
pub fn fast_adapt(
    experts: &[ExpertModel],
    target: &DatasetManifest,
    mode: Mode,
    probe: &ProbeConfig,
    dataset_ref: &str,
) -> Result<AccuracyReport> {
    if mode == Mode::Proxy {
        if let Some((i, e)) = experts.iter().enumerate().find(|(_, e)| e.kind != ExpertKind::Rotation) {
            return Err(require_kind(e, ExpertKind::Rotation).unwrap_err().for_expert(i));
        }
    }
    let z = experts
        .par_iter()
        .enumerate()
        .map(|(i, expert)| {
            match mode {
                Mode::Proxy => proxy_accuracy(expert, target),
                Mode::Probe => linear_probe(expert, target, probe),
            }
            .map_err(|e| e.for_expert(i))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(AccuracyReport {
        dataset_ref: dataset_ref.to_owned(),
        mode,
        z,
        target_size: target.len(),
        client_nonce: new_nonce(),
        probe: (mode == Mode::Probe).then_some(*probe),
    })
}
