//! Experts: one compact classifier per gating subset.
//!
//! A rotation expert learns to tell which of the four quarter turns was
//! applied to an item; a task-specific expert learns the subset's class
//! labels. Both are two-layer tanh perceptrons trained with mini-batch SGD.

mod blob;
mod mlp;
pub mod rotation;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::blob::{deserialize_expert, serialize_expert, BLOB_MAGIC, BLOB_VERSION};
pub use self::mlp::{argmax, softmax, Gradients, Mlp};
pub use self::rotation::{rotate, rotate_grid, rotation_input, rotation_instances, RotationSource, ROTATIONS};
use crate::error::{Error, Result};
use crate::manifest::Item;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExpertKind {
    #[serde(rename = "rotation")]
    Rotation,
    #[serde(rename = "task-specific")]
    TaskSpecific,
}

impl ExpertKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExpertKind::Rotation => "rotation",
            ExpertKind::TaskSpecific => "task-specific",
        }
    }
}

/// What an expert's input vector is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Features,
    Image,
    FeatureGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::weight_init_scale")]
    pub weight_init_scale: f64,
    #[serde(default = "defaults::hidden")]
    pub hidden: usize,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        0.1
    }
    pub fn epochs() -> usize {
        30
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn weight_init_scale() -> f64 {
        1.0
    }
    pub fn hidden() -> usize {
        64
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: defaults::learning_rate(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            seed: 0,
            weight_init_scale: defaults::weight_init_scale(),
            hidden: defaults::hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.weight_init_scale > 0.0 && self.weight_init_scale.is_finite()) {
            return Err(Error::InvalidConfig("weight_init_scale must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and hidden must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub kind: ExpertKind,
    pub input: InputKind,
    pub activation: Activation,
    pub subset_index: usize,
    pub trained_on_size: usize,
    /// Manifest label index of each output (task-specific experts only).
    pub classes: Vec<usize>,
    pub(crate) net: Mlp,
}

#[derive(Debug, Clone)]
pub struct TrainedExpert {
    pub model: ExpertModel,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

impl ExpertModel {
    pub fn from_network(kind: ExpertKind, input: InputKind, net: Mlp) -> Self {
        ExpertModel {
            kind,
            input,
            activation: Activation::Tanh,
            subset_index: 0,
            trained_on_size: 0,
            classes: Vec::new(),
            net,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.net.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn check_dim(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::InputDimension {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities for one input vector.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(input)?;
        Ok(self.net.probabilities(input))
    }

    /// Hidden-layer activations, the expert's learned representation.
    pub fn represent(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(input)?;
        Ok(self.net.hidden(input))
    }

    /// Input vector for `item`, rotated when the expert reads images or grids.
    pub fn input_for(&self, item: &Item, quarter_turns: usize) -> Result<Vec<f64>> {
        let input = match self.input {
            InputKind::Features => item.features.clone(),
            InputKind::Image => rotation_input(item, RotationSource::Image, quarter_turns)?,
            InputKind::FeatureGrid => rotation_input(item, RotationSource::FeatureGrid, quarter_turns)?,
        };
        self.check_dim(&input)?;
        Ok(input)
    }
}

fn fit(
    d_in: usize,
    n_out: usize,
    inputs: &[Vec<f64>],
    targets: &[usize],
    cfg: &TrainConfig,
) -> Result<(Mlp, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::random(d_in, cfg.hidden, n_out, cfg.weight_init_scale, &mut rng);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (inputs[i].as_slice(), targets[i])).collect();
            let (loss, grads) = net.loss_and_gradient(&batch);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            net.step(&grads, cfg.learning_rate);
        }
        if !net.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        losses.push(total / inputs.len() as f64);
    }
    net.round_to_f32();
    Ok((net, losses))
}

/// Trains a rotation expert on all four rotations of every item.
pub fn train_expert_ss(items: &[&Item], cfg: &TrainConfig) -> Result<TrainedExpert> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::TooFewItems { needed: 1, found: 0 });
    }
    let source = RotationSource::for_items(items.iter().copied());
    let instances = rotation_instances(items, source)?;
    let targets: Vec<usize> = instances.iter().map(|i| i.target()).collect();
    let inputs: Vec<Vec<f64>> = instances.into_iter().map(|i| i.input).collect();
    let d_in = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != d_in) {
        return Err(Error::InputDimension {
            expected: d_in,
            found: bad.len(),
        });
    }
    let (net, epoch_losses) = fit(d_in, ROTATIONS, &inputs, &targets, cfg)?;
    let input = match source {
        RotationSource::Image => InputKind::Image,
        RotationSource::FeatureGrid => InputKind::FeatureGrid,
    };
    let mut model = ExpertModel::from_network(ExpertKind::Rotation, input, net);
    model.trained_on_size = items.len();
    Ok(TrainedExpert { model, epoch_losses })
}

/// Trains a classifier over the labels present in the subset.
pub fn train_expert_ts(items: &[&Item], cfg: &TrainConfig) -> Result<TrainedExpert> {
    cfg.validate()?;
    let labels: Vec<usize> = items
        .iter()
        .map(|i| i.label.ok_or(Error::MissingLabels))
        .collect::<Result<_>>()?;
    if labels.is_empty() {
        return Err(Error::TooFewItems { needed: 2, found: 0 });
    }
    let mut classes = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is among the classes"))
        .collect();
    let inputs: Vec<Vec<f64>> = items.iter().map(|i| i.features.clone()).collect();
    let d_in = inputs[0].len();
    let (net, epoch_losses) = fit(d_in, classes.len(), &inputs, &targets, cfg)?;
    let mut model = ExpertModel::from_network(ExpertKind::TaskSpecific, InputKind::Features, net);
    model.trained_on_size = items.len();
    model.classes = classes;
    Ok(TrainedExpert { model, epoch_losses })
}

pub fn train_expert(kind: ExpertKind, items: &[&Item], cfg: &TrainConfig) -> Result<TrainedExpert> {
    match kind {
        ExpertKind::Rotation => train_expert_ss(items, cfg),
        ExpertKind::TaskSpecific => train_expert_ts(items, cfg),
    }
}
