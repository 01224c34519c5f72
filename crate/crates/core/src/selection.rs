//! Turning expert scores into a budgeted list of source items.
//!
//! Scores are min-max normalized, passed through a temperature softmax to get
//! one weight per expert, and each expert's weight is spread uniformly over
//! its subset: `pi(x) = w_i / |S_i|` for the expert `i` that gates `x`.
//! Items are then drawn without replacement at rates proportional to `pi`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::Partition;
use crate::manifest::{DatasetManifest, Item};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Min-max normalization into `[0, 1]`. Constant input maps to 0.5.
pub fn normalize_scores(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, found: 0 });
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (lo, hi) = min_max(z);
    if hi - lo <= 0.0 {
        return Ok(vec![0.5; z.len()]);
    }
    Ok(z.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

fn min_max(z: &[f64]) -> (f64, f64) {
    z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub temperature: f64,
    /// Range of the raw scores the weights were derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `w_i = exp(z_i / T) / sum_j exp(z_j / T)`, evaluated after subtracting the
/// maximum.
pub fn softmax_weights(z_norm: &[f64], temperature: f64) -> Result<WeightVector> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    if z_norm.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, found: 0 });
    }
    if let Some(i) = z_norm.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let max = z_norm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z_norm.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = e.iter().sum();
    Ok(WeightVector {
        w: e.into_iter().map(|v| v / sum).collect(),
        temperature,
        normalization: None,
    })
}

/// Normalizes raw scores and converts them to expert weights, recording the
/// normalization range.
pub fn weights_from_scores(z: &[f64], temperature: f64) -> Result<WeightVector> {
    let z_norm = normalize_scores(z)?;
    let mut weights = softmax_weights(&z_norm, temperature)?;
    let (z_min, z_max) = min_max(z);
    weights.normalization = Some(Normalization { z_min, z_max });
    Ok(weights)
}

/// Per-item probabilities for items gated to `experts[n]`, where expert `i`
/// owns `sizes[i]` items.
pub fn item_probabilities_for(w: &WeightVector, experts: &[usize], sizes: &[usize]) -> Result<Vec<f64>> {
    if w.len() != sizes.len() {
        return Err(Error::LengthMismatch {
            expected: sizes.len(),
            found: w.len(),
        });
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidConfig("every subset needs at least one item".into()));
    }
    experts
        .iter()
        .map(|&e| {
            if e >= sizes.len() {
                return Err(Error::InvalidConfig(format!("expert index {e} out of range")));
            }
            Ok(w.w[e] / sizes[e] as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemProbabilities {
    /// Item ids in partition order.
    pub ids: Vec<String>,
    pub pi: Vec<f64>,
}

impl ItemProbabilities {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|p| self.pi[p])
    }
}

pub fn item_probabilities(w: &WeightVector, partition: &Partition) -> Result<ItemProbabilities> {
    let experts = partition.labels();
    let pi = item_probabilities_for(w, &experts, &partition.sizes)?;
    Ok(ItemProbabilities {
        ids: partition.assignment.keys().cloned().collect(),
        pi,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Positions into the probability vector, in draw order.
    pub indices: Vec<usize>,
    /// True when zero-probability items were appended to fill the budget.
    pub padded: bool,
}

/// Draws `min(budget, n)` distinct positions without replacement.
///
/// Each position with `pi > 0` gets the key `u^(1/pi)` for a uniform `u` from a
/// generator seeded with `seed`; the largest keys win. When fewer than
/// `budget` positions have positive probability, zero-probability positions
/// are appended in index order and the sample is flagged as padded.
pub fn sample_budget(pi: &[f64], budget: usize, seed: u64) -> Result<Sample> {
    if pi.is_empty() {
        return Err(Error::EmptySource);
    }
    if budget == 0 {
        return Err(Error::InvalidBudget("budget must be at least 1".into()));
    }
    if let Some(i) = pi.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::NonFinite(i));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ln(u) / pi orders identically to u^(1/pi) and does not underflow.
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(pi.len());
    for (i, &p) in pi.iter().enumerate() {
        let u = 1.0 - rng.random::<f64>();
        if p > 0.0 {
            keyed.push((u.ln() / p, i));
        }
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let take = budget.min(pi.len());
    let mut indices: Vec<usize> = keyed.iter().take(take).map(|&(_, i)| i).collect();
    let padded = indices.len() < take;
    if padded {
        indices.extend(
            pi.iter()
                .enumerate()
                .filter(|(_, &p)| p == 0.0)
                .map(|(i, _)| i)
                .take(take - indices.len()),
        );
    }
    Ok(Sample { indices, padded })
}

/// Longest prefix of `order` whose summed sizes stay within `max_bytes`.
pub fn cap_bytes(order: &[usize], sizes: &[Option<u64>], max_bytes: u64) -> Result<Vec<usize>> {
    let mut used = 0u64;
    let mut out = Vec::new();
    for &i in order {
        let size = sizes[i].ok_or_else(|| Error::InvalidBudget("byte budget needs size hints on every item".into()))?;
        if used + size > max_bytes {
            break;
        }
        used += size;
        out.push(i);
    }
    Ok(out)
}

/// One indexed source dataset: its partition and the manifest the partition
/// was built from.
#[derive(Debug, Clone, Copy)]
pub struct SourceIndex<'a> {
    pub dataset_id: &'a str,
    pub partition: &'a Partition,
    pub manifest: &'a DatasetManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecommendOptions {
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_bytes: Option<u64>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

impl RecommendOptions {
    pub fn new(budget: usize) -> Self {
        RecommendOptions {
            budget,
            budget_bytes: None,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
        }
    }
}

pub const FLAG_PADDED: &str = "padded";
pub const FLAG_BYTE_CAPPED: &str = "byte-capped";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub id: String,
    pub url: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertWeight {
    /// Index within the bundle.
    pub expert: usize,
    pub w: f64,
    /// Number of source items gated to this expert.
    pub size: usize,
    pub dataset: String,
    /// Index within the dataset's own partition.
    pub subset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub dataset_ref: String,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_bytes: Option<u64>,
    pub seed: u64,
    pub temperature: f64,
    pub flags: Vec<String>,
    /// Sampled items in draw order.
    pub items: Vec<RecommendedItem>,
    pub weights: Vec<ExpertWeight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
}

impl Recommendation {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.id.as_str())
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// One URL per line.
    pub fn url_list(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&item.url);
            out.push('\n');
        }
        out
    }
}

/// The full pipeline: normalize, softmax, spread over subsets, sample.
///
/// Expert indices run over the sources in order, each source contributing
/// its partition's experts in partition order.
pub fn recommend(sources: &[SourceIndex<'_>], z: &[f64], opts: &RecommendOptions) -> Result<Recommendation> {
    if sources.is_empty() {
        return Err(Error::EmptySource);
    }
    if opts.budget == 0 {
        return Err(Error::InvalidBudget("budget must be at least 1".into()));
    }
    let k: usize = sources.iter().map(|s| s.partition.k).sum();
    if z.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            found: z.len(),
        });
    }
    let weights = weights_from_scores(z, opts.temperature)?;

    let mut sizes = Vec::with_capacity(k);
    let mut expert_of = Vec::new();
    let mut owner = Vec::new();
    let mut expert_rows = Vec::with_capacity(k);
    for (s, source) in sources.iter().enumerate() {
        let offset = sizes.len();
        for (local, &size) in source.partition.sizes.iter().enumerate() {
            expert_rows.push(ExpertWeight {
                expert: offset + local,
                w: weights.w[offset + local],
                size,
                dataset: source.dataset_id.to_owned(),
                subset: local,
            });
            sizes.push(size);
        }
        for (id, &e) in &source.partition.assignment {
            expert_of.push(offset + e);
            owner.push((s, id.as_str()));
        }
    }
    let pi = item_probabilities_for(&weights, &expert_of, &sizes)?;

    let lookup = |n: usize| -> Result<&Item> {
        let (s, id) = owner[n];
        sources[s]
            .manifest
            .item(id)
            .ok_or_else(|| Error::UnknownItem(id.to_owned()))
    };

    let mut flags = Vec::new();
    let order = match opts.budget_bytes {
        None => {
            let sample = sample_budget(&pi, opts.budget, opts.seed)?;
            if sample.padded {
                flags.push(FLAG_PADDED.to_owned());
            }
            sample.indices
        }
        Some(max_bytes) => {
            let full = sample_budget(&pi, pi.len(), opts.seed)?;
            let item_sizes = (0..pi.len())
                .map(|n| lookup(n).map(|i| i.size_bytes))
                .collect::<Result<Vec<_>>>()?;
            let mut capped = cap_bytes(&full.indices, &item_sizes, max_bytes)?;
            capped.truncate(opts.budget);
            if capped.len() < opts.budget.min(pi.len()) {
                flags.push(FLAG_BYTE_CAPPED.to_owned());
            }
            if capped.iter().any(|&n| pi[n] == 0.0) {
                flags.push(FLAG_PADDED.to_owned());
            }
            capped
        }
    };

    let items = order
        .into_iter()
        .map(|n| {
            let item = lookup(n)?;
            Ok(RecommendedItem {
                id: item.id.clone(),
                url: item.url.clone(),
                dataset: sources[owner[n].0].dataset_id.to_owned(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Recommendation {
        dataset_ref: sources.iter().map(|s| s.dataset_id).collect::<Vec<_>>().join(","),
        budget: opts.budget,
        budget_bytes: opts.budget_bytes,
        seed: opts.seed,
        temperature: opts.temperature,
        flags,
        items,
        weights: expert_rows,
        normalization: weights.normalization,
    })
}
