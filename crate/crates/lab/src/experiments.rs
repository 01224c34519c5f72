//! The fixture experiments: relevance of the recommendation, accuracy versus
//! domain confusion, and downstream transfer.

use std::collections::HashSet;

use nds_core::experts::{ExpertKind, ExpertModel, TrainConfig};
use nds_core::fastadapt::{fast_adapt, AccuracyReport, Mode, ProbeConfig};
use nds_core::gating::{GatingConfig, Partition};
use nds_core::index::{build_source_model, subsets, SourceModel};
use nds_core::linear::{LinearClassifier, LinearFit, Standardizer};
use nds_core::manifest::Item;
use nds_core::selection::{recommend, sample_budget, RecommendOptions, SourceIndex};
use nds_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{proxy_a_distance, DomainDistance};
use crate::fixture::{Fixture, LABELS};
use crate::stats::{mean, spearman};

/// |d_A| at or below this is indistinguishable from a chance domain classifier.
pub const CHANCE_BAND: f64 = 0.2;

pub const FLAG_UNDEFINED: &str = "correlation-undefined";

pub const DOWNSTREAM_FIT: LinearFit = LinearFit {
    epochs: 300,
    learning_rate: 0.5,
    balanced: false,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexSettings {
    pub gating: GatingConfig,
    pub train: TrainConfig,
}

impl IndexSettings {
    pub fn standard(k: usize) -> Self {
        IndexSettings {
            gating: GatingConfig::unsupervised(k, 0),
            train: TrainConfig::default(),
        }
    }
}

/// A fixture indexed the way the server would, plus the client's report.
pub struct Indexed<'a> {
    pub fixture: &'a Fixture,
    pub model: SourceModel,
    pub report: AccuracyReport,
}

impl<'a> Indexed<'a> {
    pub fn build(fixture: &'a Fixture, settings: &IndexSettings) -> Result<Self> {
        let model = build_source_model(&fixture.source, &settings.gating, ExpertKind::Rotation, &settings.train)?;
        let report = fast_adapt(
            &model.experts,
            &fixture.target,
            Mode::Proxy,
            &ProbeConfig::default(),
            &fixture.source.name,
        )?;
        Ok(Indexed { fixture, model, report })
    }

    pub fn partition(&self) -> &Partition {
        &self.model.partition
    }

    /// Majority generating blob of every subset.
    pub fn subset_blobs(&self) -> Vec<usize> {
        let blobs = self.fixture.config.blobs();
        let mut counts = vec![vec![0usize; blobs]; self.partition().k];
        for (item, &b) in self.fixture.source.items.iter().zip(&self.fixture.source_blob) {
            let s = self.partition().gate(&item.id).expect("every source item is gated");
            counts[s][b] += 1;
        }
        counts
            .iter()
            .map(|c| (0..blobs).max_by_key(|&b| (c[b], std::cmp::Reverse(b))).unwrap_or(0))
            .collect()
    }

    pub fn source_index(&self) -> SourceIndex<'_> {
        SourceIndex {
            dataset_id: &self.fixture.source.name,
            partition: &self.model.partition,
            manifest: &self.fixture.source,
        }
    }

    pub fn nds_sample(&self, budget: usize, seed: u64) -> Result<Vec<String>> {
        let opts = RecommendOptions {
            seed,
            ..RecommendOptions::new(budget)
        };
        let rec = recommend(&[self.source_index()], &self.report.z, &opts)?;
        Ok(rec.items.into_iter().map(|i| i.id).collect())
    }

    pub fn uniform_sample(&self, budget: usize, seed: u64) -> Result<Vec<String>> {
        let n = self.fixture.source.len();
        let sample = sample_budget(&vec![1.0 / n as f64; n], budget, seed)?;
        Ok(sample
            .indices
            .into_iter()
            .map(|i| self.fixture.source.items[i].id.clone())
            .collect())
    }
}

pub fn budget_items(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub budget_fraction: f64,
    pub budget: usize,
    pub seed: u64,
    /// Share of the recommendation drawn from the target's blob.
    pub nds_fraction: f64,
    pub uniform_fraction: f64,
}

pub fn relevance(indexed: &Indexed<'_>, fraction: f64, seed: u64) -> Result<RelevanceResult> {
    let fixture = indexed.fixture;
    let budget = budget_items(fraction, fixture.source.len());
    let share = |ids: &[String]| {
        let hits = ids
            .iter()
            .filter(|id| fixture.blob_of(id) == Some(fixture.config.target_blob))
            .count();
        hits as f64 / ids.len() as f64
    };
    Ok(RelevanceResult {
        budget_fraction: fraction,
        budget,
        seed,
        nds_fraction: share(&indexed.nds_sample(budget, seed)?),
        uniform_fraction: share(&indexed.uniform_sample(budget, seed)?),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetConfusion {
    pub subset: usize,
    /// Majority generating blob.
    pub blob: usize,
    pub size: usize,
    pub z: f64,
    pub epsilon: f64,
    pub d_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub target_blob: usize,
    pub subsets: Vec<SubsetConfusion>,
    /// Spearman rank correlation between z and d_A.
    pub spearman_z_d_a: Option<f64>,
    pub argmax_z_blob: usize,
    pub argmin_d_a_blob: usize,
    pub flags: Vec<String>,
}

fn expert_inputs(expert: &ExpertModel, items: &[&Item]) -> Result<Vec<Vec<f64>>> {
    items.iter().map(|item| expert.input_for(item, 0)).collect()
}

/// Scores each subset against the target by proxy accuracy and by proxy
/// A-distance, both measured in the experts' input space.
pub fn correlation_experiment(indexed: &Indexed<'_>, seed: u64) -> Result<ConfusionReport> {
    let partition = indexed.partition();
    let members = subsets(&indexed.fixture.source, partition)?;
    let target: Vec<&Item> = indexed.fixture.target.items.iter().collect();
    let blobs = indexed.subset_blobs();
    let distances: Vec<DomainDistance> = members
        .par_iter()
        .enumerate()
        .map(|(i, items)| {
            let expert = &indexed.model.experts[i];
            proxy_a_distance(&expert_inputs(expert, items)?, &expert_inputs(expert, &target)?, seed)
        })
        .collect::<Result<_, Error>>()?;

    let rows: Vec<SubsetConfusion> = (0..partition.k)
        .map(|i| SubsetConfusion {
            subset: i,
            blob: blobs[i],
            size: partition.sizes[i],
            z: indexed.report.z[i],
            epsilon: distances[i].epsilon,
            d_a: distances[i].d_a,
        })
        .collect();
    let z: Vec<f64> = rows.iter().map(|r| r.z).collect();
    let d_a: Vec<f64> = rows.iter().map(|r| r.d_a).collect();
    let mut flags = Vec::new();
    let indistinguishable = d_a.iter().all(|d| d.abs() <= CHANCE_BAND);
    let correlation = if indistinguishable { None } else { spearman(&z, &d_a) };
    if correlation.is_none() {
        flags.push(FLAG_UNDEFINED.to_owned());
    }
    let argmax = (0..rows.len())
        .max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let argmin = (0..rows.len())
        .min_by(|&a, &b| d_a[a].total_cmp(&d_a[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    Ok(ConfusionReport {
        target_blob: indexed.fixture.config.target_blob,
        argmax_z_blob: rows.get(argmax).map_or(0, |r| r.blob),
        argmin_d_a_blob: rows.get(argmin).map_or(0, |r| r.blob),
        subsets: rows,
        spearman_z_d_a: correlation,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nds,
    Uniform,
    Full,
    None,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nds => "nds",
            Method::Uniform => "uniform",
            Method::Full => "full",
            Method::None => "none",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub method: Method,
    pub budget_fraction: f64,
    pub budget: usize,
    pub seed: u64,
    pub accuracy: f64,
}

fn labelled<'a>(items: impl IntoIterator<Item = &'a Item>) -> (Vec<Vec<f64>>, Vec<usize>) {
    items
        .into_iter()
        .map(|i| (i.features.clone(), i.label.expect("fixture items are labelled")))
        .unzip()
}

/// Trains the downstream model on `selected` plus the target sample and
/// returns its accuracy on the held-out target data.
pub fn downstream_accuracy(fixture: &Fixture, selected: &[String]) -> f64 {
    let wanted: HashSet<&str> = selected.iter().map(String::as_str).collect();
    let chosen = fixture.source.items.iter().filter(|i| wanted.contains(i.id.as_str()));
    let (xs, ys) = labelled(chosen.chain(&fixture.target.items));
    let scaler = Standardizer::fit(&xs);
    let h = LinearClassifier::fit(&scaler.transform_all(&xs), &ys, LABELS.len(), &DOWNSTREAM_FIT);
    let (tx, ty) = labelled(&fixture.test.items);
    h.accuracy(&scaler.transform_all(&tx), &ty)
}

/// Every method at every budget and seed. `Full` and `None` do not depend on
/// budget or seed and are reported once each.
pub fn downstream_compare(indexed: &Indexed<'_>, budgets: &[f64], seeds: &[u64]) -> Result<Vec<DownstreamResult>> {
    let fixture = indexed.fixture;
    let n = fixture.source.len();
    let mut jobs: Vec<(Method, f64, u64)> = vec![(Method::Full, 1.0, 0), (Method::None, 0.0, 0)];
    for &f in budgets {
        for &s in seeds {
            jobs.push((Method::Nds, f, s));
            jobs.push((Method::Uniform, f, s));
        }
    }
    jobs.par_iter()
        .map(|&(method, fraction, seed)| {
            let selected = match method {
                Method::Nds => indexed.nds_sample(budget_items(fraction, n), seed)?,
                Method::Uniform => indexed.uniform_sample(budget_items(fraction, n), seed)?,
                Method::Full => fixture.source.items.iter().map(|i| i.id.clone()).collect(),
                Method::None => Vec::new(),
            };
            Ok(DownstreamResult {
                method,
                budget_fraction: fraction,
                budget: selected.len(),
                seed,
                accuracy: downstream_accuracy(fixture, &selected),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownstreamSummary {
    pub method: Method,
    pub budget_fraction: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
}

pub fn summarize(results: &[DownstreamResult]) -> Vec<DownstreamSummary> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in results {
        if !keys.iter().any(|&(m, f)| m == r.method && f == r.budget_fraction) {
            keys.push((r.method, r.budget_fraction));
        }
    }
    keys.into_iter()
        .map(|(method, fraction)| {
            let acc: Vec<f64> = results
                .iter()
                .filter(|r| r.method == method && r.budget_fraction == fraction)
                .map(|r| r.accuracy)
                .collect();
            DownstreamSummary {
                method,
                budget_fraction: fraction,
                runs: acc.len(),
                mean_accuracy: mean(&acc),
            }
        })
        .collect()
}

pub fn mean_accuracy(summary: &[DownstreamSummary], method: Method, fraction: Option<f64>) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.method == method && fraction.is_none_or(|f| (s.budget_fraction - f).abs() < 1e-12))
        .map(|s| s.mean_accuracy)
}
