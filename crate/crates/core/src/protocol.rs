//! JSON bodies exchanged between the dataserver and its clients under `/v1`.

use serde::{Deserialize, Serialize};

use crate::experts::{ExpertKind, TrainConfig};
use crate::fastadapt::AccuracyReport;
use crate::gating::{GatingConfig, Scheme};

pub const API_PREFIX: &str = "/v1";

/// Splits a comma-separated dataset reference into ids.
pub fn parse_dataset_ref(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetStatus {
    Registered,
    Building,
    Ready,
    Failed,
    Quarantined,
}

impl DatasetStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetStatus::Registered => "registered",
            DatasetStatus::Building => "building",
            DatasetStatus::Ready => "ready",
            DatasetStatus::Failed => "failed",
            DatasetStatus::Quarantined => "quarantined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub status: DatasetStatus,
    pub checksum: String,
    pub items: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub registered_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_finished_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRequest {
    pub gating_cfg: GatingConfig,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default = "default_kind")]
    pub expert_kind: ExpertKind,
}

fn default_kind() -> ExpertKind {
    ExpertKind::Rotation
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleEntry {
    /// Position within the bundle.
    pub index: usize,
    pub dataset: String,
    /// Index within the dataset's partition.
    pub subset: usize,
    pub size: usize,
    pub kind: ExpertKind,
    pub scheme: Scheme,
    pub sha256: String,
    pub bytes: usize,
    pub href: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub dataset_ref: String,
    pub blob_version: u16,
    pub experts: Vec<BundleEntry>,
}

impl BundleManifest {
    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.experts.iter().map(|e| e.size).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRequest {
    pub report: AccuracyReport,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
}

impl ApiError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            code: code.into(),
            message: message.into(),
            detail: serde_json::Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}
