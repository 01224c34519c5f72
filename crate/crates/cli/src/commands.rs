//! The client workflow: fetch, adapt, recommend.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nds_core::fastadapt::{fast_adapt, AccuracyReport, Mode, ProbeConfig};
use nds_core::manifest::DatasetManifest;
use nds_core::protocol::{BuildRequest, DatasetStatus, DatasetSummary, RecommendationRequest};
use nds_core::selection::Recommendation;

use crate::bundle::{self, write_file};
use crate::client::Client;
use crate::error::{CliError, Result};

pub const REPORT_FILE: &str = "report.json";
pub const RECOMMENDATION_FILE: &str = "recommendation.json";
pub const URLS_FILE: &str = "urls.txt";

/// Scores the cached bundle in `bundle_dir` on a local target manifest and
/// writes the report to `out`. Only the report ever leaves this machine.
pub fn adapt(bundle_dir: &Path, target: &Path, mode: Mode, probe: &ProbeConfig, out: &Path) -> Result<AccuracyReport> {
    let (bundle, experts) = bundle::load(bundle_dir)?;
    let target = DatasetManifest::load(target)?;
    let start = Instant::now();
    let report = fast_adapt(&experts, &target, mode, probe, &bundle.dataset_ref)?;
    tracing::info!(
        experts = experts.len(),
        target = target.len(),
        elapsed_ms = start.elapsed().as_millis() as u64,
        "scored experts"
    );
    let path = out.join(REPORT_FILE);
    write_file(&path, &serde_json::to_vec_pretty(&report).expect("report serializes"))?;
    tracing::info!(path = %path.display(), "wrote report");
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<AccuracyReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Default)]
pub struct RecommendArgs {
    pub budget: usize,
    pub budget_bytes: Option<u64>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

/// Sends the report and writes the recommendation JSON and the URL list.
pub fn recommend(client: &Client, report: AccuracyReport, args: &RecommendArgs, out: &Path) -> Result<Recommendation> {
    let request = RecommendationRequest {
        report,
        budget: args.budget,
        budget_bytes: args.budget_bytes,
        temperature: args.temperature,
        seed: args.seed,
    };
    let rec = client.recommend(&request)?;
    write_file(
        &out.join(RECOMMENDATION_FILE),
        &serde_json::to_vec_pretty(&rec).expect("recommendation serializes"),
    )?;
    write_file(&out.join(URLS_FILE), rec.url_list().as_bytes())?;
    tracing::info!(items = rec.items.len(), dir = %out.display(), "wrote recommendation");
    for flag in &rec.flags {
        tracing::warn!(flag, "recommendation flagged");
    }
    Ok(rec)
}

/// Per-expert table: score, weight and subset size.
pub fn weight_table(report: &AccuracyReport, rec: &Recommendation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:<20} {:>6} {:>8} {:>8} {:>10}",
        "expert", "dataset", "subset", "size", "z", "weight"
    );
    for w in &rec.weights {
        let z = report.z.get(w.expert).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{:>6}  {:<20} {:>6} {:>8} {:>8.4} {:>10.6}",
            w.expert, w.dataset, w.subset, w.size, z, w.w
        );
    }
    let _ = write!(
        out,
        "{} items recommended from {} (budget {}, T={}, seed {})",
        rec.items.len(),
        rec.dataset_ref,
        rec.budget,
        rec.temperature,
        rec.seed
    );
    if !rec.flags.is_empty() {
        let _ = write!(out, " [{}]", rec.flags.join(", "));
    }
    out.push('\n');
    out
}

pub fn dataset_table(datasets: &[DatasetSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<12} {:>8} {:>4}  checksum",
        "dataset", "status", "items", "k"
    );
    for d in datasets {
        let _ = writeln!(
            out,
            "{:<24} {:<12} {:>8} {:>4}  {}",
            d.id,
            d.status.as_str(),
            d.items,
            d.k.map_or_else(|| "-".to_owned(), |k| k.to_string()),
            &d.checksum[..d.checksum.len().min(12)]
        );
    }
    out
}

pub fn register(client: &Client, manifest: &Path) -> Result<DatasetSummary> {
    let text = std::fs::read_to_string(manifest).map_err(|e| CliError::io(manifest, e))?;
    // Parse locally first so malformed files fail before any upload.
    let parsed = DatasetManifest::parse(&text)?;
    client.register(&parsed.to_jsonl())
}

/// Starts a build and, with `wait`, polls until it finishes.
pub fn build(client: &Client, id: &str, request: &BuildRequest, wait: Option<Duration>) -> Result<DatasetSummary> {
    let mut summary = client.build(id, request)?;
    let Some(poll) = wait else {
        return Ok(summary);
    };
    while matches!(summary.status, DatasetStatus::Building | DatasetStatus::Registered) {
        std::thread::sleep(poll);
        summary = client.status(id)?;
    }
    match summary.status {
        DatasetStatus::Ready => Ok(summary),
        _ => Err(CliError::Data(format!(
            "build of {id} ended in status {}: {}",
            summary.status.as_str(),
            summary.error.as_deref().unwrap_or("no error recorded")
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct E2eArgs {
    pub datasets: Vec<String>,
    pub target: PathBuf,
    pub mode: Mode,
    pub probe: ProbeConfig,
    pub recommend: RecommendArgs,
    pub out: PathBuf,
}

/// fetch, adapt and recommend in one go. The bundle is cached under
/// `<out>/bundle`.
pub fn e2e(client: &Client, args: &E2eArgs) -> Result<(AccuracyReport, Recommendation)> {
    let bundle_dir = args.out.join("bundle");
    bundle::fetch(client, &args.datasets, &bundle_dir)?;
    let report = adapt(&bundle_dir, &args.target, args.mode, &args.probe, &args.out)?;
    let rec = recommend(client, report.clone(), &args.recommend, &args.out)?;
    Ok((report, rec))
}
