//! Directory-backed dataset registry.
//!
//! ```text
//! <root>/
//!   requests.log                 one JSON object per served request
//!   <dataset-id>/
//!     manifest.jsonl             canonical copy of the registered manifest
//!     record.json                DatasetRecord
//!     partition.json             present once built
//!     experts/expert_<i>.bin     present once built
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place, and
//! `record.json` is written last, so a crash never leaves a record that points
//! at missing or partial files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use nds_core::experts::{serialize_expert, BLOB_VERSION};
use nds_core::gating::Partition;
use nds_core::index::build_source_model;
use nds_core::manifest::{sha256_hex, DatasetManifest, Role};
use nds_core::protocol::{
    BuildRequest, BundleEntry, BundleManifest, DatasetStatus, DatasetSummary, RecommendationRequest,
};
use nds_core::selection::{self, RecommendOptions, Recommendation, SourceIndex, DEFAULT_TEMPERATURE};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StoreError};

const MANIFEST_FILE: &str = "manifest.jsonl";
const RECORD_FILE: &str = "record.json";
const PARTITION_FILE: &str = "partition.json";
const EXPERT_DIR: &str = "experts";
pub const REQUEST_LOG: &str = "requests.log";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub request: BuildRequest,
    pub sizes: Vec<usize>,
    pub partition_sha256: String,
    pub experts: Vec<BlobRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub checksum: String,
    pub status: DatasetStatus,
    pub items: usize,
    pub registered_at: u64,
    #[serde(default)]
    pub build_started_at: Option<u64>,
    #[serde(default)]
    pub build_finished_at: Option<u64>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub build: Option<BuildInfo>,
}

impl DatasetRecord {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            id: self.id.clone(),
            status: self.status,
            checksum: self.checksum.clone(),
            items: self.items,
            k: self.build.as_ref().map(|b| b.sizes.len()),
            scheme: self.build.as_ref().map(|b| b.request.gating_cfg.scheme),
            error: self.error.clone(),
            registered_at: self.registered_at,
            build_started_at: self.build_started_at,
            build_finished_at: self.build_finished_at,
        }
    }
}

/// Everything a ready dataset serves, immutable once built.
#[derive(Debug)]
pub struct ReadyIndex {
    pub partition: Partition,
    pub blobs: Vec<Arc<Vec<u8>>>,
    pub info: BuildInfo,
}

#[derive(Debug)]
struct State {
    record: DatasetRecord,
    index: Option<Arc<ReadyIndex>>,
}

#[derive(Debug)]
pub struct Dataset {
    pub manifest: Arc<DatasetManifest>,
    state: RwLock<State>,
}

impl Dataset {
    pub fn record(&self) -> DatasetRecord {
        self.state.read().expect("state lock").record.clone()
    }

    pub fn index(&self) -> Option<Arc<ReadyIndex>> {
        self.state.read().expect("state lock").index.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildOutcome {
    Started,
    AlreadyBuilding,
    AlreadyReady,
}

pub struct Registry {
    root: PathBuf,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    quarantined: RwLock<BTreeMap<String, DatasetSummary>>,
    /// Serializes every change to the on-disk store.
    writer: Mutex<()>,
    log: Mutex<File>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut file = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
    file.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| StoreError::io(path, e))
}

fn blob_name(i: usize) -> String {
    format!("expert_{i}.bin")
}

impl Registry {
    /// Opens (or creates) a store and recovers every dataset in it.
    ///
    /// Records whose files fail their checksums are quarantined; records left
    /// mid-build by a crash go back to `registered`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Arc<Self>> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        let log_path = root.join(REQUEST_LOG);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| StoreError::io(&log_path, e))?;
        let registry = Registry {
            root: root.clone(),
            datasets: RwLock::new(BTreeMap::new()),
            quarantined: RwLock::new(BTreeMap::new()),
            writer: Mutex::new(()),
            log: Mutex::new(log),
        };

        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
            .map_err(|e| StoreError::io(&root, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            match registry.recover(&id, &dir) {
                Ok(dataset) => {
                    registry
                        .datasets
                        .write()
                        .expect("registry lock")
                        .insert(id, Arc::new(dataset));
                }
                Err(err) => {
                    tracing::warn!(dataset = %id, error = %err, "quarantining dataset");
                    registry.quarantine(&id, &dir, &err.to_string());
                }
            }
        }
        Ok(Arc::new(registry))
    }

    fn recover(&self, id: &str, dir: &Path) -> Result<Dataset> {
        let corrupt = |message: String| StoreError::Corrupt {
            id: id.to_owned(),
            message,
        };
        let record_bytes = read(&dir.join(RECORD_FILE))?;
        let mut record: DatasetRecord =
            serde_json::from_slice(&record_bytes).map_err(|e| corrupt(format!("record.json: {e}")))?;
        if record.id != id {
            return Err(corrupt(format!("record names dataset `{}`", record.id)));
        }
        if record.status == DatasetStatus::Quarantined {
            return Err(corrupt(
                record.error.clone().unwrap_or_else(|| "previously quarantined".into()),
            ));
        }
        let manifest_bytes = read(&dir.join(MANIFEST_FILE))?;
        if sha256_hex(&manifest_bytes) != record.checksum {
            return Err(corrupt("manifest checksum does not match the record".into()));
        }
        let text = String::from_utf8(manifest_bytes).map_err(|_| corrupt("manifest is not UTF-8".into()))?;
        let manifest = DatasetManifest::parse(&text)?;

        let mut index = None;
        match record.status {
            DatasetStatus::Ready => {
                let info = record
                    .build
                    .clone()
                    .ok_or_else(|| corrupt("ready record without build info".into()))?;
                let partition_bytes = read(&dir.join(PARTITION_FILE))?;
                if sha256_hex(&partition_bytes) != info.partition_sha256 {
                    return Err(corrupt("partition checksum mismatch".into()));
                }
                let partition = Partition::from_json(
                    std::str::from_utf8(&partition_bytes).map_err(|_| corrupt("partition is not UTF-8".into()))?,
                )?;
                if partition.sizes != info.sizes || partition.len() != manifest.len() {
                    return Err(corrupt("partition does not match the record".into()));
                }
                let mut blobs = Vec::with_capacity(info.experts.len());
                for blob in &info.experts {
                    let bytes = read(&dir.join(EXPERT_DIR).join(&blob.file))?;
                    if sha256_hex(&bytes) != blob.sha256 {
                        return Err(corrupt(format!("{} checksum mismatch", blob.file)));
                    }
                    blobs.push(Arc::new(bytes));
                }
                index = Some(Arc::new(ReadyIndex { partition, blobs, info }));
            }
            DatasetStatus::Building => {
                record.status = DatasetStatus::Registered;
                record.build_started_at = None;
                self.persist_record(&record)?;
            }
            _ => {}
        }
        Ok(Dataset {
            manifest: Arc::new(manifest),
            state: RwLock::new(State { record, index }),
        })
    }

    fn quarantine(&self, id: &str, dir: &Path, reason: &str) {
        let record = fs::read(dir.join(RECORD_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice::<DatasetRecord>(&b).ok());
        let mut summary = match record {
            Some(r) => r.summary(),
            None => DatasetSummary {
                id: id.to_owned(),
                status: DatasetStatus::Quarantined,
                checksum: String::new(),
                items: 0,
                k: None,
                scheme: None,
                error: None,
                registered_at: 0,
                build_started_at: None,
                build_finished_at: None,
            },
        };
        summary.status = DatasetStatus::Quarantined;
        summary.error = Some(reason.to_owned());
        self.quarantined
            .write()
            .expect("quarantine lock")
            .insert(id.to_owned(), summary);
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn persist_record(&self, record: &DatasetRecord) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
        write_atomic(&self.dir(&record.id).join(RECORD_FILE), &bytes)
    }

    pub fn list(&self) -> Vec<DatasetSummary> {
        let mut out: BTreeMap<String, DatasetSummary> = self
            .datasets
            .read()
            .expect("registry lock")
            .iter()
            .map(|(id, d)| (id.clone(), d.record().summary()))
            .collect();
        for (id, s) in self.quarantined.read().expect("quarantine lock").iter() {
            out.insert(id.clone(), s.clone());
        }
        out.into_values().collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<Dataset>> {
        if let Some(d) = self.datasets.read().expect("registry lock").get(id) {
            return Ok(d.clone());
        }
        if let Some(q) = self.quarantined.read().expect("quarantine lock").get(id) {
            return Err(StoreError::Quarantined {
                id: id.to_owned(),
                reason: q.error.clone().unwrap_or_default(),
            });
        }
        Err(StoreError::UnknownDataset(id.to_owned()))
    }

    pub fn status(&self, id: &str) -> Result<DatasetSummary> {
        if let Some(q) = self.quarantined.read().expect("quarantine lock").get(id) {
            return Ok(q.clone());
        }
        Ok(self.get(id)?.record().summary())
    }

    /// Registers a source manifest under its name. Registering identical
    /// content again returns the existing record; returns whether a new
    /// record was created.
    pub fn register(&self, manifest: DatasetManifest) -> Result<(DatasetSummary, bool)> {
        if manifest.role != Role::Source {
            return Err(StoreError::NotSource);
        }
        manifest.validate()?;
        let id = manifest.name.clone();
        if !valid_id(&id) {
            return Err(StoreError::InvalidId(id));
        }
        let canonical = manifest.to_jsonl();
        let checksum = sha256_hex(canonical.as_bytes());

        let _guard = self.writer.lock().expect("writer lock");
        if let Some(q) = self.quarantined.read().expect("quarantine lock").get(&id) {
            return Err(StoreError::Quarantined {
                id,
                reason: q.error.clone().unwrap_or_default(),
            });
        }
        if let Some(existing) = self.datasets.read().expect("registry lock").get(&id) {
            let record = existing.record();
            if record.checksum == checksum {
                return Ok((record.summary(), false));
            }
            return Err(StoreError::ChecksumConflict {
                id,
                existing: record.checksum,
                found: checksum,
            });
        }

        let dir = self.dir(&id);
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        write_atomic(&dir.join(MANIFEST_FILE), canonical.as_bytes())?;
        let record = DatasetRecord {
            id: id.clone(),
            checksum,
            status: DatasetStatus::Registered,
            items: manifest.len(),
            registered_at: now(),
            build_started_at: None,
            build_finished_at: None,
            error: None,
            build: None,
        };
        self.persist_record(&record)?;
        let summary = record.summary();
        self.datasets.write().expect("registry lock").insert(
            id,
            Arc::new(Dataset {
                manifest: Arc::new(manifest),
                state: RwLock::new(State { record, index: None }),
            }),
        );
        Ok((summary, true))
    }

    /// Moves a dataset to `building` if it is not already built or building.
    fn begin_build(&self, id: &str) -> Result<(Arc<Dataset>, BuildOutcome)> {
        let dataset = self.get(id)?;
        let _guard = self.writer.lock().expect("writer lock");
        let mut state = dataset.state.write().expect("state lock");
        let outcome = match state.record.status {
            DatasetStatus::Ready => BuildOutcome::AlreadyReady,
            DatasetStatus::Building => BuildOutcome::AlreadyBuilding,
            _ => {
                state.record.status = DatasetStatus::Building;
                state.record.build_started_at = Some(now());
                state.record.build_finished_at = None;
                state.record.error = None;
                self.persist_record(&state.record)?;
                BuildOutcome::Started
            }
        };
        drop(state);
        Ok((dataset, outcome))
    }

    /// Starts a background build and returns immediately.
    pub fn start_build(self: &Arc<Self>, id: &str, request: BuildRequest) -> Result<BuildOutcome> {
        let (dataset, outcome) = self.begin_build(id)?;
        if outcome == BuildOutcome::Started {
            let registry = Arc::clone(self);
            std::thread::spawn(move || registry.run_build(&dataset, &request));
        }
        Ok(outcome)
    }

    /// Builds on the calling thread. Returns the final status.
    pub fn build_blocking(&self, id: &str, request: &BuildRequest) -> Result<DatasetSummary> {
        let (dataset, outcome) = self.begin_build(id)?;
        match outcome {
            BuildOutcome::Started => self.run_build(&dataset, request),
            BuildOutcome::AlreadyReady => {}
            BuildOutcome::AlreadyBuilding => {
                return Err(StoreError::NotReady {
                    id: id.to_owned(),
                    status: DatasetStatus::Building.as_str(),
                })
            }
        }
        let record = dataset.record();
        match (&record.status, &record.error) {
            (DatasetStatus::Failed, Some(err)) => Err(StoreError::BuildFailed {
                id: id.to_owned(),
                message: err.clone(),
            }),
            _ => Ok(record.summary()),
        }
    }

    fn run_build(&self, dataset: &Dataset, request: &BuildRequest) {
        let id = dataset.manifest.name.clone();
        tracing::info!(dataset = %id, k = request.gating_cfg.k, "build started");
        let result = self.compute_index(dataset, request).and_then(|index| {
            let _guard = self.writer.lock().expect("writer lock");
            let mut state = dataset.state.write().expect("state lock");
            let mut record = state.record.clone();
            record.status = DatasetStatus::Ready;
            record.build_finished_at = Some(now());
            record.build = Some(index.info.clone());
            self.persist_record(&record)?;
            state.record = record;
            state.index = Some(Arc::new(index));
            Ok(())
        });
        if let Err(err) = result {
            tracing::warn!(dataset = %id, error = %err, "build failed");
            let _guard = self.writer.lock().expect("writer lock");
            let mut state = dataset.state.write().expect("state lock");
            state.record.status = DatasetStatus::Failed;
            state.record.build_finished_at = Some(now());
            state.record.error = Some(err.to_string());
            if let Err(e) = self.persist_record(&state.record) {
                tracing::error!(dataset = %id, error = %e, "could not persist failed build");
            }
        } else {
            tracing::info!(dataset = %id, "build finished");
        }
    }

    /// Partitions the dataset, trains its experts and writes their files.
    fn compute_index(&self, dataset: &Dataset, request: &BuildRequest) -> Result<ReadyIndex> {
        let manifest = &dataset.manifest;
        let model = build_source_model(manifest, &request.gating_cfg, request.expert_kind, &request.train_cfg)?;
        let partition = model.partition;
        let blobs: Vec<Vec<u8>> = model.experts.iter().map(serialize_expert).collect();

        let dir = self.dir(&manifest.name);
        let expert_dir = dir.join(EXPERT_DIR);
        fs::create_dir_all(&expert_dir).map_err(|e| StoreError::io(&expert_dir, e))?;
        let mut refs = Vec::with_capacity(blobs.len());
        for (i, blob) in blobs.iter().enumerate() {
            let file = blob_name(i);
            write_atomic(&expert_dir.join(&file), blob)?;
            refs.push(BlobRef {
                file,
                sha256: sha256_hex(blob),
                bytes: blob.len(),
            });
        }
        let partition_json = partition.to_json();
        write_atomic(&dir.join(PARTITION_FILE), partition_json.as_bytes())?;
        let info = BuildInfo {
            request: request.clone(),
            sizes: partition.sizes.clone(),
            partition_sha256: sha256_hex(partition_json.as_bytes()),
            experts: refs,
        };
        Ok(ReadyIndex {
            partition,
            blobs: blobs.into_iter().map(Arc::new).collect(),
            info,
        })
    }

    fn ready(&self, id: &str) -> Result<(Arc<Dataset>, Arc<ReadyIndex>)> {
        let dataset = self.get(id)?;
        let state = dataset.state.read().expect("state lock");
        let index = state.index.clone().ok_or_else(|| StoreError::NotReady {
            id: id.to_owned(),
            status: state.record.status.as_str(),
        })?;
        drop(state);
        Ok((dataset, index))
    }

    pub fn bundle(&self, ids: &[String]) -> Result<BundleManifest> {
        if ids.is_empty() {
            return Err(StoreError::NoDatasets);
        }
        let mut experts = Vec::new();
        for id in ids {
            let (_, index) = self.ready(id)?;
            for (subset, blob) in index.info.experts.iter().enumerate() {
                experts.push(BundleEntry {
                    index: experts.len(),
                    dataset: id.clone(),
                    subset,
                    size: index.info.sizes[subset],
                    kind: index.info.request.expert_kind,
                    scheme: index.info.request.gating_cfg.scheme,
                    sha256: blob.sha256.clone(),
                    bytes: blob.bytes,
                    href: format!("/v1/datasets/{id}/experts/{subset}"),
                });
            }
        }
        Ok(BundleManifest {
            dataset_ref: ids.join(","),
            blob_version: BLOB_VERSION,
            experts,
        })
    }

    pub fn expert_blob(&self, id: &str, index: usize) -> Result<Arc<Vec<u8>>> {
        let (_, ready) = self.ready(id)?;
        ready.blobs.get(index).cloned().ok_or(StoreError::UnknownExpert {
            id: id.to_owned(),
            index,
        })
    }

    /// Runs the selection pipeline over the datasets named in the report.
    /// Reads only; nothing in the store changes.
    pub fn recommend(&self, request: &RecommendationRequest) -> Result<Recommendation> {
        let ids = nds_core::protocol::parse_dataset_ref(&request.report.dataset_ref);
        if ids.is_empty() {
            return Err(StoreError::NoDatasets);
        }
        let ready: Vec<_> = ids.iter().map(|id| self.ready(id)).collect::<Result<_>>()?;
        let k: usize = ready.iter().map(|(_, r)| r.partition.k).sum();
        request.report.validate(k)?;
        let sources: Vec<SourceIndex<'_>> = ids
            .iter()
            .zip(&ready)
            .map(|(id, (dataset, index))| SourceIndex {
                dataset_id: id,
                partition: &index.partition,
                manifest: &dataset.manifest,
            })
            .collect();
        let opts = RecommendOptions {
            budget: request.budget,
            budget_bytes: request.budget_bytes,
            temperature: request.temperature.unwrap_or(DEFAULT_TEMPERATURE),
            seed: request.seed.unwrap_or(0),
        };
        Ok(selection::recommend(&sources, &request.report.z, &opts)?)
    }

    /// Appends one JSON object to the request log.
    pub fn log_request(&self, entry: &serde_json::Value) {
        let mut line = entry.to_string();
        line.push('\n');
        let mut log = self.log.lock().expect("log lock");
        if let Err(e) = log.write_all(line.as_bytes()) {
            tracing::warn!(error = %e, "could not write request log");
        }
    }
}
