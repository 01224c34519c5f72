//! Local expert cache: `bundle.json` plus one verified blob per expert.

use std::path::{Path, PathBuf};

use nds_core::experts::{deserialize_expert, ExpertModel, BLOB_VERSION};
use nds_core::manifest::sha256_hex;
use nds_core::protocol::{BundleEntry, BundleManifest};

use crate::client::Client;
use crate::error::{CliError, Result};

pub const BUNDLE_FILE: &str = "bundle.json";

pub fn blob_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("experts").join(format!("expert_{index:03}.bin"))
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Checks a blob against its bundle entry and decodes it.
pub fn verify_blob(entry: &BundleEntry, bytes: &[u8]) -> Result<ExpertModel> {
    let sha = sha256_hex(bytes);
    if sha != entry.sha256 || bytes.len() != entry.bytes {
        return Err(CliError::Data(format!(
            "expert {}: checksum mismatch (expected {} bytes with sha256 {}, got {} bytes with {sha})",
            entry.index,
            entry.bytes,
            entry.sha256,
            bytes.len()
        )));
    }
    let expert = deserialize_expert(bytes).map_err(|e| match e {
        nds_core::Error::VersionMismatch { .. } => CliError::Version {
            index: entry.index,
            message: e.to_string(),
        },
        other => CliError::Data(format!("expert {}: {other}", entry.index)),
    })?;
    if expert.kind != entry.kind || expert.subset_index != entry.subset {
        return Err(CliError::Data(format!(
            "expert {}: blob describes a {} expert for subset {}, bundle says {} for subset {}",
            entry.index,
            expert.kind.as_str(),
            expert.subset_index,
            entry.kind.as_str(),
            entry.subset
        )));
    }
    Ok(expert)
}

fn check_version(bundle: &BundleManifest) -> Result<()> {
    if bundle.blob_version != BLOB_VERSION {
        return Err(CliError::Version {
            index: 0,
            message: format!(
                "bundle uses blob version {}, this client supports {BLOB_VERSION}",
                bundle.blob_version
            ),
        });
    }
    Ok(())
}

/// Downloads every expert of `datasets` into `dir`, reusing cached blobs
/// whose checksum still matches.
pub fn fetch(client: &Client, datasets: &[String], dir: &Path) -> Result<BundleManifest> {
    let bundle = client.bundle(datasets)?;
    check_version(&bundle)?;
    let mut cached = 0;
    for entry in &bundle.experts {
        let path = blob_path(dir, entry.index);
        if let Ok(bytes) = std::fs::read(&path) {
            if verify_blob(entry, &bytes).is_ok() {
                cached += 1;
                continue;
            }
        }
        let bytes = client.get_bytes(&entry.href)?;
        verify_blob(entry, &bytes)?;
        write_file(&path, &bytes)?;
    }
    let json = serde_json::to_vec_pretty(&bundle).expect("bundle serializes");
    write_file(&dir.join(BUNDLE_FILE), &json)?;
    tracing::info!(
        experts = bundle.k(),
        cached,
        dir = %dir.display(),
        "bundle for {} verified",
        bundle.dataset_ref
    );
    Ok(bundle)
}

/// Loads and re-verifies a cached bundle.
pub fn load(dir: &Path) -> Result<(BundleManifest, Vec<ExpertModel>)> {
    let path = dir.join(BUNDLE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let bundle: BundleManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    check_version(&bundle)?;
    let experts = bundle
        .experts
        .iter()
        .map(|entry| {
            let path = blob_path(dir, entry.index);
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            verify_blob(entry, &bytes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((bundle, experts))
}
