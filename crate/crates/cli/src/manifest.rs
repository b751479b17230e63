//! Run manifests: the fully resolved configuration, the code version, and a
//! content hash that every emitted file carries in its header.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::AppError;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub manifest_hash: String,
    pub config: RunConfig,
}

/// Hash of the resolved configuration plus code version; hex, truncated to
/// 16 characters for readability in file headers. The output directory and
/// worker count are normalized away first: neither affects a single result
/// byte, so the hash identifies the experiment itself.
pub fn manifest_hash(config: &RunConfig) -> Result<String, AppError> {
    let mut canonical = config.clone();
    canonical.experiment.output_dir = std::path::PathBuf::new();
    canonical.experiment.worker_count = 1;
    let body = toml::to_string(&canonical)
        .map_err(|e| AppError::Runtime(anyhow::anyhow!("serializing config: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
    hasher.update(b"\n");
    hasher.update(body.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Writes `manifest.toml` into the run directory and returns the hash.
pub fn write_manifest(dir: &Path, config: &RunConfig) -> Result<String, AppError> {
    let hash = manifest_hash(config)?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest_hash: hash.clone(),
        config: config.clone(),
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| AppError::Runtime(anyhow::anyhow!("serializing manifest: {e}")))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(hash)
}

/// Loads a run directory's manifest and re-checks the hash.
pub fn load_manifest(dir: &Path) -> Result<Manifest, AppError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    let expect = manifest_hash(&manifest.config)?;
    if expect != manifest.manifest_hash {
        return Err(AppError::Config(format!(
            "{}: manifest hash {} does not match config ({expect}); file edited?",
            path.display(),
            manifest.manifest_hash
        )));
    }
    Ok(manifest)
}
