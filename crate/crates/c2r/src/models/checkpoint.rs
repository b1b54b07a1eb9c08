use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{C2RModel, ModelConfig};

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// JSON manifest next to a flat little-endian f64 blob.
#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
    pub config_hash: String,
}

fn hash_manifest(config: &ModelConfig, seed: u64, params: &[ParamEntry]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).unwrap());
    hasher.update(seed.to_le_bytes());
    hasher.update(serde_json::to_vec(params).unwrap());
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(model: &C2RModel, seed: u64, dir: &Path) -> Result<()> {
    save_values(model, &model.snapshot(), seed, dir)
}

/// Save an explicit parameter snapshot (e.g. best-validation values) under
/// the model's layout.
pub fn save_values(model: &C2RModel, values: &[f64], seed: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::new();
    let mut offset = 0;
    for p in model.store.iter() {
        let (rows, cols) = p.value.shape();
        params.push(ParamEntry { name: p.name.clone(), rows, cols, offset });
        offset += p.value.len();
    }
    if offset != values.len() {
        return Err(CheckpointError::Integrity(format!(
            "snapshot has {} values, model expects {offset}",
            values.len()
        )));
    }
    let config_hash = hash_manifest(&model.cfg, seed, &params);
    let manifest = Manifest { config: model.cfg.clone(), seed, params, config_hash };
    fs::write(dir.join("checkpoint.json"), serde_json::to_string_pretty(&manifest)?)?;
    let mut blob = fs::File::create(dir.join("checkpoint.bin"))?;
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    blob.write_all(&bytes)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(C2RModel, u64)> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json"))?)?;
    let expected = hash_manifest(&manifest.config, manifest.seed, &manifest.params);
    if expected != manifest.config_hash {
        return Err(CheckpointError::Integrity(
            "config hash mismatch between manifest and contents".into(),
        ));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join("checkpoint.bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(CheckpointError::Integrity("blob length not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model = C2RModel::build(manifest.config.clone(), manifest.seed);
    if model.store.len() != manifest.params.len() {
        return Err(CheckpointError::Integrity("parameter count mismatch".into()));
    }
    for (p, entry) in model.store.iter().zip(&manifest.params) {
        if p.name != entry.name || p.value.shape() != (entry.rows, entry.cols) {
            return Err(CheckpointError::Integrity(format!(
                "parameter layout mismatch at {}",
                entry.name
            )));
        }
    }
    if values.len() != model.store.total_values() {
        return Err(CheckpointError::Integrity("blob size does not match layout".into()));
    }
    model.restore(&values);
    Ok((model, manifest.seed))
}
