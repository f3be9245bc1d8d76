//! Checkpoint directory: `manifest.json` plus `params.bin` (little-endian f64
//! in manifest order).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{ModelConfig, ModelParams, NetworkLayout, NormStats};
use super::params::ParamEntry;
use crate::store::{self, StoreError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub params: Vec<ParamEntry>,
    /// Free-form label, e.g. the epoch the checkpoint was taken at.
    #[serde(default)]
    pub id: String,
}

pub fn save_checkpoint(dir: &Path, params: &ModelParams, id: &str) -> Result<(), StoreError> {
    store::create_dir(dir)?;
    let manifest = CheckpointManifest {
        config: params.config.clone(),
        norm: params.norm.clone(),
        params: params.layout.entries.clone(),
        id: id.to_string(),
    };
    store::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let bytes: Vec<u8> = params.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    store::write_bytes(&dir.join(PARAMS_FILE), &bytes)
}

/// Loads a checkpoint and its manifest; the stored tensor list must match the
/// layout implied by the stored config.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, CheckpointManifest), StoreError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: CheckpointManifest = store::read_json(&manifest_path)?;
    let layout = NetworkLayout::new(&manifest.config);
    if layout.entries != manifest.params {
        return Err(StoreError::invalid(
            &manifest_path,
            "parameter list does not match the model configuration",
        ));
    }
    let norm = &manifest.norm;
    let node_width = manifest.config.node_feature_width();
    if norm.node_mean.len() != node_width
        || norm.node_std.len() != node_width
        || norm.edge_mean.len() != crate::graphbuild::EDGE_FEATURE_WIDTH
        || norm.edge_std.len() != crate::graphbuild::EDGE_FEATURE_WIDTH
        || norm.target_mean.len() != 3
        || norm.target_std.len() != 3
    {
        return Err(StoreError::invalid(
            &manifest_path,
            "normalization statistics have wrong widths",
        ));
    }

    let params_path = dir.join(PARAMS_FILE);
    let bytes = store::read_bytes(&params_path)?;
    let expected = layout.param_count() * 8;
    if bytes.len() != expected {
        return Err(StoreError::invalid(
            &params_path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams {
        config: manifest.config.clone(),
        norm: manifest.norm.clone(),
        layout,
        values,
    };
    Ok((params, manifest))
}
