//! Checkpoints: one container file per parameter plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{LayerSpec, Network, NetworkConfig, ParamKind};
use crate::error::{Error, Result};
use crate::volume_io::{load_tensor, save_tensor};

pub const CHECKPOINT_FORMAT: &str = "mcseg-checkpoint-v1";
const PARAM_LAYOUT: &str = "PARAM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub preset: String,
    pub seed: u64,
    pub iteration: u64,
    pub config: NetworkConfig,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<ParamEntry>,
}

pub fn save_checkpoint(dir: &Path, net: &Network<f32>, iteration: u64) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut params = Vec::with_capacity(net.params().len());
    for p in net.params() {
        let file = format!("{}.mcv", p.name);
        save_tensor(&dir.join(&file), PARAM_LAYOUT, &p.shape, &p.data)?;
        params.push(ParamEntry {
            name: p.name.clone(),
            file,
            shape: p.shape.clone(),
            kind: p.kind,
        });
    }
    let cfg = net.config();
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        preset: cfg.preset.clone(),
        seed: cfg.seed,
        iteration,
        config: cfg.clone(),
        layers: net.layers().to_vec(),
        params,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Network<f32>, CheckpointManifest)> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint format {:?}",
            path.display(),
            manifest.format
        )));
    }
    let mut net = Network::<f32>::skeleton(&manifest.config)?;
    if net.params().len() != manifest.params.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} parameters, the configuration needs {}",
            manifest.params.len(),
            net.params().len()
        )));
    }
    for (p, entry) in net.params_mut().iter_mut().zip(&manifest.params) {
        if p.name != entry.name {
            return Err(Error::Format(format!(
                "checkpoint parameter {:?} where {:?} was expected",
                entry.name, p.name
            )));
        }
        let (layout, shape, data) = load_tensor(&dir.join(&entry.file))?;
        if layout != PARAM_LAYOUT || shape != p.shape {
            return Err(Error::Format(format!(
                "{}: {layout} {shape:?} does not match {:?}",
                entry.file, p.shape
            )));
        }
        p.data = data;
    }
    Ok((net, manifest))
}
