//! JSON model files.
//!
//! ```text
//! { "format_version": 1, "checksum": "<sha256 hex>", "payload": { "models": [...] } }
//! ```
//!
//! The checksum covers the compact serialization of `payload` (object keys
//! sorted). Network parameters and fitted concentrations are stored as the
//! 16-digit hex of their IEEE-754 bits, so a round trip is exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::write_atomic;
use super::train::{TrainConfig, TrainHistory, TrainedModel};
use crate::error::{Error, Result};
use crate::heads::{HeadKind, PredictiveModel};
use crate::neuralnet::{Network, NetworkSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    checksum: String,
    payload: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    models: Vec<StoredModel>,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    head: HeadKind,
    input_dim: usize,
    kappa: Option<String>,
    networks: Vec<StoredNetwork>,
    config: TrainConfig,
    history: TrainHistory,
}

#[derive(Serialize, Deserialize)]
struct StoredNetwork {
    spec: NetworkSpec,
    /// `[inputs, outputs]` of every dense layer.
    layer_dims: Vec<[usize; 2]>,
    params: Vec<String>,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unhex(s: &str) -> Option<f64> {
    (s.len() == 16).then_some(())?;
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

fn checksum(payload: &serde_json::Value) -> String {
    let text = serde_json::to_string(payload).expect("JSON values always serialize");
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

fn store(m: &TrainedModel) -> StoredModel {
    StoredModel {
        head: *m.model.head(),
        input_dim: m.model.input_dim(),
        kappa: m.model.fixed_kappa().map(hex),
        networks: m
            .model
            .networks()
            .iter()
            .map(|n| StoredNetwork {
                spec: n.spec().clone(),
                layer_dims: n.spec().layer_dims().iter().map(|&(i, o, _)| [i, o]).collect(),
                params: n.params().iter().map(|p| hex(*p)).collect(),
            })
            .collect(),
        config: m.config.clone(),
        history: m.history.clone(),
    }
}

fn restore(s: StoredModel, path: &Path) -> Result<TrainedModel> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut networks = Vec::with_capacity(s.networks.len());
    for n in s.networks {
        let dims: Vec<[usize; 2]> = n.spec.layer_dims().iter().map(|&(i, o, _)| [i, o]).collect();
        if dims != n.layer_dims {
            return Err(corrupt("layer dimensions disagree with the network spec".into()));
        }
        let params = n
            .params
            .iter()
            .map(|p| unhex(p).ok_or_else(|| corrupt(format!("bad parameter encoding {p:?}"))))
            .collect::<Result<Vec<_>>>()?;
        networks.push(Network::from_params(n.spec, params).map_err(|e| corrupt(e.to_string()))?);
    }
    let kappa = match s.kappa {
        Some(k) => Some(unhex(&k).ok_or_else(|| corrupt(format!("bad κ encoding {k:?}")))?),
        None => None,
    };
    let model = PredictiveModel::from_parts(s.head, s.input_dim, networks, kappa).map_err(|e| corrupt(e.to_string()))?;
    if s.history.epochs.is_empty() || s.history.best_epoch >= s.history.epochs.len() {
        return Err(corrupt("training history is empty or inconsistent".into()));
    }
    Ok(TrainedModel {
        model,
        config: s.config,
        history: s.history,
    })
}

/// Writes one or more models (e.g. the three per-angle models) atomically.
pub fn save_models(models: &[TrainedModel], path: &Path) -> Result<()> {
    if models.is_empty() {
        return Err(Error::EmptyInput);
    }
    let payload = serde_json::to_value(Payload {
        models: models.iter().map(store).collect(),
    })
    .map_err(|e| Error::InvalidParameter(format!("cannot encode model: {e}")))?;
    let envelope = Envelope {
        format_version: FORMAT_VERSION,
        checksum: checksum(&payload),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&envelope).expect("JSON values always serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    save_models(std::slice::from_ref(model), path)
}

pub fn load_models(path: &Path) -> Result<Vec<TrainedModel>> {
    let corrupt = |reason: String| Error::CorruptFile {
        path: PathBuf::from(path),
        reason,
    };
    let bytes = std::fs::read(path)?;
    let envelope: Envelope = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    if envelope.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: envelope.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if checksum(&envelope.payload) != envelope.checksum {
        return Err(corrupt("checksum mismatch".into()));
    }
    let payload: Payload = serde_json::from_value(envelope.payload).map_err(|e| corrupt(e.to_string()))?;
    if payload.models.is_empty() {
        return Err(corrupt("file holds no models".into()));
    }
    payload.models.into_iter().map(|m| restore(m, path)).collect()
}

/// Loads a file holding exactly one model.
pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let mut models = load_models(path)?;
    if models.len() != 1 {
        return Err(Error::ConfigMismatch(format!("expected one model, file holds {}", models.len())));
    }
    Ok(models.remove(0))
}
