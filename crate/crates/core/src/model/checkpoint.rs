//! Versioned JSON checkpoints with a SHA-256 integrity digest.
//!
//! The digest covers the compact serialization of every field except itself.
//! Optimizer moments are not stored: a loaded model is for inference or as a
//! fresh starting point.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArchitectureSpec, ModelError, SmileGanModel, TrainingConfig};
use crate::diffnet::{Activation, LinearLayer, ParamSet};
use crate::numerics::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    weight: Vec<Vec<f64>>,
    bias: Option<Vec<f64>>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Parameters {
    f: Vec<LayerRecord>,
    d: Vec<LayerRecord>,
    g: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    format_version: u32,
    arch: ArchitectureSpec,
    config: TrainingConfig,
    seed: u64,
    epoch: usize,
    parameters: Parameters,
}

#[derive(Serialize, Deserialize)]
struct Document {
    #[serde(flatten)]
    payload: Payload,
    checksum: String,
}

fn digest(payload: &Payload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    hex::encode(Sha256::digest(bytes))
}

fn records(ps: &ParamSet) -> Vec<LayerRecord> {
    ps.layers()
        .iter()
        .map(|l| LayerRecord { weight: l.weight.to_rows(), bias: l.bias.clone(), activation: l.activation })
        .collect()
}

fn restore(name: &str, stored: Vec<LayerRecord>, template: &ParamSet) -> Result<ParamSet, ModelError> {
    let malformed = |msg: String| ModelError::Malformed(format!("network {name}: {msg}"));
    if stored.len() != template.layers().len() {
        return Err(malformed(format!("expected {} layers, found {}", template.layers().len(), stored.len())));
    }
    let mut layers = Vec::with_capacity(stored.len());
    for (i, (rec, want)) in stored.into_iter().zip(template.layers()).enumerate() {
        let weight = Matrix::from_rows(&rec.weight).map_err(|e| malformed(format!("layer {i}: {e}")))?;
        let same_shape = weight.rows() == want.weight.rows()
            && weight.cols() == want.weight.cols()
            && rec.bias.as_ref().map(Vec::len) == want.bias.as_ref().map(Vec::len)
            && std::mem::discriminant(&rec.activation) == std::mem::discriminant(&want.activation);
        if !same_shape {
            return Err(malformed(format!("layer {i} does not match the architecture")));
        }
        if rec.bias.iter().flatten().any(|b| !b.is_finite()) {
            return Err(malformed(format!("layer {i} has a non-finite bias")));
        }
        layers.push(LinearLayer { weight, bias: rec.bias, activation: rec.activation });
    }
    Ok(ParamSet::new(layers))
}

impl SmileGanModel {
    /// Checkpoint document as a string.
    pub fn to_checkpoint_string(&self) -> String {
        let payload = Payload {
            format_version: FORMAT_VERSION,
            arch: self.arch.clone(),
            config: self.config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            parameters: Parameters {
                f: records(&self.mapping),
                d: records(&self.discriminator),
                g: records(&self.clustering),
            },
        };
        let checksum = digest(&payload);
        let mut s = serde_json::to_string_pretty(&Document { payload, checksum }).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, ModelError> {
        // A truncated or corrupted document fails here before anything else.
        let value: serde_json::Value = serde_json::from_str(text).map_err(|_| ModelError::ChecksumMismatch)?;
        match value.get("format_version") {
            Some(v) if v.as_u64() == Some(FORMAT_VERSION as u64) => {}
            Some(v) => return Err(ModelError::FormatVersionMismatch { expected: FORMAT_VERSION, found: v.to_string() }),
            None => {
                return Err(ModelError::FormatVersionMismatch { expected: FORMAT_VERSION, found: "missing".into() })
            }
        }
        let doc: Document = serde_json::from_value(value).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if digest(&doc.payload) != doc.checksum {
            return Err(ModelError::ChecksumMismatch);
        }
        let Payload { arch, config, seed, epoch, parameters, .. } = doc.payload;
        let mut template = SmileGanModel::from_seed(arch, config, seed)?;
        template.mapping = restore("f", parameters.f, &template.mapping)?;
        template.discriminator = restore("d", parameters.d, &template.discriminator)?;
        template.clustering = restore("g", parameters.g, &template.clustering)?;
        template.epoch = epoch;
        Ok(template)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_checkpoint_str(&std::fs::read_to_string(path)?)
    }
}
