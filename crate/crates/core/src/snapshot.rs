//! Versioned JSON parameter dumps.
//!
//! Every tensor is written with its name, shape and values; floats use the
//! shortest representation that parses back to the same bits, so a
//! save/load cycle is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentParams;
use crate::cohort::FeatureScaling;
use crate::embeddings::{AutoencoderParams, Embeddings, RbmParams};
use crate::nn::Parameters;

pub const SNAPSHOT_FORMAT: &str = "kgpath-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

pub const EMBEDDINGS_FILE: &str = "embeddings.json";
pub const AGENT_FILE: &str = "agent.json";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported snapshot `{format}` version {version}")]
    Version { format: String, version: u32 },
    #[error("expected a `{expected}` snapshot, found `{got}`")]
    Kind { expected: String, got: String },
    #[error("tensor `{name}`: {message}")]
    Tensor { name: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub kind: String,
    /// Layer widths needed to rebuild the parameter set.
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<FeatureScaling>,
    pub tensors: Vec<TensorRecord>,
}

fn records<P: Parameters>(params: &P) -> Vec<TensorRecord> {
    params
        .tensors()
        .into_iter()
        .map(|t| TensorRecord {
            name: t.name,
            shape: t.shape,
            values: t.values.to_vec(),
        })
        .collect()
}

/// Copies `records` into `target`, requiring identical names and shapes.
fn fill<P: Parameters>(target: &mut P, records: &[TensorRecord]) -> Result<(), SnapshotError> {
    let expected: Vec<(String, Vec<usize>)> = target.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if expected.len() != records.len() {
        return Err(SnapshotError::Tensor {
            name: "*".into(),
            message: format!("expected {} tensors, found {}", expected.len(), records.len()),
        });
    }
    for ((name, shape), rec) in expected.iter().zip(records) {
        if *name != rec.name || *shape != rec.shape || rec.values.len() != shape.iter().product::<usize>() {
            return Err(SnapshotError::Tensor {
                name: rec.name.clone(),
                message: format!("expected `{name}` with shape {shape:?}, found shape {:?}", rec.shape),
            });
        }
        if let Some(bad) = rec.values.iter().find(|v| !v.is_finite()) {
            return Err(SnapshotError::Tensor {
                name: rec.name.clone(),
                message: format!("non-finite value {bad}"),
            });
        }
    }
    for (slot, rec) in target.tensors_mut().into_iter().zip(records) {
        slot.copy_from_slice(&rec.values);
    }
    Ok(())
}

impl Snapshot {
    pub fn of_agent(params: &AgentParams) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            kind: "agent".into(),
            dims: vec![params.state_dim(), params.hidden_dim(), params.entity_count()],
            scaling: None,
            tensors: records(params),
        }
    }

    /// Embeddings plus the feature scaling needed to encode new patients.
    pub fn of_embeddings(embeddings: &Embeddings, scaling: &FeatureScaling) -> Self {
        let ae = &embeddings.autoencoder;
        let mut tensors = records(&embeddings.rbm);
        tensors.extend(records(ae));
        Self {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            kind: "embeddings".into(),
            dims: vec![
                embeddings.rbm.visible_count(),
                embeddings.rbm.hidden_count(),
                ae.input_dim(),
                ae.encoder_hidden.bias.len(),
                ae.code_dim(),
            ],
            scaling: Some(scaling.clone()),
            tensors,
        }
    }

    fn check(&self, kind: &str, dims: usize) -> Result<(), SnapshotError> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version {
                format: self.format.clone(),
                version: self.version,
            });
        }
        if self.kind != kind {
            return Err(SnapshotError::Kind {
                expected: kind.into(),
                got: self.kind.clone(),
            });
        }
        if self.dims.len() != dims {
            return Err(SnapshotError::Tensor {
                name: "dims".into(),
                message: format!("expected {dims} entries, found {}", self.dims.len()),
            });
        }
        Ok(())
    }

    pub fn to_agent(&self) -> Result<AgentParams, SnapshotError> {
        self.check("agent", 3)?;
        let mut params = AgentParams::zeros(self.dims[0], self.dims[1], self.dims[2]);
        fill(&mut params, &self.tensors)?;
        Ok(params)
    }

    pub fn to_embeddings(&self) -> Result<(Embeddings, FeatureScaling), SnapshotError> {
        self.check("embeddings", 5)?;
        let d = &self.dims;
        let mut rbm = RbmParams::zeros(d[0], d[1]);
        let mut ae = AutoencoderParams::zeros(d[2], d[3], d[4]);
        let split = rbm.tensors().len().min(self.tensors.len());
        fill(&mut rbm, &self.tensors[..split])?;
        fill(&mut ae, &self.tensors[split..])?;
        let scaling = self.scaling.clone().ok_or_else(|| SnapshotError::Tensor {
            name: "scaling".into(),
            message: "missing feature scaling".into(),
        })?;
        Ok((Embeddings { rbm, autoencoder: ae }, scaling))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string(self).expect("snapshot serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| SnapshotError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| SnapshotError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}
