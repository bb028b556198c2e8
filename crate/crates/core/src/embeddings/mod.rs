//! Representation learning, done once before the agent is trained.
//!
//! * entities: rows of an RBM weight matrix fitted on patient character vectors
//! * patients: the code layer of a tied-weight autoencoder over patient features
//! * relations: one-hot vectors

mod autoencoder;
mod rbm;

pub use autoencoder::{ae_train, AeConfig, AeTraining, AutoencoderParams};
pub use rbm::{cd_gradient, phase_statistics, rbm_train, RbmConfig, RbmParams, RbmTraining};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sample {row} has length {got}, expected {expected}")]
    Width { row: usize, expected: usize, got: usize },
    #[error("feature {col} of sample {row} is {value}; autoencoder inputs must be min-max scaled to [0, 1] first")]
    OutOfUnitInterval { row: usize, col: usize, value: f64 },
    #[error("hidden size must be at least 1")]
    ZeroHidden,
    #[error("entity id {id} out of range for {m} entities")]
    EntityOutOfRange { id: usize, m: usize },
    #[error("relation id {id} out of range for {n} relation types")]
    RelationOutOfRange { id: usize, n: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-epoch training loss record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// One-hot relation representation.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationEmbedding(pub Array1<f64>);

impl RelationEmbedding {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }
}

pub fn relation_one_hot(id: usize, n_total: usize) -> Result<RelationEmbedding, EmbeddingError> {
    if id >= n_total {
        return Err(EmbeddingError::RelationOutOfRange { id, n: n_total });
    }
    let mut v = Array1::zeros(n_total);
    v[id] = 1.0;
    Ok(RelationEmbedding(v))
}

/// The trained representation models the agent reads from. Never mutated by
/// agent training.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub rbm: RbmParams,
    pub autoencoder: AutoencoderParams,
}

impl Embeddings {
    /// Shared width of entity embeddings and patient codes.
    pub fn dim(&self) -> usize {
        self.rbm.hidden_count()
    }

    pub fn entity(&self, id: usize) -> Result<ArrayView1<'_, f64>, EmbeddingError> {
        self.rbm.entity_embedding(id)
    }

    pub fn encode_patient(&self, features: &[f64]) -> Result<Array1<f64>, EmbeddingError> {
        self.autoencoder.encode_patient(features)
    }
}
