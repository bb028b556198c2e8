//! Two-stage training (representations, then the agent) and prediction for
//! preprocessed patient records.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{train_agent, AgentError, AgentParams, EpochRecord, TrainConfig, TrainingPatient, Walker};
use crate::cohort::{FeatureScaling, PatientRecord};
use crate::embeddings::{ae_train, rbm_train, AeConfig, EmbeddingError, Embeddings, EpochLoss, RbmConfig};
use crate::inference::{beam_predict, BeamConfig, InferenceError, PredictionResult};
use crate::kg::{EntityId, KgError, KnowledgeGraph};
use crate::nn::NnError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// Entity embedding width `k`, also the patient code width.
    pub k: usize,
    /// Autoencoder hidden width.
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub cd_steps: usize,
    pub batch_size: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            k: 32,
            hidden: 64,
            epochs: 100,
            lr: 1e-3,
            cd_steps: 1,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamMode {
    /// Exact for horizon 2 on at most 100 entities, otherwise `widths`.
    #[default]
    Auto,
    Exact,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub mode: BeamMode,
    /// One width for every step, or one per step.
    pub widths: Vec<usize>,
    pub min_edge_prob: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            mode: BeamMode::Auto,
            widths: vec![8],
            min_edge_prob: 0.1,
        }
    }
}

impl InferenceConfig {
    pub fn beam(&self, horizon: usize, entities: usize) -> BeamConfig {
        let widths = BeamConfig {
            horizon,
            widths: self.widths.clone(),
            exact: false,
        };
        match self.mode {
            BeamMode::Exact => BeamConfig::exact(horizon),
            BeamMode::Beam => widths,
            BeamMode::Auto if BeamConfig::default_for(horizon, entities).exact => BeamConfig::exact(horizon),
            BeamMode::Auto => widths,
        }
    }
}

/// Everything that determines a trained model apart from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub embeddings: EmbeddingConfig,
    pub agent: TrainConfig,
    pub inference: InferenceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            embeddings: EmbeddingConfig::default(),
            agent: TrainConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

impl PipelineConfig {
    fn rbm(&self) -> RbmConfig {
        let e = &self.embeddings;
        RbmConfig {
            hidden: e.k,
            epochs: e.epochs,
            lr: e.lr,
            cd_steps: e.cd_steps,
            batch_size: e.batch_size,
            seed: self.seed.wrapping_mul(3).wrapping_add(1),
        }
    }

    fn autoencoder(&self) -> AeConfig {
        let e = &self.embeddings;
        AeConfig {
            hidden: e.hidden,
            code: e.k,
            epochs: e.epochs,
            lr: e.lr,
            batch_size: e.batch_size,
            seed: self.seed.wrapping_mul(3).wrapping_add(2),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_mul(3).wrapping_add(3),
            workers: self.workers,
            ..self.agent.clone()
        }
    }

    pub fn beam(&self, entities: usize) -> BeamConfig {
        self.inference.beam(self.agent.horizon, entities)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Embeddings,
    Agent,
    Prediction,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Embeddings => "embeddings",
            Stage::Agent => "agent",
            Stage::Prediction => "prediction",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("embedding stage: {0}")]
    Embeddings(#[from] EmbeddingError),
    #[error("agent stage: {0}")]
    Agent(#[from] AgentError),
    #[error("prediction: {0}")]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("no training records")]
    NoRecords,
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Embeddings(_) => Some(Stage::Embeddings),
            PipelineError::Agent(_) => Some(Stage::Agent),
            PipelineError::Inference(_) => Some(Stage::Prediction),
            _ => None,
        }
    }

    /// Whether the failure is a diverged or non-finite computation rather
    /// than bad input.
    pub fn is_numeric(&self) -> bool {
        let nn = |e: &NnError| matches!(e, NnError::NonFiniteGradient(_));
        match self {
            PipelineError::Agent(AgentError::NonFinite { .. }) => true,
            PipelineError::Agent(AgentError::Nn(e)) | PipelineError::Embeddings(EmbeddingError::Nn(e)) => nn(e),
            PipelineError::Inference(InferenceError::Agent(AgentError::Nn(e))) => nn(e),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLogs {
    pub rbm: Vec<EpochLoss>,
    pub autoencoder: Vec<EpochLoss>,
    pub agent: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub embeddings: Embeddings,
    pub agent: AgentParams,
    pub scaling: FeatureScaling,
    pub logs: TrainingLogs,
}

/// Stage 1: RBM over characters and autoencoder over scaled features.
pub fn train_embeddings(
    records: &[&PatientRecord],
    cfg: &PipelineConfig,
) -> Result<(Embeddings, TrainingLogs), PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::NoRecords);
    }
    let characters: Vec<Vec<bool>> = records.iter().map(|r| r.characters.clone()).collect();
    let features: Vec<Vec<f64>> = records.iter().map(|r| r.features.clone()).collect();
    let rbm = rbm_train(&characters, &cfg.rbm())?;
    let ae = ae_train(&features, &cfg.autoencoder())?;
    let logs = TrainingLogs {
        rbm: rbm.log,
        autoencoder: ae.log,
        agent: Vec::new(),
    };
    Ok((
        Embeddings {
            rbm: rbm.params,
            autoencoder: ae.params,
        },
        logs,
    ))
}

/// Stage 2: the agent on frozen embeddings.
pub fn train_agent_stage(
    kg: &KnowledgeGraph,
    embeddings: &Embeddings,
    records: &[&PatientRecord],
    cfg: &PipelineConfig,
) -> Result<(AgentParams, Vec<EpochRecord>), PipelineError> {
    let patients = records
        .iter()
        .map(|r| {
            Ok(TrainingPatient {
                code: embeddings.encode_patient(&r.features)?,
                links: r.links(),
                labels: r.labels.clone(),
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    let trained = train_agent(kg, embeddings, &patients, &cfg.train_config())?;
    Ok((trained.params, trained.log))
}

pub fn train_model(
    kg: &KnowledgeGraph,
    records: &[&PatientRecord],
    scaling: &FeatureScaling,
    cfg: &PipelineConfig,
) -> Result<TrainedModel, PipelineError> {
    let (embeddings, mut logs) = train_embeddings(records, cfg)?;
    let (agent, agent_log) = train_agent_stage(kg, &embeddings, records, cfg)?;
    logs.agent = agent_log;
    Ok(TrainedModel {
        embeddings,
        agent,
        scaling: scaling.clone(),
        logs,
    })
}

/// Beam search for one patient given links and scaled features.
pub fn predict(
    kg: &KnowledgeGraph,
    embeddings: &Embeddings,
    agent: &AgentParams,
    links: &[EntityId],
    features: &[f64],
    beam: &BeamConfig,
) -> Result<PredictionResult, PipelineError> {
    let graph = kg.link_entities(links)?;
    let code: Array1<f64> = embeddings.encode_patient(features)?;
    Ok(beam_predict(Walker::new(agent, embeddings), &graph, code.view(), beam)?)
}

pub fn predict_record(
    kg: &KnowledgeGraph,
    model: &TrainedModel,
    record: &PatientRecord,
    beam: &BeamConfig,
) -> Result<PredictionResult, PipelineError> {
    predict(kg, &model.embeddings, &model.agent, &record.links(), &record.features, beam)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_mode_resolution() {
        let inf = InferenceConfig::default();
        assert!(inf.beam(2, 21).exact);
        assert!(!inf.beam(3, 21).exact);
        assert!(!inf.beam(2, 101).exact);
        let exact = InferenceConfig {
            mode: BeamMode::Exact,
            ..Default::default()
        };
        assert!(exact.beam(5, 500).exact);
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = PipelineConfig::default();
        assert_ne!(cfg.rbm().seed, cfg.autoencoder().seed);
        assert_ne!(cfg.autoencoder().seed, cfg.train_config().seed);
    }
}
