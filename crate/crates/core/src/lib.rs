//! Interpretable next-admission disease prediction by reinforcement path
//! reasoning over a medical knowledge graph.
//!
//! The pipeline: load a [`kg::KnowledgeGraph`], turn admissions into
//! [`cohort::PatientRecord`]s, learn entity and patient representations
//! ([`embeddings`]), train an actor-critic walker ([`agent`]), then run beam
//! search ([`inference`]) to get disease probabilities together with the
//! graph paths that produced them.

pub mod agent;
pub mod cli;
pub mod cohort;
pub mod embeddings;
pub mod eval;
pub mod inference;
pub mod kg;
pub mod nn;
pub mod pipeline;
pub mod snapshot;
