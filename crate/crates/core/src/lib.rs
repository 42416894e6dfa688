//! Iterative LLM-assisted clustering for new intent discovery.
//!
//! The pipeline clusters utterance embeddings with a K-Means style loop. Each
//! macro iteration refreshes a semantic centroid per cluster from an LLM-written
//! summary, reassigns samples under a joint Euclidean/semantic cost, and lets
//! the LLM rewrite the most uncertain samples. Labeled data can warm-start the
//! centroids and add a soft must-link term.
//!
//! Everything that talks to a model goes through [`llm::LlmBackend`] and
//! [`encoder::EmbeddingBackend`], both of which have deterministic offline
//! implementations so full runs are reproducible without network access.

pub mod cli;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exemplars;
pub mod hsr;
pub mod llm;
pub mod numerics;
pub mod report;
pub mod semisup;
mod transport;
pub mod types;

pub use config::{validate_config, PipelineConfig, RawConfig};
pub use error::{Error, Result};
pub use types::{ClusterState, EmbeddingMatrix, LabeledSubset, Utterance};
