//! Run report written next to the assignments.
//!
//! Everything except [`Timings`] is a deterministic function of the inputs,
//! the configuration and the model responses.

use serde::{Deserialize, Serialize};

use crate::clustering::{CostBreakdown, MicroTrace};
use crate::config::{MappingStrategy, Mechanisms, PipelineConfig};
use crate::eval::Metrics;
use crate::hsr::RefinementOutcome;
use crate::llm::{CallOutcome, CallRecord, PromptKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub iteration: usize,
    pub kind: PromptKind,
    /// Cluster for summaries, utterance id for refinements, none for mappings.
    pub target: Option<usize>,
    pub completions: u32,
    pub transport_attempts: u32,
    pub prompt_bytes: usize,
    pub response_bytes: usize,
    pub outcome: CallOutcome,
}

impl LedgerEntry {
    pub fn from_record(iteration: usize, target: Option<usize>, r: &CallRecord) -> Self {
        Self {
            iteration,
            kind: r.kind,
            target,
            completions: r.completions,
            transport_attempts: r.transport_attempts,
            prompt_bytes: r.prompt_bytes,
            response_bytes: r.response_bytes,
            outcome: r.outcome,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub summary: usize,
    pub refine: usize,
    pub map: usize,
}

impl CallCounts {
    pub fn count(&mut self, kind: PromptKind) {
        match kind {
            PromptKind::Summary => self.summary += 1,
            PromptKind::Refine => self.refine += 1,
            PromptKind::Map => self.map += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub iteration: usize,
    pub strategy: MappingStrategy,
    /// `(intent index, cluster)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedingRecord {
    pub known_intents: Vec<String>,
    /// `(intent index, cluster)` pairs whose initial centroid was replaced.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    /// Objective right after the macro-boundary reassignment.
    pub objective_after_assign: f64,
    /// Objective after refinement, under this iteration's cost.
    pub objective: f64,
    /// Summed cost terms at the end of the iteration.
    pub breakdown: CostBreakdown,
    pub repaired_clusters: Vec<usize>,
    pub micro: MicroTrace,
    pub mapping: Option<MappingRecord>,
    pub refinements: Vec<RefinementOutcome>,
    pub llm_calls: CallCounts,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub iteration_ms: Vec<f64>,
    /// Latency per ledger entry, same order as the ledger.
    pub llm_latency_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub mechanisms: Mechanisms,
    pub n: usize,
    pub dim: usize,
    pub seeding: Option<SeedingRecord>,
    pub iterations: Vec<IterationReport>,
    pub metrics: Option<Metrics>,
    pub llm_ledger: Vec<LedgerEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(config: &PipelineConfig, n: usize, dim: usize) -> Self {
        Self {
            config: config.clone(),
            mechanisms: config.mechanisms,
            n,
            dim,
            seeding: None,
            iterations: Vec::new(),
            metrics: None,
            llm_ledger: Vec::new(),
            error: None,
            timings: Timings::default(),
        }
    }

    /// Ledger calls of `kind` issued during `iteration`.
    pub fn calls_in(&self, iteration: usize, kind: PromptKind) -> usize {
        self.llm_ledger
            .iter()
            .filter(|e| e.iteration == iteration && e.kind == kind)
            .count()
    }

    /// The report as JSON with timings removed, for reproducibility checks.
    pub fn deterministic_json(&self) -> serde_json::Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string_pretty(&v)
    }
}
