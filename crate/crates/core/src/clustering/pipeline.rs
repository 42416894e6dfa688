use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cost::{CostFunction, SemanticContext, Supervision, Weights};
use super::kmeanspp::{kmeanspp_init, nearest};
use super::lloyd::{assign_all, objective, refresh_centroids, run_micro_phase};
use crate::config::{MappingStrategy, Mode, PipelineConfig};
use crate::encoder::EmbeddingSource;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::exemplars::{select_all, ExemplarSet};
use crate::hsr::{conditional_update, rank_uncertain, refine_sample, RefinementOutcome};
use crate::llm::{complete_parsed, parse_summary_response, CallRecord, LlmBackend, Templates};
use crate::numerics::norm;
use crate::report::{CallCounts, IterationReport, LedgerEntry, MappingRecord, RunReport, SeedingRecord};
use crate::semisup::{map_llm, map_similarity, seed_align, IntentMapping};
use crate::types::{ClusterState, EmbeddingMatrix, LabeledSubset};

/// Data for one run. `texts[i]` and row `i` of `embeddings` describe the same
/// utterance.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub texts: Vec<String>,
    pub embeddings: EmbeddingMatrix,
    /// Known intents and seed centroids; required in semi-supervised mode.
    pub labeled: Option<LabeledSubset>,
    /// Ground-truth label per sample, for metrics only.
    pub truth: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub summary: Option<String>,
    pub exemplar_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub state: ClusterState,
    pub summaries: Vec<ClusterSummary>,
    pub report: RunReport,
    /// Embeddings after refinement.
    pub embeddings: EmbeddingMatrix,
    /// Working texts after refinement.
    pub texts: Vec<String>,
}

/// A failed run. `report` holds everything recorded before the failure when
/// the run got past initialization.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct PipelineFailure {
    #[source]
    pub error: Error,
    pub report: Option<Box<RunReport>>,
}

impl From<Error> for PipelineFailure {
    fn from(error: Error) -> Self {
        Self { error, report: None }
    }
}

fn check_inputs(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<()> {
    let x = &inputs.embeddings;
    if inputs.texts.len() != x.n() {
        return Err(Error::Validation(format!(
            "{} utterances but {} embedding rows",
            inputs.texts.len(),
            x.n()
        )));
    }
    if x.n() < config.k {
        return Err(Error::Validation(format!("{} samples cannot form {} clusters", x.n(), config.k)));
    }
    if let Some(truth) = &inputs.truth {
        if truth.len() != x.n() {
            return Err(Error::Validation(format!("{} truth labels for {} samples", truth.len(), x.n())));
        }
    }
    let semi = config.mode == Mode::SemiSupervised;
    match (&inputs.labeled, semi) {
        (None, true) => return Err(Error::Config("semi-supervised mode needs labeled utterances".into())),
        (Some(l), true) => {
            if l.m() == 0 {
                return Err(Error::Config("labeled data carries no known intents".into()));
            }
            if l.m() > config.k {
                return Err(Error::Config(format!("{} known intents exceed K = {}", l.m(), config.k)));
            }
            if let Some(s) = l.seed_centroids.iter().find(|s| s.len() != x.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: x.dim(),
                    actual: s.len(),
                });
            }
        }
        _ => {}
    }
    if config.mechanisms.dcs || (semi && config.mechanisms.sml) {
        if let Some(i) = x.rows().position(|r| norm(r) == 0.0) {
            return Err(Error::Validation(format!(
                "embedding row {i} is all zeros; cosine terms are undefined for it"
            )));
        }
    }
    Ok(())
}

struct Run<'a> {
    config: &'a PipelineConfig,
    llm: &'a dyn LlmBackend,
    encoder: &'a EmbeddingSource,
    templates: Templates,
    pool: rayon::ThreadPool,
    x: EmbeddingMatrix,
    texts: Vec<String>,
    labeled: Option<LabeledSubset>,
    truth: Option<Vec<String>>,
    report: RunReport,
    exemplars: Vec<ExemplarSet>,
}

impl Run<'_> {
    fn log_call(&mut self, iteration: usize, target: Option<usize>, record: &CallRecord, counts: &mut CallCounts) {
        counts.count(record.kind);
        self.report
            .llm_ledger
            .push(LedgerEntry::from_record(iteration, target, record));
        self.report
            .timings
            .llm_latency_ms
            .push(record.latency.as_secs_f64() * 1e3);
    }

    fn semi_supervised(&self) -> bool {
        self.config.mode == Mode::SemiSupervised && self.labeled.is_some()
    }

    fn seed(&mut self, state: &mut ClusterState) -> Result<()> {
        let Some(labeled) = &self.labeled else { return Ok(()) };
        let (mu, pi) = seed_align(&state.mu, &labeled.seed_centroids)?;
        state.mu = mu;
        state.assignments = self.x.rows().map(|r| nearest(r, &state.mu)).collect();
        self.report.seeding = Some(SeedingRecord {
            known_intents: labeled.known_intents.clone(),
            pairs: pi.into_iter().enumerate().collect(),
        });
        Ok(())
    }

    fn summarize(&mut self, t: usize, state: &mut ClusterState, counts: &mut CallCounts) -> Result<()> {
        let requests: Vec<_> = self
            .exemplars
            .iter()
            .map(|set| {
                let texts: Vec<&str> = set.member_ids.iter().map(|&i| self.texts[i].as_str()).collect();
                self.templates.summary(&texts)
            })
            .collect();
        let llm = self.llm;
        let replies: Vec<_> = self.pool.install(|| {
            use rayon::prelude::*;
            requests
                .par_iter()
                .map(|req| complete_parsed(llm, req, parse_summary_response))
                .collect()
        });
        let mut summaries = Vec::with_capacity(state.k);
        for (k, (reply, record)) in replies.into_iter().enumerate() {
            self.log_call(t, Some(k), &record, counts);
            let summary = match reply {
                Ok(s) => s,
                Err(Error::ResponseParse(msg)) => {
                    tracing::warn!(cluster = k, %msg, "summary unusable, using the first exemplar");
                    requests[k].echo.clone()
                }
                Err(e) => return Err(e),
            };
            summaries.push(summary);
        }
        let theta = self.encoder.encode(&summaries)?;
        for (k, (s, th)) in summaries.into_iter().zip(theta).enumerate() {
            if th.len() != self.x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.x.dim(),
                    actual: th.len(),
                });
            }
            if norm(&th) == 0.0 {
                return Err(Error::Validation(format!("summary embedding of cluster {k} is all zeros")));
            }
            state.set_semantic(k, s, th);
        }
        Ok(())
    }

    fn map_intents(
        &mut self,
        t: usize,
        state: &ClusterState,
        semantic: Option<&SemanticContext>,
        counts: &mut CallCounts,
    ) -> Result<IntentMapping> {
        let labeled = self.labeled.as_ref().expect("semi-supervised run has labels");
        let targets = semantic.map(|c| c.theta.clone()).unwrap_or_else(|| state.mu.clone());
        let seeds = labeled.seed_centroids.clone();
        match (self.config.mapping_strategy, semantic.is_some()) {
            (MappingStrategy::Llm, true) => {
                let summaries: Vec<String> = state.summaries().iter().map(|s| s.clone().unwrap_or_default()).collect();
                let intents = labeled.known_intents.clone();
                let (m, record) = map_llm(self.llm, &self.templates, &intents, &summaries, &seeds, &targets, t)?;
                self.log_call(t, None, &record, counts);
                Ok(m)
            }
            (MappingStrategy::Llm, false) => {
                tracing::debug!("no summaries without the dual centroid scheme; mapping by similarity");
                let mut m = map_similarity(&seeds, &targets, t)?;
                m.fallback_used = true;
                Ok(m)
            }
            (MappingStrategy::Similarity, _) => map_similarity(&seeds, &targets, t),
        }
    }

    fn refine(
        &mut self,
        t: usize,
        state: &mut ClusterState,
        cost: &CostFunction,
        counts: &mut CallCounts,
    ) -> Result<Vec<RefinementOutcome>> {
        let hard = rank_uncertain(&self.x, state, self.config.delta, self.config.k_nbr)?;
        if hard.is_empty() {
            return Ok(Vec::new());
        }
        let (llm, templates, texts, exemplars) = (self.llm, &self.templates, &self.texts, &self.exemplars);
        let snapshot: &ClusterState = state;
        let replies: Vec<_> = self.pool.install(|| {
            use rayon::prelude::*;
            hard.par_iter()
                .map(|h| refine_sample(llm, templates, h, texts, snapshot, exemplars))
                .collect()
        });
        let mut pending = Vec::with_capacity(hard.len());
        for (h, (reply, record)) in hard.iter().zip(replies) {
            self.log_call(t, Some(h.id), &record, counts);
            pending.push((h.id, reply));
        }
        pending.sort_by_key(|(id, _)| *id);

        let to_encode: Vec<String> = pending
            .iter()
            .filter(|(_, r)| r.flag.is_none())
            .map(|(_, r)| r.rewritten.clone())
            .collect();
        let mut vectors = self.encoder.encode(&to_encode)?.into_iter();

        let mut outcomes = Vec::with_capacity(pending.len());
        for (id, reply) in pending {
            let original = self.texts[id].clone();
            if reply.flag.is_some() {
                let (_, before) = cost.best(self.x.row(id), &state.mu)?;
                outcomes.push(RefinementOutcome {
                    id,
                    original_text: original,
                    rewritten_text: reply.rewritten,
                    judged_cluster: None,
                    accepted: false,
                    cost_before: before.total,
                    cost_after: before.total,
                    cluster_before: state.assignments[id],
                    cluster_after: state.assignments[id],
                    flag: reply.flag,
                });
                continue;
            }
            let candidate = vectors.next().expect("one vector per encoded rewrite");
            let decision = conditional_update(&mut self.x, state, id, &candidate, cost)?;
            if decision.accepted {
                self.texts[id] = reply.rewritten.clone();
            }
            outcomes.push(RefinementOutcome {
                id,
                original_text: original,
                rewritten_text: reply.rewritten,
                judged_cluster: reply.judged_cluster,
                accepted: decision.accepted,
                cost_before: decision.cost_before,
                cost_after: decision.cost_after,
                cluster_before: decision.cluster_before,
                cluster_after: decision.cluster_after,
                flag: None,
            });
        }
        Ok(outcomes)
    }

    fn iteration(&mut self, t: usize, state: &mut ClusterState) -> Result<()> {
        let started = Instant::now();
        let mut counts = CallCounts::default();
        let repaired = refresh_centroids(&self.x, state);
        self.exemplars = select_all(
            &self.x,
            state,
            self.config.exemplar_count,
            self.config.selection_strategy,
            self.config.rng_seed,
            t,
        );

        let semantic = if self.config.mechanisms.dcs {
            self.summarize(t, state, &mut counts)?;
            SemanticContext::from_state(state)?
        } else {
            None
        };

        let (alpha, beta, gamma) = self.config.effective_weights();
        let mapping = if self.semi_supervised() && self.config.mechanisms.sml {
            Some(self.map_intents(t, state, semantic.as_ref(), &mut counts)?)
        } else {
            None
        };
        let seeds = self.labeled.as_ref().map(|l| l.seed_centroids.clone()).unwrap_or_default();
        let supervision = mapping.as_ref().map(|m| Supervision { mapping: m, seeds: &seeds });
        let weights = Weights::new(alpha, beta, if supervision.is_some() { gamma } else { 0.0 });
        let cost = CostFunction::new(weights, semantic.as_ref(), supervision)?;

        let assigned = assign_all(&self.x, &state.mu, &cost)?;
        state.assignments = assigned.assignments;
        let objective_after_assign = assigned.breakdown.total;

        let (micro_state, micro) = run_micro_phase(
            &self.x,
            state.clone(),
            &cost,
            self.config.micro_budget,
            self.config.micro_tol,
        )?;
        *state = micro_state;

        let refinements = if self.config.mechanisms.hsr && self.config.delta > 0 {
            self.refine(t, state, &cost, &mut counts)?
        } else {
            Vec::new()
        };

        let breakdown = objective(&self.x, &state.mu, &state.assignments, &cost)?;
        let metrics = match &self.truth {
            Some(truth) => Some(evaluate(&state.assignments, truth)?),
            None => None,
        };
        self.report.iterations.push(IterationReport {
            iteration: t,
            objective_after_assign,
            objective: breakdown.total,
            breakdown,
            repaired_clusters: repaired,
            micro,
            mapping: mapping.as_ref().map(|m| MappingRecord {
                iteration: t,
                strategy: m.strategy,
                pairs: m.pairs(),
                fallback_used: m.fallback_used,
            }),
            refinements,
            llm_calls: counts,
            metrics,
        });
        self.report
            .timings
            .iteration_ms
            .push(started.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }
}

/// Runs the full macro/micro loop.
///
/// K-Means++ initialization (plus seeding when labels are available) is
/// followed by `t_macro` macro iterations. Each refreshes the Euclidean
/// centroids, picks exemplars, refreshes summaries and semantic centroids,
/// recomputes the intent mapping, reassigns every sample, runs a micro phase
/// and finally refines the hardest samples.
pub fn run_pipeline(
    inputs: PipelineInputs,
    config: &PipelineConfig,
    llm: &dyn LlmBackend,
    encoder: &EmbeddingSource,
) -> std::result::Result<PipelineOutput, PipelineFailure> {
    let started = Instant::now();
    check_inputs(&inputs, config)?;
    let templates = match &config.llm.template_dir {
        Some(dir) => Templates::from_dir(dir)?,
        None => Templates::default(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.llm.max_in_flight)
        .build()
        .map_err(|e| Error::Config(format!("cannot start llm workers: {e}")))?;
    let mut state = kmeanspp_init(&inputs.embeddings, config.k, config.rng_seed)?;
    let report = RunReport::new(config, inputs.embeddings.n(), inputs.embeddings.dim());
    let mut run = Run {
        config,
        llm,
        encoder,
        templates,
        pool,
        x: inputs.embeddings,
        texts: inputs.texts,
        labeled: inputs.labeled,
        truth: inputs.truth,
        report,
        exemplars: Vec::new(),
    };

    let body = |run: &mut Run<'_>, state: &mut ClusterState| -> Result<()> {
        if run.semi_supervised() && config.mechanisms.seeding {
            run.seed(state)?;
        }
        for t in 0..config.t_macro {
            run.iteration(t, state)?;
        }
        Ok(())
    };
    let outcome = body(&mut run, &mut state);
    run.report.timings.total_ms = started.elapsed().as_secs_f64() * 1e3;
    if let Err(error) = outcome {
        run.report.error = Some(error.to_string());
        return Err(PipelineFailure {
            error,
            report: Some(Box::new(run.report)),
        });
    }

    run.report.metrics = run.report.iterations.last().and_then(|i| i.metrics);
    let summaries = run
        .exemplars
        .iter()
        .map(|set| ClusterSummary {
            cluster: set.cluster,
            summary: state.summaries()[set.cluster].clone(),
            exemplar_ids: set.member_ids.clone(),
        })
        .collect();
    Ok(PipelineOutput {
        state,
        summaries,
        report: run.report,
        embeddings: run.x,
        texts: run.texts,
    })
}
