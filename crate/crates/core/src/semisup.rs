//! Labeled-data signals: seed centroids, intent-to-cluster mapping and the
//! soft must-link cost term.

use serde::Serialize;

use crate::config::MappingStrategy;
use crate::error::{Error, Result};
use crate::llm::{complete_parsed, parse_map_response, CallRecord, LlmBackend, Templates};
use crate::numerics::{self, hungarian_min_cost, CostMatrix};
use crate::types::EmbeddingMatrix;

/// One-to-one map from the M known intents into the K clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentMapping {
    /// `cluster_of[j]` is the cluster intent `j` maps to.
    cluster_of: Vec<usize>,
    #[serde(skip)]
    intent_of: Vec<Option<usize>>,
    pub strategy: MappingStrategy,
    pub iteration: usize,
    pub fallback_used: bool,
}

impl IntentMapping {
    /// Validates that every intent is mapped to a distinct cluster below `k`.
    pub fn new(cluster_of: Vec<usize>, k: usize, strategy: MappingStrategy, iteration: usize) -> Result<Self> {
        let mut intent_of = vec![None; k];
        for (j, &c) in cluster_of.iter().enumerate() {
            if c >= k {
                return Err(Error::Validation(format!("intent {j} mapped to cluster {c} outside 0..{k}")));
            }
            if let Some(prev) = intent_of[c] {
                return Err(Error::Validation(format!(
                    "intents {prev} and {j} both mapped to cluster {c}"
                )));
            }
            intent_of[c] = Some(j);
        }
        Ok(Self {
            cluster_of,
            intent_of,
            strategy,
            iteration,
            fallback_used: false,
        })
    }

    pub fn m(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn cluster_of(&self, intent: usize) -> usize {
        self.cluster_of[intent]
    }

    /// Intent mapped onto `cluster`, if any.
    pub fn intent_of(&self, cluster: usize) -> Option<usize> {
        self.intent_of.get(cluster).copied().flatten()
    }

    /// `(intent, cluster)` pairs in intent order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.cluster_of.iter().copied().enumerate().collect()
    }
}

/// Per-intent mean embedding.
pub fn compute_seed_centroids(members: &[Vec<usize>], x: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    members
        .iter()
        .map(|ids| {
            let rows: Vec<&[f64]> = ids.iter().map(|&i| x.row(i)).collect();
            numerics::mean_embedding(&rows)
        })
        .collect()
}

/// `1 - cos` with a zero vector counted as orthogonal, so a degenerate
/// centroid can still take part in a matching.
fn cosine_dissimilarity(u: &[f64], v: &[f64]) -> Result<f64> {
    match numerics::cosine(u, v) {
        Ok(c) => Ok(1.0 - c),
        Err(Error::ZeroVector) => Ok(1.0),
        Err(e) => Err(e),
    }
}

fn match_by_cosine<S: AsRef<[f64]>, T: AsRef<[f64]>>(seeds: &[S], targets: &[T]) -> Result<Vec<usize>> {
    let (m, k) = (seeds.len(), targets.len());
    if m > k {
        return Err(Error::Validation(format!("{m} known intents exceed {k} clusters")));
    }
    let mut values = Vec::with_capacity(m * k);
    for s in seeds {
        for t in targets {
            values.push(cosine_dissimilarity(s.as_ref(), t.as_ref())?);
        }
    }
    let assignment = hungarian_min_cost(&CostMatrix::new(m, k, values)?)?;
    Ok(assignment
        .row_to_col
        .into_iter()
        .map(|c| c.expect("every row is matched when rows <= cols"))
        .collect())
}

/// Warm start: replaces the initial centroids matched to each seed by the
/// seed itself. Returns the new centroids and the intent-to-cluster matching.
pub fn seed_align(initial: &[Vec<f64>], seeds: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let pi = match_by_cosine(seeds, initial)?;
    let mut out = initial.to_vec();
    for (j, &k) in pi.iter().enumerate() {
        out[k] = seeds[j].clone();
    }
    Ok((out, pi))
}

/// Mapping that minimises total cosine dissimilarity between seeds and the
/// given cluster centroids (semantic ones when available).
pub fn map_similarity(seeds: &[Vec<f64>], theta: &[Vec<f64>], iteration: usize) -> Result<IntentMapping> {
    let pi = match_by_cosine(seeds, theta)?;
    IntentMapping::new(pi, theta.len(), MappingStrategy::Similarity, iteration)
}

/// Asks the model for the mapping. Parse or validation failures are retried
/// per the request budget; after that the similarity mapping is used and
/// `fallback_used` is set.
pub fn map_llm(
    llm: &dyn LlmBackend,
    templates: &Templates,
    intents: &[String],
    summaries: &[String],
    seeds: &[Vec<f64>],
    theta: &[Vec<f64>],
    iteration: usize,
) -> Result<(IntentMapping, CallRecord)> {
    let k = summaries.len();
    let intent_refs: Vec<&str> = intents.iter().map(String::as_str).collect();
    let summary_refs: Vec<&str> = summaries.iter().map(String::as_str).collect();
    let request = templates.map(&intent_refs, &summary_refs);
    let (parsed, record) = complete_parsed(llm, &request, |text| {
        let pi = parse_map_response(text, intents.len(), k)?;
        IntentMapping::new(pi, k, MappingStrategy::Llm, iteration)
            .map_err(|e| Error::ResponseParse(e.to_string()))
    });
    match parsed {
        Ok(mapping) => Ok((mapping, record)),
        Err(e) => {
            tracing::warn!(iteration, error = %e, "llm mapping unusable, falling back to similarity");
            let mut mapping = map_similarity(seeds, theta, iteration)?;
            mapping.strategy = MappingStrategy::Llm;
            mapping.fallback_used = true;
            Ok((mapping, record))
        }
    }
}

/// Soft must-link cost: `1 - cos(x, seed)` for the intent mapped onto
/// cluster `k`, zero when `k` is unmapped.
pub fn supervised_term(x: &[f64], k: usize, mapping: &IntentMapping, seeds: &[Vec<f64>]) -> Result<f64> {
    match mapping.intent_of(k) {
        Some(j) => Ok(1.0 - numerics::cosine(x, &seeds[j])?),
        None => Ok(0.0),
    }
}
