use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{CostBreakdown, CostFunction};
use crate::error::Result;
use crate::numerics::sq_dist;
use crate::types::{ClusterState, EmbeddingMatrix};

/// Result of one assignment pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignOutcome {
    pub assignments: Vec<usize>,
    /// Summed per-sample breakdown of the chosen clusters.
    pub breakdown: CostBreakdown,
}

impl AssignOutcome {
    pub fn objective(&self) -> f64 {
        self.breakdown.total
    }
}

/// Moves every sample to its cheapest cluster under `cost`, lowest index on ties.
///
/// Rows are evaluated in parallel; the sum is accumulated in row order so the
/// objective is bit-stable across thread counts.
pub fn assign_all(x: &EmbeddingMatrix, mu: &[Vec<f64>], cost: &CostFunction) -> Result<AssignOutcome> {
    let per_row: Vec<(usize, CostBreakdown)> = (0..x.n())
        .into_par_iter()
        .map(|i| cost.best(x.row(i), mu))
        .collect::<Result<_>>()?;
    let mut breakdown = CostBreakdown::default();
    let mut assignments = Vec::with_capacity(per_row.len());
    for (k, b) in per_row {
        breakdown.accumulate(&b);
        assignments.push(k);
    }
    Ok(AssignOutcome {
        assignments,
        breakdown,
    })
}

/// Summed cost of the given assignments.
pub fn objective(
    x: &EmbeddingMatrix,
    mu: &[Vec<f64>],
    assignments: &[usize],
    cost: &CostFunction,
) -> Result<CostBreakdown> {
    let per_row: Vec<CostBreakdown> = (0..x.n())
        .into_par_iter()
        .map(|i| cost.breakdown(x.row(i), mu, assignments[i]))
        .collect::<Result<_>>()?;
    let mut total = CostBreakdown::default();
    per_row.iter().for_each(|b| total.accumulate(b));
    Ok(total)
}

fn member_means(x: &EmbeddingMatrix, assignments: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = x.dim();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in x.rows().zip(assignments) {
        sums[a].iter_mut().zip(row).for_each(|(s, v)| *s += v);
        counts[a] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let c = c as f64;
            s.iter_mut().for_each(|v| *v /= c);
        }
    }
    (sums, counts)
}

/// Cluster means. An empty cluster is re-seeded at the sample farthest from
/// its own cluster's mean; assignments are not touched. Several empty clusters
/// take distinct samples, in descending distance order.
pub fn update_euclidean_centroids(x: &EmbeddingMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let (mut mu, counts) = member_means(x, assignments, k);
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if empty.is_empty() {
        return mu;
    }
    let far = farthest_first(x, assignments, &mu, |_| true);
    for (cluster, i) in empty.into_iter().zip(far) {
        mu[cluster] = x.row(i).to_vec();
    }
    mu
}

/// Sample indices sorted by descending distance to their cluster mean, lowest
/// index first on ties.
fn farthest_first(
    x: &EmbeddingMatrix,
    assignments: &[usize],
    mu: &[Vec<f64>],
    eligible: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = (0..x.n())
        .filter(|&i| eligible(i))
        .map(|i| (i, sq_dist(x.row(i), &mu[assignments[i]])))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(i, _)| i).collect()
}

/// Gives every empty cluster a member by moving the farthest sample of a
/// cluster that can spare one. Returns the repaired cluster indices.
pub fn repair_empty_clusters(x: &EmbeddingMatrix, state: &mut ClusterState) -> Vec<usize> {
    let mut repaired = Vec::new();
    loop {
        let sizes = state.cluster_sizes();
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let (mu, _) = member_means(x, &state.assignments, state.k);
        let donor = farthest_first(x, &state.assignments, &mu, |i| sizes[state.assignments[i]] > 1)
            .into_iter()
            .next();
        match donor {
            Some(i) => {
                tracing::debug!(cluster = empty, sample = i, "re-seeding empty cluster");
                state.assignments[i] = empty;
                repaired.push(empty);
            }
            None => break,
        }
    }
    repaired
}

/// Repairs empty clusters and recomputes every Euclidean centroid.
pub fn refresh_centroids(x: &EmbeddingMatrix, state: &mut ClusterState) -> Vec<usize> {
    let repaired = repair_empty_clusters(x, state);
    state.mu = update_euclidean_centroids(x, &state.assignments, state.k);
    repaired
}

/// One centroid update followed by one assignment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroStep {
    /// Objective with the updated centroids and the previous assignments.
    pub objective_before: f64,
    /// Objective after reassignment.
    pub objective_after: f64,
    /// Largest Euclidean centroid displacement of the update.
    pub shift: f64,
    pub reassigned: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MicroTrace {
    pub steps: Vec<MicroStep>,
    pub converged: bool,
    /// Summed breakdown at the end of the phase.
    pub breakdown: CostBreakdown,
}

/// Standard K-Means steps with the semantic terms frozen inside `cost`.
///
/// Stops once the centroid shift drops below `tol`, once no sample moves, or
/// after `budget` steps. Every step ends with an assignment, so the returned
/// assignments are always argmin under the returned centroids.
pub fn run_micro_phase(
    x: &EmbeddingMatrix,
    mut state: ClusterState,
    cost: &CostFunction,
    budget: usize,
    tol: f64,
) -> Result<(ClusterState, MicroTrace)> {
    let mut trace = MicroTrace::default();
    if budget == 0 {
        trace.breakdown = objective(x, &state.mu, &state.assignments, cost)?;
        return Ok((state, trace));
    }
    for _ in 0..budget {
        let new_mu = update_euclidean_centroids(x, &state.assignments, state.k);
        let shift = state
            .mu
            .iter()
            .zip(&new_mu)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        state.mu = new_mu;
        let before = objective(x, &state.mu, &state.assignments, cost)?;
        let outcome = assign_all(x, &state.mu, cost)?;
        let reassigned = outcome
            .assignments
            .iter()
            .zip(&state.assignments)
            .filter(|(a, b)| a != b)
            .count();
        state.assignments = outcome.assignments;
        trace.breakdown = outcome.breakdown;
        trace.steps.push(MicroStep {
            objective_before: before.total,
            objective_after: outcome.breakdown.total,
            shift,
            reassigned,
        });
        if shift < tol || reassigned == 0 {
            trace.converged = true;
            break;
        }
    }
    Ok((state, trace))
}
