//! Hard-sample refinement: rank by assignment entropy, ask the model to
//! judge and rewrite, keep the rewrite only if it lowers the sample's cost.

use serde::{Deserialize, Serialize};

use crate::clustering::CostFunction;
use crate::error::{Error, Result};
use crate::exemplars::ExemplarSet;
use crate::llm::{complete_parsed, parse_refine_response, CallOutcome, CallRecord, ClusterContext, LlmBackend, Templates};
use crate::numerics::{cosine, entropy, posteriors_from_sq_dists, sq_dist};
use crate::types::{ClusterState, EmbeddingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSample {
    pub id: usize,
    pub entropy: f64,
    pub home_cluster: usize,
    pub neighbor_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub id: usize,
    pub original_text: String,
    pub rewritten_text: String,
    /// Cluster the model picked; advisory only.
    pub judged_cluster: Option<i64>,
    pub accepted: bool,
    pub cost_before: f64,
    pub cost_after: f64,
    pub cluster_before: usize,
    pub cluster_after: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

/// The `k_nbr` clusters closest to `home`: by semantic-centroid cosine when
/// every cluster has one, otherwise by Euclidean-centroid distance. Ties go
/// to the lower index.
pub fn neighbor_clusters(state: &ClusterState, home: usize, k_nbr: usize) -> Result<Vec<usize>> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(state.k.saturating_sub(1));
    match state.full_theta() {
        Some(theta) => {
            for (j, t) in theta.iter().enumerate().filter(|&(j, _)| j != home) {
                scored.push((j, -cosine(&theta[home], t)?));
            }
        }
        None => {
            for (j, m) in state.mu.iter().enumerate().filter(|&(j, _)| j != home) {
                scored.push((j, sq_dist(&state.mu[home], m)));
            }
        }
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k_nbr).map(|(j, _)| j).collect())
}

/// The `delta` samples with the highest posterior entropy under the Gaussian
/// kernel on the Euclidean centroids, most uncertain first.
pub fn rank_uncertain(x: &EmbeddingMatrix, state: &ClusterState, delta: usize, k_nbr: usize) -> Result<Vec<HardSample>> {
    let delta = if delta > x.n() {
        tracing::warn!(delta, n = x.n(), "hard-sample count clamped to dataset size");
        x.n()
    } else {
        delta
    };
    if delta == 0 {
        return Ok(Vec::new());
    }
    let mut scored = Vec::with_capacity(x.n());
    for (i, row) in x.rows().enumerate() {
        let sq: Vec<f64> = state.mu.iter().map(|m| sq_dist(row, m)).collect();
        scored.push((i, entropy(&posteriors_from_sq_dists(&sq))?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(delta)
        .map(|(id, h)| {
            let home = state.assignments[id];
            Ok(HardSample {
                id,
                entropy: h,
                home_cluster: home,
                neighbor_clusters: neighbor_clusters(state, home, k_nbr)?,
            })
        })
        .collect()
}

/// Text the model proposed for a hard sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineReply {
    pub rewritten: String,
    pub judged_cluster: Option<i64>,
    /// Set when the call produced nothing usable and the text is unchanged.
    pub flag: Option<String>,
}

fn context<'a>(cluster: usize, state: &'a ClusterState, exemplars: &[ExemplarSet], texts: &'a [String]) -> ClusterContext<'a> {
    ClusterContext {
        cluster,
        summary: state.summaries()[cluster].as_deref(),
        exemplars: exemplars
            .iter()
            .find(|e| e.cluster == cluster)
            .map(|e| e.member_ids.iter().map(|&i| texts[i].as_str()).collect())
            .unwrap_or_default(),
    }
}

/// Renders the judge-then-rewrite prompt and calls the model. Unusable
/// responses and transport failures leave the text unchanged and set a flag.
pub fn refine_sample(
    llm: &dyn LlmBackend,
    templates: &Templates,
    sample: &HardSample,
    texts: &[String],
    state: &ClusterState,
    exemplars: &[ExemplarSet],
) -> (RefineReply, CallRecord) {
    let home = context(sample.home_cluster, state, exemplars, texts);
    let neighbors: Vec<ClusterContext<'_>> = sample
        .neighbor_clusters
        .iter()
        .map(|&j| context(j, state, exemplars, texts))
        .collect();
    let original = &texts[sample.id];
    let request = templates.refine(original, &home, &neighbors);
    let (parsed, record) = complete_parsed(llm, &request, parse_refine_response);
    let reply = match parsed {
        Ok((judged, rewritten)) => RefineReply {
            rewritten,
            judged_cluster: Some(judged),
            flag: None,
        },
        Err(e) => {
            let flag = match record.outcome {
                CallOutcome::TransportFailed => "transport_failed",
                _ => "parse_failed",
            };
            tracing::warn!(id = sample.id, error = %e, flag, "refinement skipped");
            RefineReply {
                rewritten: original.clone(),
                judged_cluster: None,
                flag: Some(flag.to_string()),
            }
        }
    };
    (reply, record)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateDecision {
    pub accepted: bool,
    pub cost_before: f64,
    pub cost_after: f64,
    pub cluster_before: usize,
    pub cluster_after: usize,
}

/// Replaces row `id` by `candidate` and moves the sample to the candidate's
/// cheapest cluster iff that minimum cost is strictly below the current row's.
pub fn conditional_update(
    x: &mut EmbeddingMatrix,
    state: &mut ClusterState,
    id: usize,
    candidate: &[f64],
    cost: &CostFunction,
) -> Result<UpdateDecision> {
    if candidate.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: candidate.len(),
        });
    }
    let (_, before) = cost.best(x.row(id), &state.mu)?;
    let cluster_before = state.assignments[id];
    let rejected = |cost_after: f64| UpdateDecision {
        accepted: false,
        cost_before: before.total,
        cost_after,
        cluster_before,
        cluster_after: cluster_before,
    };
    if candidate.iter().any(|v| !v.is_finite()) {
        tracing::warn!(id, "non-finite rewrite embedding rejected");
        return Ok(rejected(f64::NAN));
    }
    let (k_after, after) = match cost.best(candidate, &state.mu) {
        Ok(b) => b,
        Err(Error::ZeroVector) => {
            tracing::warn!(id, "zero rewrite embedding rejected");
            return Ok(rejected(f64::NAN));
        }
        Err(e) => return Err(e),
    };
    if after.total < before.total {
        x.set_row(id, candidate)?;
        state.assignments[id] = k_after;
        Ok(UpdateDecision {
            accepted: true,
            cost_before: before.total,
            cost_after: after.total,
            cluster_before,
            cluster_after: k_after,
        })
    } else {
        Ok(rejected(after.total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockLlm, MockScript, PromptKind};
    use crate::numerics::gaussian_posteriors;

    fn matrix(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_delta_is_empty() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        let s = ClusterState::new(2, vec![0, 1], vec![vec![0.0], vec![1.0]]);
        assert!(rank_uncertain(&x, &s, 0, 1).unwrap().is_empty());
        assert_eq!(rank_uncertain(&x, &s, 5, 1).unwrap().len(), 2);
    }

    #[test]
    fn midpoint_ranks_first() {
        let x = matrix(&[vec![0.0], vec![4.0], vec![2.0], vec![0.0], vec![4.0]]);
        let s = ClusterState::new(2, vec![0, 1, 0, 0, 1], vec![vec![0.0], vec![4.0]]);
        let hard = rank_uncertain(&x, &s, 1, 1).unwrap();
        assert_eq!(hard[0].id, 2);
        assert!((hard[0].entropy - 2f64.ln()).abs() < 1e-12);
        assert_eq!(hard[0].neighbor_clusters, vec![1]);
    }

    #[test]
    fn ranking_matches_posterior_entropy_oracle() {
        let rows = vec![vec![0.1, 0.0], vec![0.9, 0.2], vec![0.5, 0.1], vec![-0.3, 0.4], vec![1.4, -0.2]];
        let mu = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let x = matrix(&rows);
        let s = ClusterState::new(2, vec![0, 1, 0, 0, 1], mu.clone());
        let mut oracle: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let p = gaussian_posteriors(r, &mu).unwrap();
                (i, -p.iter().filter(|q| **q > 0.0).map(|q| q * q.ln()).sum::<f64>())
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let hard = rank_uncertain(&x, &s, 5, 1).unwrap();
        for (h, (id, e)) in hard.iter().zip(&oracle) {
            assert_eq!(h.id, *id);
            assert!((h.entropy - e).abs() < 1e-12);
        }
        assert!(hard.windows(2).all(|w| w[0].entropy >= w[1].entropy));
    }

    #[test]
    fn neighbors_prefer_semantic_centroids() {
        let mut s = ClusterState::new(3, vec![0, 1, 2], vec![vec![0.0, 0.0], vec![9.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(neighbor_clusters(&s, 0, 2).unwrap(), vec![2, 1]);
        s.set_semantic(0, "a".into(), vec![1.0, 0.0]);
        s.set_semantic(1, "b".into(), vec![1.0, 0.1]);
        s.set_semantic(2, "c".into(), vec![0.0, 1.0]);
        assert_eq!(neighbor_clusters(&s, 0, 1).unwrap(), vec![1]);
    }

    fn refine_fixture() -> (Vec<String>, ClusterState, Vec<ExemplarSet>, HardSample) {
        let texts: Vec<String> = (0..8).map(|i| format!("utterance {i}")).collect();
        let mut s = ClusterState::new(2, vec![0, 0, 0, 0, 1, 1, 1, 0], vec![vec![0.0], vec![1.0]]);
        s.set_semantic(0, "zero things".into(), vec![1.0]);
        s.set_semantic(1, "one things".into(), vec![-1.0]);
        let ex = vec![
            ExemplarSet { cluster: 0, member_ids: vec![0, 1], strategy: Default::default() },
            ExemplarSet { cluster: 1, member_ids: vec![4], strategy: Default::default() },
        ];
        let sample = HardSample { id: 7, entropy: 0.6, home_cluster: 0, neighbor_clusters: vec![1] };
        (texts, s, ex, sample)
    }

    #[test]
    fn echo_mock_returns_original() {
        let (texts, s, ex, sample) = refine_fixture();
        let mock = MockLlm::new(MockScript::echo());
        let (reply, rec) = refine_sample(&mock, &Templates::default(), &sample, &texts, &s, &ex);
        assert_eq!(reply.rewritten, "utterance 7");
        assert_eq!(reply.judged_cluster, Some(0));
        assert_eq!(rec.kind, PromptKind::Refine);
    }

    #[test]
    fn canned_rewrite_for_one_utterance() {
        let (texts, s, ex, sample) = refine_fixture();
        let mock = MockLlm::new(MockScript::echo().with_rule(
            Some(PromptKind::Refine),
            Some("Target utterance:\nutterance 7"),
            r#"{"judged_cluster": 1, "rewritten": "a much clearer request"}"#,
        ));
        let (reply, _) = refine_sample(&mock, &Templates::default(), &sample, &texts, &s, &ex);
        assert_eq!(reply.rewritten, "a much clearer request");
        assert_eq!(reply.judged_cluster, Some(1));
    }

    #[test]
    fn malformed_responses_fall_back_to_original() {
        let (texts, s, ex, sample) = refine_fixture();
        let mock = MockLlm::new(MockScript::fixed("not json at all"));
        let (reply, rec) = refine_sample(&mock, &Templates::default(), &sample, &texts, &s, &ex);
        assert_eq!(reply.rewritten, "utterance 7");
        assert_eq!(reply.flag.as_deref(), Some("parse_failed"));
        assert_eq!(rec.completions, 3);
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn identical_candidate_is_rejected() {
        let mut x = matrix(&[vec![0.3, 0.0], vec![2.0, 0.0]]);
        let mut s = ClusterState::new(2, vec![0, 1], vec![vec![0.0, 0.0], vec![2.0, 0.0]]);
        let row = x.row(0).to_vec();
        let d = conditional_update(&mut x, &mut s, 0, &row, &CostFunction::euclidean()).unwrap();
        assert!(!d.accepted);
        assert_eq!(x.revision(), 0);
    }

    #[test]
    fn centroid_candidate_is_accepted() {
        let mut x = matrix(&[vec![0.9, 0.0], vec![2.0, 0.0], vec![0.0, 0.0]]);
        let mut s = ClusterState::new(2, vec![0, 1, 0], vec![vec![0.0, 0.0], vec![2.0, 0.0]]);
        let d = conditional_update(&mut x, &mut s, 0, &[2.0, 0.0], &CostFunction::euclidean()).unwrap();
        assert!(d.accepted);
        assert_eq!((d.cost_before, d.cost_after), (0.81, 0.0));
        assert_eq!(s.assignments[0], 1);
        assert_eq!(x.row(0), &[2.0, 0.0]);
        assert_eq!(x.revision(), 1);
        assert_eq!(x.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn ninety_percent_cost_is_accepted_and_moves() {
        // x = 1.0 costs 1.0 against mu0 = 0; candidate 2.05 sits 0.95 from mu1 = 3,
        // cost 0.9025 which is below 1.0 and belongs to cluster 1.
        let mut x = matrix(&[vec![1.0]]);
        let mut s = ClusterState::new(2, vec![0], vec![vec![0.0], vec![3.0]]);
        let d = conditional_update(&mut x, &mut s, 0, &[2.05], &CostFunction::euclidean()).unwrap();
        assert!(d.accepted && d.cost_after < d.cost_before);
        assert_eq!(d.cluster_after, 1);
        assert_eq!(s.assignments[0], 1);
    }

    #[test]
    fn non_finite_candidate_is_rejected() {
        let mut x = matrix(&[vec![1.0]]);
        let mut s = ClusterState::new(2, vec![0], vec![vec![0.0], vec![3.0]]);
        let d = conditional_update(&mut x, &mut s, 0, &[f64::NAN], &CostFunction::euclidean()).unwrap();
        assert!(!d.accepted);
        assert_eq!(x.row(0), &[1.0]);
    }
}
