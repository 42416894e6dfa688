//! Joint assignment cost over Euclidean and semantic centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine, sq_dist};
use crate::semisup::{supervised_term, IntentMapping};
use crate::types::ClusterState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Weights {
    pub const EUCLIDEAN_ONLY: Weights = Weights {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }
}

/// Per-term cost of placing one sample in one cluster.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub ed: f64,
    pub sc: f64,
    pub ss: f64,
    pub sp: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn combine(ed: f64, sc: f64, ss: f64, sp: f64, w: &Weights) -> Self {
        Self {
            ed,
            sc,
            ss,
            sp,
            total: ed + w.alpha * sc + w.beta * ss + w.gamma * sp,
        }
    }

    pub fn accumulate(&mut self, other: &CostBreakdown) {
        self.ed += other.ed;
        self.sc += other.sc;
        self.ss += other.ss;
        self.sp += other.sp;
        self.total += other.total;
    }
}

/// Index of the semantic centroid closest (by cosine) to `theta[k]`, lowest index on ties.
pub fn nearest_semantic_neighbor<R: AsRef<[f64]>>(theta: &[R], k: usize) -> Result<usize> {
    if theta.len() < 2 {
        return Err(Error::Validation(
            "nearest semantic neighbor needs at least two clusters".into(),
        ));
    }
    let anchor = theta[k].as_ref();
    let mut best: Option<(usize, f64)> = None;
    for (j, t) in theta.iter().enumerate() {
        if j == k {
            continue;
        }
        let sim = cosine(anchor, t.as_ref())?;
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((j, sim));
        }
    }
    Ok(best.map(|(j, _)| j).expect("at least one other cluster"))
}

/// Semantic centroids of one macro iteration with their cached neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticContext {
    pub theta: Vec<Vec<f64>>,
    pub neighbors: Vec<usize>,
}

impl SemanticContext {
    pub fn new(theta: Vec<Vec<f64>>) -> Result<Self> {
        let neighbors = (0..theta.len())
            .map(|k| nearest_semantic_neighbor(&theta, k))
            .collect::<Result<_>>()?;
        Ok(Self { theta, neighbors })
    }

    /// Built from the state's semantic centroids; `None` unless every cluster has one.
    pub fn from_state(state: &ClusterState) -> Result<Option<Self>> {
        state.full_theta().map(Self::new).transpose()
    }
}

/// Known-intent mapping and seed centroids for the soft must-link term.
#[derive(Debug, Clone, Copy)]
pub struct Supervision<'a> {
    pub mapping: &'a IntentMapping,
    pub seeds: &'a [Vec<f64>],
}

/// The assignment cost active for a run: Euclidean distance plus optional
/// cohesion/separation terms and an optional supervised term.
#[derive(Debug, Clone, Copy)]
pub struct CostFunction<'a> {
    pub weights: Weights,
    pub semantic: Option<&'a SemanticContext>,
    pub supervision: Option<Supervision<'a>>,
}

impl<'a> CostFunction<'a> {
    pub fn new(
        weights: Weights,
        semantic: Option<&'a SemanticContext>,
        supervision: Option<Supervision<'a>>,
    ) -> Result<Self> {
        if (weights.alpha > 0.0 || weights.beta > 0.0) && semantic.is_none() {
            return Err(Error::MissingSemanticCentroids);
        }
        Ok(Self {
            weights,
            semantic,
            supervision,
        })
    }

    pub fn euclidean() -> Self {
        Self {
            weights: Weights::EUCLIDEAN_ONLY,
            semantic: None,
            supervision: None,
        }
    }

    pub fn breakdown(&self, x: &[f64], mu: &[Vec<f64>], k: usize) -> Result<CostBreakdown> {
        let centroid = &mu[k];
        if centroid.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: centroid.len(),
            });
        }
        let ed = sq_dist(x, centroid);
        let (sc, ss) = match self.semantic {
            Some(ctx) => (
                1.0 - cosine(x, &ctx.theta[k])?,
                cosine(x, &ctx.theta[ctx.neighbors[k]])?,
            ),
            None => (0.0, 0.0),
        };
        let sp = match self.supervision {
            Some(s) => supervised_term(x, k, s.mapping, s.seeds)?,
            None => 0.0,
        };
        Ok(CostBreakdown::combine(ed, sc, ss, sp, &self.weights))
    }

    /// Cheapest cluster for `x`, lowest index on ties.
    pub fn best(&self, x: &[f64], mu: &[Vec<f64>]) -> Result<(usize, CostBreakdown)> {
        let mut best: Option<(usize, CostBreakdown)> = None;
        for k in 0..mu.len() {
            let b = self.breakdown(x, mu, k)?;
            if best.is_none_or(|(_, cur)| b.total < cur.total) {
                best = Some((k, b));
            }
        }
        best.ok_or_else(|| Error::Validation("no clusters to assign to".into()))
    }
}

/// Cost of assigning `x` to cluster `k` of `state`. `sp` is the already
/// computed supervised term, if any.
pub fn joint_cost(
    x: &[f64],
    k: usize,
    state: &ClusterState,
    alpha: f64,
    beta: f64,
    sp: Option<(f64, f64)>,
) -> Result<CostBreakdown> {
    let (sp_value, gamma) = sp.unwrap_or((0.0, 0.0));
    let weights = Weights::new(alpha, beta, gamma);
    let ed = crate::numerics::squared_euclidean(x, &state.mu[k])?;
    let (sc, ss) = match state.full_theta() {
        Some(theta) => {
            let nbr = nearest_semantic_neighbor(&theta, k)?;
            (1.0 - cosine(x, &theta[k])?, cosine(x, &theta[nbr])?)
        }
        None if alpha > 0.0 || beta > 0.0 => return Err(Error::MissingSemanticCentroids),
        None => (0.0, 0.0),
    };
    Ok(CostBreakdown::combine(ed, sc, ss, sp_value, &weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with_theta(mu: Vec<Vec<f64>>, theta: Vec<Vec<f64>>) -> ClusterState {
        let k = mu.len();
        let mut s = ClusterState::new(k, vec![0], mu);
        for (i, t) in theta.into_iter().enumerate() {
            s.set_semantic(i, format!("s{i}"), t);
        }
        s
    }

    #[test]
    fn reduces_to_squared_distance() {
        let s = ClusterState::new(2, vec![0], vec![vec![1.0, 1.0], vec![4.0, 5.0]]);
        let b = joint_cost(&[1.0, 1.0], 1, &s, 0.0, 0.0, None).unwrap();
        assert_eq!(b.total, 25.0);
        assert_eq!((b.sc, b.ss, b.sp), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_member_costs_nothing() {
        let x = vec![0.6, 0.8];
        let s = state_with_theta(vec![x.clone(), vec![9.0, 9.0]], vec![x.clone(), vec![-0.8, 0.6]]);
        let b = joint_cost(&x, 0, &s, 1.0, 1.0, None).unwrap();
        assert!(b.total.abs() < 1e-15, "{b:?}");
    }

    #[test]
    fn component_wise_example() {
        let s = state_with_theta(vec![vec![0.0, 0.0], vec![5.0, 5.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let b = joint_cost(&[1.0, 0.0], 0, &s, 0.5, 0.5, None).unwrap();
        assert_eq!((b.ed, b.sc, b.ss), (1.0, 1.0, 1.0));
        assert_eq!(b.total, 2.0);
    }

    #[test]
    fn semantic_weights_need_theta() {
        let s = ClusterState::new(2, vec![0], vec![vec![0.0], vec![1.0]]);
        let err = joint_cost(&[1.0], 0, &s, 0.1, 0.0, None).unwrap_err();
        assert_eq!(err.to_string(), "semantic centroids required");
        assert!(CostFunction::new(Weights::new(0.0, 0.2, 0.0), None, None).is_err());
    }

    #[test]
    fn neighbor_examples() {
        let two = [vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(nearest_semantic_neighbor(&two, 0).unwrap(), 1);
        assert_eq!(nearest_semantic_neighbor(&two, 1).unwrap(), 0);

        let three = [vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]];
        assert_eq!(nearest_semantic_neighbor(&three, 0).unwrap(), 1);

        let tied = [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        assert_eq!(nearest_semantic_neighbor(&tied, 0).unwrap(), 1);

        assert!(nearest_semantic_neighbor(&[vec![1.0]], 0).is_err());
    }

    #[test]
    fn best_breaks_ties_low() {
        let mu = vec![vec![0.0], vec![2.0], vec![-2.0], vec![2.0]];
        let f = CostFunction::euclidean();
        assert_eq!(f.best(&[1.0], &mu).unwrap().0, 0);
        assert_eq!(f.best(&[2.0], &mu).unwrap().0, 1);
    }
}
