//! Domain types shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// One input utterance. `label` is only present for samples whose intent is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Row-major `n x d` matrix of utterance embeddings.
///
/// Rows are only ever replaced wholesale through [`EmbeddingMatrix::set_row`],
/// which bumps `revision` so callers can tell when refinement touched the data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    revision: u64,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Validation("embedding dimension must be at least 1".into()));
        }
        if data.len() != n * d {
            return Err(Error::Validation(format!(
                "embedding payload has {} values, expected {n} x {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("in embedding row {}", pos / d)));
        }
        Ok(Self {
            n,
            d,
            data,
            revision: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Overwrites row `i` and bumps the revision counter.
    pub fn set_row(&mut self, i: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("in replacement for row {i}")));
        }
        self.data[i * self.d..(i + 1) * self.d].copy_from_slice(values);
        self.revision += 1;
        Ok(())
    }

    /// Scales every non-zero row to unit length. Zero rows are left as they are.
    pub fn l2_normalize(&mut self) {
        for row in self.data.chunks_exact_mut(self.d) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// Assignments plus the two centroid families kept per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// Euclidean centroids.
    pub mu: Vec<Vec<f64>>,
    /// Semantic centroids: embeddings of the cluster summaries.
    theta: Vec<Option<Vec<f64>>>,
    summaries: Vec<Option<String>>,
}

impl ClusterState {
    pub fn new(k: usize, assignments: Vec<usize>, mu: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(mu.len(), k);
        debug_assert!(assignments.iter().all(|&a| a < k));
        Self {
            k,
            assignments,
            mu,
            theta: vec![None; k],
            summaries: vec![None; k],
        }
    }

    /// Stores a summary together with its embedding; the two are always set as a pair.
    pub fn set_semantic(&mut self, cluster: usize, summary: String, theta: Vec<f64>) {
        self.summaries[cluster] = Some(summary);
        self.theta[cluster] = Some(theta);
    }

    pub fn clear_semantic(&mut self) {
        self.theta.iter_mut().for_each(|t| *t = None);
        self.summaries.iter_mut().for_each(|s| *s = None);
    }

    pub fn theta(&self) -> &[Option<Vec<f64>>] {
        &self.theta
    }

    pub fn summaries(&self) -> &[Option<String>] {
        &self.summaries
    }

    /// All semantic centroids, or `None` if any cluster lacks one.
    pub fn full_theta(&self) -> Option<Vec<Vec<f64>>> {
        self.theta.iter().cloned().collect()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Labeled side channel for semi-supervised runs.
///
/// `members` index into whichever utterance list the subset was built from;
/// that may be the clustered pool or a separate labeled file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSubset {
    pub known_intents: Vec<String>,
    pub members: Vec<Vec<usize>>,
    pub seed_centroids: Vec<Vec<f64>>,
}

impl LabeledSubset {
    /// Groups labeled utterances by intent (first-appearance order) and computes
    /// the per-intent mean embedding from `embeddings`.
    pub fn from_utterances(utterances: &[Utterance], embeddings: &EmbeddingMatrix) -> Result<Self> {
        if utterances.len() != embeddings.n() {
            return Err(Error::Validation(format!(
                "{} labeled utterances but {} embedding rows",
                utterances.len(),
                embeddings.n()
            )));
        }
        let mut known_intents: Vec<String> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for u in utterances {
            let Some(label) = &u.label else { continue };
            match known_intents.iter().position(|l| l == label) {
                Some(j) => members[j].push(u.id),
                None => {
                    known_intents.push(label.clone());
                    members.push(vec![u.id]);
                }
            }
        }
        let seed_centroids = crate::semisup::compute_seed_centroids(&members, embeddings)?;
        Ok(Self {
            known_intents,
            members,
            seed_centroids,
        })
    }

    pub fn m(&self) -> usize {
        self.known_intents.len()
    }

    /// Checks the structural invariants against the source utterances and matrix.
    pub fn check(&self, utterances: &[Utterance], embeddings: &EmbeddingMatrix, k: usize) -> Result<()> {
        if self.m() > k {
            return Err(Error::Validation(format!(
                "{} known intents exceed K = {k}",
                self.m()
            )));
        }
        for (j, ids) in self.members.iter().enumerate() {
            if ids.is_empty() {
                return Err(Error::Validation(format!(
                    "known intent {:?} has no labeled utterances",
                    self.known_intents[j]
                )));
            }
            for &id in ids {
                let label = utterances.get(id).and_then(|u| u.label.as_deref());
                if label != Some(self.known_intents[j].as_str()) {
                    return Err(Error::Validation(format!(
                        "utterance {id} does not carry label {:?}",
                        self.known_intents[j]
                    )));
                }
            }
            let rows: Vec<&[f64]> = ids.iter().map(|&i| embeddings.row(i)).collect();
            let mean = numerics::mean_embedding(&rows)?;
            let seed = &self.seed_centroids[j];
            let drift = numerics::squared_euclidean(&mean, seed)?;
            if drift > 1e-18 * (1.0 + numerics::norm(seed).powi(2)) {
                return Err(Error::Validation(format!(
                    "seed centroid {j} is not the mean of its members"
                )));
            }
        }
        Ok(())
    }
}
