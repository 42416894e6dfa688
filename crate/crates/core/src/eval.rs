//! External clustering metrics: NMI, ARI and Hungarian-matched accuracy.
//!
//! NMI is normalised by the arithmetic mean of the two entropies.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hungarian_min_cost, CostMatrix};

/// Counts of (predicted cluster, true label) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[r][c]`: samples in predicted group `r` with true group `c`.
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub n: usize,
}

fn compress<T: Eq + Hash>(xs: &[T]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    let codes = xs
        .iter()
        .map(|x| {
            let next = ids.len();
            *ids.entry(x).or_insert(next)
        })
        .collect();
    (codes, ids.len())
}

impl ContingencyTable {
    pub fn new<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Validation(format!(
                "prediction has {} entries but truth has {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Validation("cannot score an empty labeling".into()));
        }
        let (p, r) = compress(pred);
        let (t, c) = compress(truth);
        let mut counts = vec![vec![0; c]; r];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|row| row.iter().sum()).collect();
        let col_sums = (0..c).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: pred.len(),
        })
    }
}

fn entropy_of(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let n = t.n as f64;
    let (hp, ht) = (entropy_of(&t.row_sums, n), entropy_of(&t.col_sums, n));
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi.max(0.0) / ((hp + ht) / 2.0)).min(1.0))
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

pub fn ari<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let index: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = (a + b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Fraction of samples matched under the best one-to-one cluster/label pairing.
pub fn acc<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let rows = t.counts.len();
    let cols = t.col_sums.len();
    let values = t.counts.iter().flatten().map(|&c| -(c as f64)).collect();
    let assignment = hungarian_min_cost(&CostMatrix::new(rows, cols, values)?)?;
    let matched: usize = assignment.pairs().map(|(r, c)| t.counts[r][c]).sum();
    Ok(matched as f64 / t.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    /// Mean of the other three.
    pub ana: f64,
}

pub fn evaluate<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<Metrics> {
    let (nmi, ari, acc) = (nmi(pred, truth)?, ari(pred, truth)?, acc(pred, truth)?);
    Ok(Metrics {
        nmi,
        ari,
        acc,
        ana: (nmi + ari + acc) / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PRED6: [usize; 6] = [0, 0, 1, 1, 2, 2];
    const TRUE6: [&str; 6] = ["a", "a", "a", "b", "b", "b"];

    #[test]
    fn identical_partitions() {
        let p = [0, 0, 1, 2, 2];
        let q = ["x", "x", "y", "z", "z"];
        assert!((nmi(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ari(&p, &q).unwrap(), 1.0);
        assert_eq!(acc(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_prediction() {
        let p = [0, 0, 0, 0];
        let q = ["a", "a", "b", "b"];
        assert_eq!(nmi(&p, &q).unwrap(), 0.0);
        assert_eq!(ari(&p, &q).unwrap(), 0.0);
        assert_eq!(nmi(&p, &[1, 1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn six_point_fixture() {
        assert!((nmi(&PRED6, &TRUE6).unwrap() - 0.5158037429793889).abs() < 1e-12);
        assert!((ari(&PRED6, &TRUE6).unwrap() - 0.24242424242424243).abs() < 1e-12);
        assert!((acc(&PRED6, &TRUE6).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(acc(&[0, 0, 1, 1], &["a", "b", "a", "b"]).unwrap(), 0.5);
        assert_eq!(acc(&[0, 1, 2, 3], &["a", "a", "b", "b"]).unwrap(), 0.5);
        assert!(acc(&[0, 1], &["a"]).is_err());
    }

    #[test]
    fn contingency_marginals() {
        let t = ContingencyTable::new(&PRED6, &TRUE6).unwrap();
        assert_eq!(t.counts, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(t.row_sums, vec![2, 2, 2]);
        assert_eq!(t.col_sums, vec![3, 3]);
        assert_eq!(t.n, 6);
    }

    fn labels(max: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0..max, 1..60)
    }

    proptest! {
        #[test]
        fn relabeling_invariance(p in labels(5), shift in 1usize..7) {
            let q: Vec<usize> = p.iter().map(|&v| (v * 3 + 1) % 5).collect();
            let relabeled: Vec<usize> = p.iter().map(|&v| v + shift * 10).collect();
            for (a, b) in [(nmi(&p, &q).unwrap(), nmi(&relabeled, &q).unwrap()),
                           (ari(&p, &q).unwrap(), ari(&relabeled, &q).unwrap()),
                           (acc(&p, &q).unwrap(), acc(&relabeled, &q).unwrap())] {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn self_agreement(p in labels(6)) {
            prop_assert!((nmi(&p, &p).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((ari(&p, &p).unwrap() - 1.0).abs() < 1e-12);
            prop_assert_eq!(acc(&p, &p).unwrap(), 1.0);
        }

        #[test]
        fn balanced_accuracy_floor(k in 2usize..6, per in 1usize..8, pred in prop::collection::vec(0usize..10, 48)) {
            let truth: Vec<usize> = (0..k * per).map(|i| i % k).collect();
            let pred: Vec<usize> = pred.iter().take(truth.len()).map(|v| v % k).collect();
            prop_assume!(pred.len() == truth.len());
            prop_assert!(acc(&pred, &truth).unwrap() >= 1.0 / k as f64 - 1e-12);
        }
    }
}
