use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::sq_dist;
use crate::types::{ClusterState, EmbeddingMatrix};

/// Draws an index with probability proportional to `weights`, skipping zero
/// weights. Falls back to a uniform draw over `fallback` when all weights vanish.
pub(crate) fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64], fallback: &[usize]) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
        last_positive
    } else {
        fallback[rng.random_range(0..fallback.len())]
    }
}

/// Index of the centroid nearest to `x`, lowest index on ties.
pub(crate) fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// D^2 seeding followed by nearest-centroid assignment.
///
/// The RNG is `ChaCha8Rng::seed_from_u64(seed)`. The first centroid is a
/// uniform index; every further one is drawn with probability proportional to
/// the squared distance to the closest centroid chosen so far (uniformly among
/// unchosen points when every such distance is zero).
pub fn kmeanspp_init(x: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ClusterState> {
    let n = x.n();
    if n < k {
        return Err(Error::Validation(format!(
            "cannot seed {k} clusters from {n} samples"
        )));
    }
    if k == 0 {
        return Err(Error::Validation("K must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![x.row(first).to_vec()];
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, x.row(first))).collect();

    while centers.len() < k {
        let remaining: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
        let next = weighted_pick(&mut rng, &d2, &remaining);
        chosen[next] = true;
        let c = x.row(next).to_vec();
        for (i, row) in x.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, &c));
        }
        d2[next] = 0.0;
        centers.push(c);
    }

    let assignments = x.rows().map(|r| nearest(r, &centers)).collect();
    Ok(ClusterState::new(k, assignments, centers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> EmbeddingMatrix {
        let mut rows = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.01;
            rows.push(vec![t, -t]);
            rows.push(vec![100.0 + t, 50.0 - t]);
        }
        EmbeddingMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn saturated_when_n_equals_k() {
        let x = EmbeddingMatrix::from_rows(&[vec![0.0], vec![5.0], vec![-3.0], vec![8.0]]).unwrap();
        let s = kmeanspp_init(&x, 4, 9).unwrap();
        let mut picked: Vec<f64> = s.mu.iter().map(|c| c[0]).collect();
        picked.sort_by(f64::total_cmp);
        assert_eq!(picked, vec![-3.0, 0.0, 5.0, 8.0]);
        for (i, &a) in s.assignments.iter().enumerate() {
            assert_eq!(s.mu[a].as_slice(), x.row(i));
        }
    }

    #[test]
    fn separated_blobs_get_one_centroid_each() {
        let x = blobs();
        for seed in 0..50 {
            let s = kmeanspp_init(&x, 2, seed).unwrap();
            let high = s.mu.iter().filter(|c| c[0] > 50.0).count();
            assert_eq!(high, 1, "seed {seed}");
        }
    }

    #[test]
    fn same_seed_same_state() {
        let x = blobs();
        assert_eq!(kmeanspp_init(&x, 3, 42).unwrap(), kmeanspp_init(&x, 3, 42).unwrap());
    }

    #[test]
    fn too_few_points() {
        let x = EmbeddingMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(kmeanspp_init(&x, 2, 0).is_err());
    }

    #[test]
    fn duplicate_points_fall_back_to_uniform() {
        let x = EmbeddingMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let s = kmeanspp_init(&x, 3, 5).unwrap();
        assert_eq!(s.mu, vec![vec![1.0]; 3]);
    }
}
