//! Distance kernels, soft assignments and linear assignment.

mod hungarian;

pub use hungarian::{hungarian_min_cost, Assignment, CostMatrix};

use crate::error::{Error, Result};

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(())
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn squared_euclidean(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(sq_dist(u, v))
}

/// Unchecked squared distance for hot loops where dimensions are known to agree.
pub(crate) fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Coordinate-wise arithmetic mean of a non-empty set of rows.
pub fn mean_embedding<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    let first = rows.first().ok_or(Error::EmptyCluster)?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for row in rows {
        let row = row.as_ref();
        check_dims(first, row)?;
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Softmax over negated squared distances (Gaussian kernel, unit temperature).
pub fn gaussian_posteriors<R: AsRef<[f64]>>(x: &[f64], mu: &[R]) -> Result<Vec<f64>> {
    if mu.is_empty() {
        return Err(Error::Validation("at least one centroid is required".into()));
    }
    let mut sq = Vec::with_capacity(mu.len());
    for m in mu {
        let m = m.as_ref();
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("in centroid".into()));
        }
        sq.push(squared_euclidean(x, m)?);
    }
    Ok(posteriors_from_sq_dists(&sq))
}

/// Softmax of `-sq_dists`, stabilised by subtracting the largest logit.
pub fn posteriors_from_sq_dists(sq_dists: &[f64]) -> Vec<f64> {
    let min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = sq_dists.iter().map(|d| (-(d - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// Shannon entropy in nats; `0 * ln 0` counts as zero.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for &q in p {
        if q.is_nan() || q < 0.0 {
            return Err(Error::Validation(format!("negative probability {q}")));
        }
        if q > 0.0 {
            h -= q * q.ln();
        }
    }
    Ok(h.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[2.0, 0.0], &[5.0, 0.0]).unwrap(), 1.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert_eq!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err().to_string(),
            "undefined cosine for zero vector"
        );
    }

    #[test]
    fn squared_euclidean_examples() {
        let v = [0.3, -1.5, 2.0];
        assert_eq!(squared_euclidean(&v, &v).unwrap(), 0.0);
        assert_eq!(squared_euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert_eq!(squared_euclidean(&[1.0, 2.0, 3.0], &[4.0, 6.0, 3.0]).unwrap(), 25.0);
        assert!(matches!(
            squared_euclidean(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_embedding_examples() {
        assert_eq!(mean_embedding(&[vec![1.5, -2.0]]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(mean_embedding(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            mean_embedding(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(),
            vec![3.0, 4.0]
        );
        let empty: [Vec<f64>; 0] = [];
        assert_eq!(mean_embedding(&empty).unwrap_err().to_string(), "empty cluster");
    }

    #[test]
    fn posterior_examples() {
        let p = gaussian_posteriors(&[0.0, 0.0], &[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]).unwrap();
        for q in &p {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(gaussian_posteriors(&[4.0], &[[2.0]]).unwrap(), vec![1.0]);
        let p = posteriors_from_sq_dists(&[0.0, 1.0]);
        assert!((p[0] - 0.73105858).abs() < 1e-8);
        assert!((p[1] - 0.26894142).abs() < 1e-8);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.73105858, 0.26894142]).unwrap() - 0.58220310).abs() < 1e-7);
        assert!(entropy(&[-0.1, 1.1]).is_err());
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, d)
    }

    proptest! {
        #[test]
        fn entropy_of_posteriors_is_bounded(
            x in vec_strategy(3),
            mu in prop::collection::vec(vec_strategy(3), 1..8),
        ) {
            let p = gaussian_posteriors(&x, &mu).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0 && h <= (mu.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn posteriors_shift_invariant(
            d in prop::collection::vec(0.0f64..20.0, 1..8),
            c in -50.0f64..50.0,
        ) {
            let a = posteriors_from_sq_dists(&d);
            let shifted: Vec<f64> = d.iter().map(|v| v + c).collect();
            let b = posteriors_from_sq_dists(&shifted);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_scale_invariant(u in vec_strategy(4), v in vec_strategy(4), c in 0.01f64..100.0) {
            prop_assume!(norm(&u) > 1e-6 && norm(&v) > 1e-6);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((cosine(&u, &v).unwrap() - cosine(&u, &scaled).unwrap()).abs() < 1e-12);
            prop_assert!((cosine(&u, &v).unwrap() - cosine(&v, &u).unwrap()).abs() < 1e-15);
        }
    }
}
