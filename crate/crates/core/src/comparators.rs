//! Baseline weight constructors to benchmark against energy balancing:
//! uniform (unadjusted) weights and classical density-ratio (IPW) weights
//! built from a generalized propensity score.
//!
//! The GPS weights model `A | X` as Gaussian with a linear mean and constant
//! residual variance. For a piecewise-affine policy the implied density of
//! the shifted treatment follows by change of variables on the piece
//! containing the observed treatment:
//!
//! ```text
//! ratio_i = f((A_i - c_j) / s_j | X_i) / (|s_j| * f(A_i | X_i))
//! ```
//!
//! where `q(x, a) = s_j * a + c_j` on piece `j` and `f(. | X_i)` is the
//! fitted normal density. Ratios are clipped at their 99.5th percentile for
//! stability, then normalized so the weights sum to `n`.

use ndarray::Array2;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::policy::PolicySpec;
use crate::stats::quantile_sorted;
use crate::weights::WeightVector;

/// Quantile at which density ratios are clipped before normalization.
pub const GPS_CLIP_PERCENTILE: f64 = 0.995;

/// Equal weights (the unadjusted baseline).
pub fn uniform_weights(n: usize) -> WeightVector {
    WeightVector::uniform(n)
}

/// Density-ratio (IPW) weights from a Gaussian linear generalized
/// propensity score.
pub fn gps_density_ratio_weights(data: &Dataset, policy: &PolicySpec) -> Result<WeightVector> {
    data.validate()?;
    let (n, p) = (data.n(), data.p());

    // Least squares fit of A on [1, X] with a tiny ridge for rank safety.
    let m = p + 1;
    let mut gram = Array2::<f64>::zeros((m, m));
    let mut rhs = vec![0.0; m];
    let feature = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            data.x()[[i, j - 1]]
        }
    };
    for i in 0..n {
        for j in 0..m {
            let fj = feature(i, j);
            rhs[j] += fj * data.a()[i];
            for k in j..m {
                gram[[j, k]] += fj * feature(i, k);
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            gram[[j, k]] = gram[[k, j]];
        }
        gram[[j, j]] += 1e-10;
    }
    let beta = cholesky_solve(&gram, &rhs).ok_or_else(|| {
        Error::DegenerateData("singular design in the propensity regression".into())
    })?;

    let means: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| beta[j] * feature(i, j)).sum())
        .collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let e = data.a()[i] - means[i];
            e * e
        })
        .sum();
    let dof = n.saturating_sub(p + 1).max(1);
    let sigma2 = rss / dof as f64;
    let a_scale = 1.0 + data.a().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if sigma2.sqrt() <= 1e-12 * a_scale {
        return Err(Error::DegenerateData(
            "residual standard deviation of the treatment model is zero".into(),
        ));
    }

    // Per-row density ratio through the piece containing the observed A_i.
    let mut ratios = Vec::with_capacity(n);
    for i in 0..n {
        let a = data.a()[i];
        let piece = &policy.pieces()[policy.piece_index(a)];
        let slope = piece.slope;
        let shift = piece.intercept_per_tau * policy.tau() + piece.intercept_const;
        let pulled_back = (a - shift) / slope;
        let e_obs = a - means[i];
        let e_q = pulled_back - means[i];
        let log_ratio = (e_obs * e_obs - e_q * e_q) / (2.0 * sigma2);
        ratios.push(log_ratio.exp() / slope.abs());
    }

    // Clip at the upper percentile, then normalize to sum n.
    let mut sorted = ratios.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let threshold = quantile_sorted(&sorted, GPS_CLIP_PERCENTILE);
    let clipped: Vec<f64> = ratios.iter().map(|&r| r.min(threshold)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateData(
            "density ratios did not normalize to a positive finite total".into(),
        ));
    }
    let weights: Vec<f64> = clipped.iter().map(|&r| r * n as f64 / total).collect();
    WeightVector::from_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, Normal};

    fn gaussian_data(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let a = Array1::from_shape_fn(n, |i| {
            1.0 + 0.8 * x[[i, 0]] - 0.3 * x[[i, p - 1]] + rng.gen_range(-1.0..1.0)
        });
        let y = Array1::from_shape_fn(n, |i| a[i] + rng.gen_range(-0.5..0.5));
        Dataset::new(x, a, y).unwrap()
    }

    #[test]
    fn uniform_weights_are_all_ones() {
        let w = uniform_weights(3);
        assert_eq!(w.weights(), &[1.0, 1.0, 1.0]);
        let total: f64 = w.weights().iter().sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn identity_policy_gives_exactly_uniform_gps_weights() {
        let data = gaussian_data(1, 40, 3);
        let w = gps_density_ratio_weights(&data, &PolicySpec::identity()).unwrap();
        for &wi in w.weights() {
            assert_eq!(wi, 1.0);
        }
    }

    #[test]
    fn constant_shift_matches_closed_form_and_numeric_density() {
        let data = gaussian_data(2, 60, 2);
        let delta = 0.7;
        let policy = PolicySpec::constant_shift(delta).unwrap();
        let w = gps_density_ratio_weights(&data, &policy).unwrap();

        // Independent oracle: refit the same regression with ndarray-free
        // arithmetic, then evaluate normal densities through statrs.
        let n = data.n();
        let p = data.p();
        let m = p + 1;
        let mut gram = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for i in 0..n {
            let feat: Vec<f64> = std::iter::once(1.0)
                .chain((0..p).map(|j| data.x()[[i, j]]))
                .collect();
            for j in 0..m {
                rhs[j] += feat[j] * data.a()[i];
                for k in 0..m {
                    gram[j][k] += feat[j] * feat[k];
                }
            }
        }
        for j in 0..m {
            gram[j][j] += 1e-10;
        }
        // Solve by Gaussian elimination.
        let mut aug = gram.clone();
        let mut b = rhs.clone();
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&r1, &r2| aug[r1][col].abs().total_cmp(&aug[r2][col].abs()))
                .unwrap();
            aug.swap(col, pivot);
            b.swap(col, pivot);
            for r in col + 1..m {
                let f = aug[r][col] / aug[col][col];
                for c in col..m {
                    aug[r][c] -= f * aug[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut beta = vec![0.0; m];
        for r in (0..m).rev() {
            let mut acc = b[r];
            for c in r + 1..m {
                acc -= aug[r][c] * beta[c];
            }
            beta[r] = acc / aug[r][r];
        }
        let mean_of = |i: usize| -> f64 {
            beta[0] + (0..p).map(|j| beta[j + 1] * data.x()[[i, j]]).sum::<f64>()
        };
        let rss: f64 = (0..n)
            .map(|i| (data.a()[i] - mean_of(i)).powi(2))
            .sum();
        let sigma = (rss / (n - p - 1) as f64).sqrt();

        let mut raw = Vec::with_capacity(n);
        for i in 0..n {
            let a = data.a()[i];
            let normal = Normal::new(mean_of(i), sigma).unwrap();
            let numeric = normal.pdf(a - delta) / normal.pdf(a);
            let closed = ((2.0 * (a - mean_of(i)) * delta - delta * delta)
                / (2.0 * sigma * sigma))
                .exp();
            assert!((numeric - closed).abs() <= 1e-10 * closed.max(1.0));
            raw.push(closed);
        }
        let mut sorted = raw.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let cut = crate::stats::quantile_sorted(&sorted, GPS_CLIP_PERCENTILE);
        let clipped: Vec<f64> = raw.iter().map(|&r| r.min(cut)).collect();
        let total: f64 = clipped.iter().sum();
        for (i, &wi) in w.weights().iter().enumerate() {
            let expected = clipped[i] * n as f64 / total;
            assert!(
                (wi - expected).abs() <= 1e-8 * expected.max(1.0),
                "row {i}: {wi} vs {expected}"
            );
        }
    }

    #[test]
    fn weights_sum_to_n_after_normalization() {
        let data = gaussian_data(3, 500, 4);
        let policy = PolicySpec::constant_shift(0.5).unwrap();
        let w = gps_density_ratio_weights(&data, &policy).unwrap();
        let total: f64 = w.weights().iter().sum();
        assert!((total - 500.0).abs() <= 1e-8 * 500.0);
        assert!(w.weights().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn tiered_policy_ratios_are_positive_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 80;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..1.0));
        let a = Array1::from_shape_fn(n, |i| 8.0 + 10.0 * x[[i, 0]] + rng.gen_range(-2.0..2.0));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let data = Dataset::new(x, a, y).unwrap();
        let policy = PolicySpec::tiered_reduction(0.29).unwrap();
        let w = gps_density_ratio_weights(&data, &policy).unwrap();
        w.check_feasible(n).unwrap();
    }

    #[test]
    fn zero_residual_sd_is_rejected() {
        let n = 30;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
        let a = Array1::from_shape_fn(n, |i| 2.0 * x[[i, 0]] + 1.0);
        let y = Array1::zeros(n);
        let data = Dataset::new(x, a, y).unwrap();
        let err =
            gps_density_ratio_weights(&data, &PolicySpec::constant_shift(1.0).unwrap())
                .unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn clipping_bounds_extreme_ratios() {
        // A far-outlying treatment row would otherwise dominate under a
        // large shift; the clipped weight cannot exceed n (and the max
        // weight equals the clipped, renormalized threshold).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        let mut a = Array1::from_shape_fn(n, |i| x[[i, 0]] + rng.gen_range(-0.5..0.5));
        a[0] = 25.0; // outlier
        let y = Array1::zeros(n);
        let data = Dataset::new(x, a, y).unwrap();
        let policy = PolicySpec::constant_shift(3.0).unwrap();
        let w = gps_density_ratio_weights(&data, &policy).unwrap();
        w.check_feasible(n).unwrap();
        let max_w = w.weights().iter().cloned().fold(0.0f64, f64::max);
        assert!(max_w < n as f64);
    }
}
