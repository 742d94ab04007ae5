//! Small statistical helpers: quantiles, IQR, moments, normal quantiles.

use crate::error::{Error, Result};

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `xs` must be sorted ascending.
pub(crate) fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let m = xs.len();
    if m == 1 {
        return xs[0];
    }
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= m {
        xs[m - 1]
    } else {
        xs[lo] + frac * (xs[lo + 1] - xs[lo])
    }
}

/// Interquartile range (q75 - q25) of unsorted data.
pub(crate) fn iqr(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    crate::exec::tree_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 2);
    let m = mean(xs);
    let ss = crate::exec::tree_sum_by(n, |i| {
        let d = xs[i] - m;
        d * d
    });
    (ss / (n - 1) as f64).sqrt()
}

/// Standard normal quantile `Phi^{-1}(p)` for `p` strictly inside (0, 1).
pub(crate) fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidLevel(p));
    }
    use statrs::distribution::ContinuousCDF;
    let std_normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    Ok(std_normal.inverse_cdf(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates_linearly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.0) - 1.0).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 1.0) - 4.0).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn iqr_of_standard_normal_quantiles_is_near_1349() {
        // Feed in the exact normal quantiles r/(R+1); the IQR estimate should
        // land on z_{0.75} - z_{0.25} ~= 1.349 up to O(1/R).
        let r = 4000;
        let xs: Vec<f64> = (1..=r)
            .map(|i| normal_quantile(i as f64 / (r + 1) as f64).unwrap())
            .collect();
        assert!((iqr(&xs) - 1.349).abs() < 0.005, "iqr = {}", iqr(&xs));
    }

    #[test]
    fn normal_quantile_matches_tables() {
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-5);
        assert!((normal_quantile(0.95).unwrap() - 1.6449).abs() < 1e-4);
        assert!((normal_quantile(0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_rejects_boundary_levels() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn sample_sd_matches_closed_form() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        // Mean 5, sum of squared deviations 32, sd = sqrt(32/7).
        assert!((sample_sd(&xs) - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
