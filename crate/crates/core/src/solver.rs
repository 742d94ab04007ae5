//! Energy balancing weights: minimize the (penalized) weighted energy
//! distance — or its Gaussian-MMD variant — over the scaled simplex
//!
//! ```text
//! minimize   E(F_{n,w}, F^q_n) + (lambda / n^2) * sum_i w_i^2
//! subject to w_i >= 0,  sum_i w_i = n,  (optionally) w_i <= cap
//! ```
//!
//! Both metrics reduce to the quadratic `f(w) = (w'Qw + 2 l'w + c0) / n^2`
//! with `Q = -D + lambda*I` (energy; `D` the observed distance matrix,
//! conditionally negative definite) or `Q = K + lambda*I` (MMD; `K` the
//! Gaussian Gram matrix, PSD). The solver is spectral projected gradient:
//! exact Euclidean projection onto the constraint set (sort-based, or a
//! breakpoint sweep when capped), Armijo backtracking on the projected
//! direction, and a Barzilai-Borwein step length clamped to a safe range.
//! Iterates are monotone, so the final iterate is the best found whether or
//! not the relative-decrease test fired.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::energy::{BalanceCache, Metric};
use crate::error::{Error, Result};
use crate::exec::{map_slots, tree_sum_by};
use crate::policy::PolicySpec;
use crate::weights::WeightVector;

/// Options for [`solve_ebw`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Balance metric to minimize.
    pub metric: Metric,
    /// Ridge penalty `lambda >= 0`; `None` selects `1e-4 * mean(D)` where
    /// `D` is the observed-sample distance matrix.
    pub lambda: Option<f64>,
    /// Gaussian-kernel bandwidth (MMD only); `None` selects the pooled
    /// median heuristic.
    pub bandwidth: Option<f64>,
    /// Optional upper bound on individual weights (must be >= 1 so the
    /// constraint set stays nonempty).
    pub cap: Option<f64>,
    pub max_iters: usize,
    /// Relative objective-decrease threshold declaring convergence.
    pub tol: f64,
    /// Standardize columns of `[X | A]` before computing distances.
    pub standardize: bool,
    /// Reserved for randomized restarts; the default deterministic path
    /// never draws from it.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Energy,
            lambda: None,
            bandwidth: None,
            cap: None,
            max_iters: 10_000,
            tol: 1e-7,
            standardize: true,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidOptions(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidOptions("max_iters must be at least 1".into()));
        }
        if let Some(cap) = self.cap {
            if !(cap >= 1.0 && cap.is_finite()) {
                return Err(Error::InvalidOptions(format!(
                    "cap must be finite and at least 1, got {cap}"
                )));
            }
        }
        if let Some(lambda) = self.lambda {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidOptions(format!(
                    "lambda must be finite and nonnegative, got {lambda}"
                )));
            }
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::NonPositiveBandwidth(h));
            }
        }
        Ok(())
    }
}

fn check_projection_input(v: &[f64], total: f64) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidOptions("cannot project an empty vector".into()));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidOptions(format!(
            "projection total must be positive and finite, got {total}"
        )));
    }
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                field: "projection input",
                location: i.to_string(),
            });
        }
    }
    Ok(())
}

/// Exact Euclidean projection of `v` onto `{w : w >= 0, sum w = total}`
/// (sort-based, O(n log n)).
pub fn project_simplex_sum(v: &[f64], total: f64) -> Result<Vec<f64>> {
    check_projection_input(v, total)?;
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - total) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    Ok(v.iter().map(|&x| (x - theta).max(0.0)).collect())
}

/// Exact Euclidean projection of `v` onto
/// `{w : 0 <= w <= cap, sum w = total}` via a descending breakpoint sweep
/// over the water level `theta` (solution is `clamp(v - theta, 0, cap)`).
pub fn project_capped_simplex(v: &[f64], total: f64, cap: f64) -> Result<Vec<f64>> {
    check_projection_input(v, total)?;
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidOptions(format!(
            "cap must be positive and finite, got {cap}"
        )));
    }
    let n = v.len();
    let capacity = cap * n as f64;
    if capacity < total * (1.0 - 1e-12) {
        return Err(Error::InfeasibleWeights(format!(
            "cap {cap} with {n} entries cannot reach total {total}"
        )));
    }
    let build = |theta: f64| -> Vec<f64> {
        v.iter().map(|&x| (x - theta).max(0.0).min(cap)).collect()
    };
    if capacity <= total {
        // Only attainable with every coordinate saturated.
        return Ok(vec![cap; n]);
    }
    // Events where g(theta) = sum clamp(v_i - theta, 0, cap) changes slope:
    // at v_i coordinate i activates, at v_i - cap it saturates.
    let mut events: Vec<(f64, bool)> = Vec::with_capacity(2 * n);
    for &x in v {
        events.push((x, true));
        events.push((x - cap, false));
    }
    events.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    // State for theta above the next unprocessed event group: `active` holds
    // the count and value-sum of coordinates with v_i - cap < theta < v_i.
    let mut active_count = 0usize;
    let mut active_sum = 0.0;
    let mut saturated = 0.0;
    let mut idx = 0;
    while idx < events.len() {
        let theta_e = events[idx].0;
        // g at the top of this group's plateau, using the state valid on
        // [theta_e, previous event].
        let g_here = active_sum - active_count as f64 * theta_e + saturated;
        if g_here >= total {
            if active_count > 0 {
                let theta = (active_sum + saturated - total) / active_count as f64;
                return Ok(build(theta));
            }
            // Constant segment that already equals the target.
            return Ok(build(theta_e));
        }
        while idx < events.len() && events[idx].0 == theta_e {
            let (value, is_activation) = events[idx];
            if is_activation {
                active_count += 1;
                active_sum += value;
            } else {
                active_count -= 1;
                active_sum -= value + cap;
                saturated += cap;
            }
            idx += 1;
        }
    }
    // Unreachable when capacity > total: g tends to n*cap below all events.
    Err(Error::InfeasibleWeights(
        "capped projection failed to bracket the water level".into(),
    ))
}

/// The quadratic `f(w) = (w'Qw + 2 l'w + c0) / n^2` shared by both metrics.
struct Quad {
    q: Array2<f64>,
    l: Vec<f64>,
    c0: f64,
    n2: f64,
}

impl Quad {
    fn matvec(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let q = self.q.as_slice().expect("standard layout");
        map_slots(n, 32, |i| {
            let row = &q[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (rv, wv) in row.iter().zip(w.iter()) {
                acc += rv * wv;
            }
            acc
        })
    }

    fn value_from(&self, w: &[f64], qw: &[f64]) -> f64 {
        let n = w.len();
        let wqw = tree_sum_by(n, |i| w[i] * qw[i]);
        let lw = tree_sum_by(n, |i| self.l[i] * w[i]);
        (wqw + 2.0 * lw + self.c0) / self.n2
    }

    fn grad_from(&self, qw: &[f64]) -> Vec<f64> {
        qw.iter()
            .zip(self.l.iter())
            .map(|(&a, &b)| 2.0 * (a + b) / self.n2)
            .collect()
    }

    /// Upper bound on the gradient's Lipschitz constant: `2 ||Q||_inf / n^2`.
    fn lipschitz_bound(&self) -> f64 {
        let n = self.l.len();
        let q = self.q.as_slice().expect("standard layout");
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row_sum: f64 = q[i * n..(i + 1) * n].iter().map(|x| x.abs()).sum();
            worst = worst.max(row_sum);
        }
        (2.0 * worst / self.n2).max(f64::MIN_POSITIVE)
    }
}

fn build_quad(cache: &BalanceCache, opts: &SolverOptions) -> Result<Quad> {
    let n = cache.n();
    let max_obs_distance = cache
        .obs_distances()
        .iter()
        .fold(0.0f64, |acc, &d| acc.max(d));
    if max_obs_distance == 0.0 {
        return Err(Error::DegenerateData(
            "all observed rows are identical; weights cannot be identified".into(),
        ));
    }
    let qp = cache.qp_components();
    let lambda = match opts.lambda {
        Some(l) => l,
        None => 1e-4 * qp.mean_obs_distance(),
    };
    match opts.metric {
        Metric::Energy => {
            let mut q = -&qp.obs_distances;
            for i in 0..n {
                q[[i, i]] += lambda;
            }
            Ok(Quad {
                q,
                l: qp.cross_row_sums,
                c0: -qp.target_total,
                n2: (n * n) as f64,
            })
        }
        Metric::GaussianMmd => {
            let bandwidth = match opts.bandwidth {
                Some(h) => h,
                None => cache.pooled_median_bandwidth()?,
            };
            let (k_obs, k_cross, k_tgt) = cache.gram_matrices(bandwidth);
            let mut q = k_obs;
            for i in 0..n {
                q[[i, i]] += lambda;
            }
            let kc = k_cross.as_slice().expect("standard layout");
            let l: Vec<f64> = (0..n)
                .map(|i| -tree_sum_by(n, |k| kc[i * n + k]))
                .collect();
            let c0 = tree_sum_by(n * n, |idx| k_tgt.as_slice().expect("standard layout")[idx]);
            Ok(Quad {
                q,
                l,
                c0,
                n2: (n * n) as f64,
            })
        }
    }
}

fn project(v: &[f64], total: f64, cap: Option<f64>) -> Result<Vec<f64>> {
    match cap {
        None => project_simplex_sum(v, total),
        Some(c) => project_capped_simplex(v, total, c),
    }
}

const ARMIJO_SIGMA: f64 = 1e-4;
const STEP_FLOOR: f64 = 1e-14;
const ALPHA_MIN: f64 = 1e-10;
const ALPHA_MAX: f64 = 1e12;

fn spg(quad: &Quad, opts: &SolverOptions, trace: Option<&mut Vec<f64>>) -> Result<WeightVector> {
    let n = quad.l.len();
    let total = n as f64;
    let mut w = vec![1.0; n];
    let mut qw = quad.matvec(&w);
    let mut f = quad.value_from(&w, &qw);
    let mut g = quad.grad_from(&qw);
    let mut history = trace;
    if let Some(h) = history.as_deref_mut() {
        h.push(f);
    }
    let mut alpha = 1.0 / quad.lipschitz_bound();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        iterations = it;
        let target: Vec<f64> = w.iter().zip(g.iter()).map(|(&wi, &gi)| wi - alpha * gi).collect();
        let projected = project(&target, total, opts.cap)?;
        let d: Vec<f64> = projected.iter().zip(w.iter()).map(|(&p, &x)| p - x).collect();
        let d_inf = d.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
        if d_inf <= 1e-15 {
            converged = true;
            break;
        }
        let gd: f64 = tree_sum_by(n, |i| g[i] * d[i]);
        let slope = gd.min(0.0);
        let mut step = 1.0;
        let (w_new, qw_new, f_new) = loop {
            let candidate: Vec<f64> = w.iter().zip(d.iter()).map(|(&x, &di)| x + step * di).collect();
            let qw_c = quad.matvec(&candidate);
            let f_c = quad.value_from(&candidate, &qw_c);
            if f_c <= f + ARMIJO_SIGMA * step * slope {
                break (candidate, qw_c, f_c);
            }
            step *= 0.5;
            if step < STEP_FLOOR {
                // No acceptable descent: keep the current iterate; the zero
                // decrease trips the convergence test below.
                break (w.clone(), qw.clone(), f);
            }
        };
        let decrease = f - f_new;
        let g_new = quad.grad_from(&qw_new);
        // Barzilai-Borwein step for the next iteration.
        let ss = tree_sum_by(n, |i| (w_new[i] - w[i]) * (w_new[i] - w[i]));
        let sy = tree_sum_by(n, |i| (w_new[i] - w[i]) * (g_new[i] - g[i]));
        alpha = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            1.0 / quad.lipschitz_bound()
        };
        w = w_new;
        qw = qw_new;
        f = f_new;
        g = g_new;
        if let Some(h) = history.as_deref_mut() {
            h.push(f);
        }
        if decrease < opts.tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let result = WeightVector::from_solver(w, f, converged, iterations);
    result.check_feasible(n)?;
    Ok(result)
}

/// Solve for energy balancing weights on (data, policy).
pub fn solve_ebw(data: &Dataset, policy: &PolicySpec, opts: &SolverOptions) -> Result<WeightVector> {
    opts.validate()?;
    let cache = BalanceCache::new(data, policy, opts.standardize)?;
    solve_from_cache(&cache, opts)
}

/// Solve using a prebuilt distance cache (bootstrap and diagnostics reuse
/// caches across calls).
pub fn solve_from_cache(cache: &BalanceCache, opts: &SolverOptions) -> Result<WeightVector> {
    opts.validate()?;
    let quad = build_quad(cache, opts)?;
    spg(&quad, opts, None)
}

/// As [`solve_from_cache`], also returning the objective value after the
/// initial point and each accepted iterate (nonincreasing).
pub fn solve_traced(cache: &BalanceCache, opts: &SolverOptions) -> Result<(WeightVector, Vec<f64>)> {
    opts.validate()?;
    let quad = build_quad(cache, opts)?;
    let mut history = Vec::new();
    let w = spg(&quad, opts, Some(&mut history))?;
    Ok((w, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::qp_components;
    use crate::linalg::cholesky;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let a = ndarray::Array1::from_shape_fn(n, |i| x[[i, 0]] + 0.5 * rng.gen_range(-1.0..1.0));
        let y = ndarray::Array1::from_shape_fn(n, |i| a[i] + rng.gen_range(-0.1..0.1));
        Dataset::new(x, a, y).unwrap()
    }

    /// Bisection oracle for the capped (or uncapped) simplex projection.
    fn projection_oracle(v: &[f64], total: f64, cap: f64) -> Vec<f64> {
        let g = |theta: f64| -> f64 {
            v.iter().map(|&x| (x - theta).max(0.0).min(cap)).sum()
        };
        // Bracket the water level: at `lo` every coordinate contributes at
        // least `total` (capped: exactly `cap`, and n*cap >= total), at `hi`
        // the sum is zero.
        let span = if cap.is_finite() { cap } else { total };
        let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - span - 1.0;
        let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        v.iter().map(|&x| (x - theta).max(0.0).min(cap)).collect()
    }

    #[test]
    fn simplex_projection_hand_cases() {
        // Already-feasible points are fixed.
        let w = project_simplex_sum(&[3.0, 0.0, 0.0], 3.0).unwrap();
        assert_eq!(w, vec![3.0, 0.0, 0.0]);
        // (2, 1) onto sum 1: water level 1.
        let w = project_simplex_sum(&[2.0, 1.0], 1.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
        // Symmetric input splits evenly.
        let w = project_simplex_sum(&[0.5, 0.5], 2.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capped_projection_hand_case() {
        // (10, 0, 0, 0) onto sum 4 with cap 2: first saturates, the rest
        // share the remainder equally.
        let w = project_capped_simplex(&[10.0, 0.0, 0.0, 0.0], 4.0, 2.0).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12);
        for &wi in &w[1..] {
            assert!((wi - 2.0 / 3.0).abs() < 1e-12);
        }
        // cap = 1 with total n forces uniform weights.
        let w = project_capped_simplex(&[5.0, -3.0, 0.4], 3.0, 1.0).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn capped_projection_infeasible_total() {
        assert!(matches!(
            project_capped_simplex(&[0.0, 0.0], 5.0, 2.0),
            Err(Error::InfeasibleWeights(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn simplex_projection_matches_bisection_oracle(
            v in proptest::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let total = v.len() as f64;
            let w = project_simplex_sum(&v, total).unwrap();
            let oracle = projection_oracle(&v, total, f64::INFINITY);
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total);
            for (a, b) in w.iter().zip(oracle.iter()) {
                prop_assert!(*a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn capped_projection_matches_bisection_oracle(
            v in proptest::collection::vec(-10.0f64..10.0, 1..20),
            cap in 1.0f64..6.0,
        ) {
            let total = v.len() as f64;
            let w = project_capped_simplex(&v, total, cap).unwrap();
            let oracle = projection_oracle(&v, total, cap);
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total);
            for (a, b) in w.iter().zip(oracle.iter()) {
                prop_assert!(*a >= -0.0);
                prop_assert!(*a <= cap + 1e-12);
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn projection_is_idempotent_on_feasible_points(
            raw in proptest::collection::vec(0.01f64..3.0, 2..12),
        ) {
            // Scale to the simplex, project, and expect a fixed point.
            let n = raw.len() as f64;
            let s: f64 = raw.iter().sum();
            let v: Vec<f64> = raw.iter().map(|&x| x * n / s).collect();
            let w = project_simplex_sum(&v, n).unwrap();
            for (a, b) in w.iter().zip(v.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn options_validation_rejects_bad_values() {
        let bad_tol = SolverOptions { tol: 0.0, ..Default::default() };
        assert!(bad_tol.validate().is_err());
        let bad_iters = SolverOptions { max_iters: 0, ..Default::default() };
        assert!(bad_iters.validate().is_err());
        let bad_cap = SolverOptions { cap: Some(0.5), ..Default::default() };
        assert!(bad_cap.validate().is_err());
        let bad_lambda = SolverOptions { lambda: Some(-1.0), ..Default::default() };
        assert!(bad_lambda.validate().is_err());
        let bad_bw = SolverOptions { bandwidth: Some(0.0), ..Default::default() };
        assert!(bad_bw.validate().is_err());
        assert!(SolverOptions::default().validate().is_ok());
    }

    #[test]
    fn identity_policy_with_penalty_recovers_uniform_weights() {
        let data = random_instance(7, 30, 3);
        let opts = SolverOptions { lambda: Some(1.0), ..Default::default() };
        let w = solve_ebw(&data, &PolicySpec::identity(), &opts).unwrap();
        assert!(w.converged);
        for &wi in w.weights() {
            assert!((wi - 1.0).abs() < 1e-6, "w_i = {wi}");
        }
    }

    #[test]
    fn large_penalty_dominates_toward_uniform() {
        let data = random_instance(11, 25, 2);
        let policy = PolicySpec::constant_shift(0.8).unwrap();
        let opts = SolverOptions { lambda: Some(1e6), ..Default::default() };
        let w = solve_ebw(&data, &policy, &opts).unwrap();
        let worst = w
            .weights()
            .iter()
            .fold(0.0f64, |acc, &wi| acc.max((wi - 1.0).abs()));
        assert!(worst <= 1e-3, "max deviation {worst}");
    }

    #[test]
    fn micro_grid_search_certifies_optimality() {
        // n = 4, lambda = 0: enumerate the scaled simplex on a 0.02-step
        // grid and compare objectives.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z_obs = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.5..1.5));
        let z_tgt = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.5..1.5));
        let cache = BalanceCache::from_matrices(z_obs.clone(), z_tgt.clone()).unwrap();
        let opts = SolverOptions { lambda: Some(0.0), ..Default::default() };
        let solved = solve_from_cache(&cache, &opts).unwrap();
        let qp = qp_components(z_obs.view(), z_tgt.view()).unwrap();
        let f_solver = qp.objective(solved.weights());

        let step = 0.02f64;
        let units = (4.0 / step).round() as usize; // k1+k2+k3+k4 = units
        let mut best = f64::INFINITY;
        let mut w = [0.0f64; 4];
        for k1 in 0..=units {
            for k2 in 0..=units - k1 {
                for k3 in 0..=units - k1 - k2 {
                    let k4 = units - k1 - k2 - k3;
                    w[0] = k1 as f64 * step;
                    w[1] = k2 as f64 * step;
                    w[2] = k3 as f64 * step;
                    w[3] = k4 as f64 * step;
                    let f = qp.objective(&w);
                    if f < best {
                        best = f;
                    }
                }
            }
        }
        assert!(
            (f_solver - best).abs() <= 1e-3,
            "solver {f_solver} vs grid {best}"
        );
    }

    #[test]
    fn descent_trace_is_monotone() {
        let data = random_instance(3, 40, 3);
        let policy = PolicySpec::constant_shift(1.0).unwrap();
        let cache = BalanceCache::new(&data, &policy, true).unwrap();
        let (_, history) = solve_traced(&cache, &SolverOptions::default()).unwrap();
        assert!(history.len() >= 2);
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "ascent: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn objective_is_convex_on_the_feasible_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z_obs = Array2::from_shape_fn((12, 3), |_| rng.gen_range(-2.0..2.0));
        let z_tgt = Array2::from_shape_fn((12, 3), |_| rng.gen_range(-2.0..2.0));
        let qp = qp_components(z_obs.view(), z_tgt.view()).unwrap();
        for _ in 0..100 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let raw: Vec<f64> = (0..12).map(|_| crate::rng::exp1(rng)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v * 12.0 / s).collect()
            };
            let w1 = draw(&mut rng);
            let w2 = draw(&mut rng);
            let mid: Vec<f64> = w1.iter().zip(w2.iter()).map(|(a, b)| 0.5 * (a + b)).collect();
            let f_mid = qp.objective(&mid);
            let f_avg = 0.5 * (qp.objective(&w1) + qp.objective(&w2));
            assert!(f_mid <= f_avg + 1e-9, "midpoint {f_mid} vs average {f_avg}");
        }
    }

    #[test]
    fn output_is_feasible_even_without_convergence() {
        let data = random_instance(5, 35, 4);
        let policy = PolicySpec::constant_shift(2.0).unwrap();
        let opts = SolverOptions { max_iters: 2, tol: 1e-14, ..Default::default() };
        let w = solve_ebw(&data, &policy, &opts).unwrap();
        assert!(!w.converged);
        assert_eq!(w.iterations, 2);
        w.check_feasible(35).unwrap();
    }

    #[test]
    fn convergence_flag_set_on_easy_instances() {
        let data = random_instance(9, 20, 2);
        let policy = PolicySpec::constant_shift(0.5).unwrap();
        let w = solve_ebw(&data, &policy, &SolverOptions::default()).unwrap();
        assert!(w.converged);
        assert!(w.iterations < 10_000);
        assert!(w.objective.is_some());
    }

    #[test]
    fn cap_constraint_is_respected() {
        let data = random_instance(13, 30, 3);
        let policy = PolicySpec::constant_shift(1.5).unwrap();
        let capped = SolverOptions { cap: Some(1.5), ..Default::default() };
        let w = solve_ebw(&data, &policy, &capped).unwrap();
        let max_w = w.weights().iter().cloned().fold(0.0f64, f64::max);
        assert!(max_w <= 1.5 + 1e-9, "max weight {max_w}");
        // The capped optimum cannot beat the uncapped one.
        let free = solve_ebw(&data, &policy, &SolverOptions::default()).unwrap();
        let cache = BalanceCache::new(&data, &policy, true).unwrap();
        let f_capped = cache.energy_report(&w).unwrap().value;
        let f_free = cache.energy_report(&free).unwrap().value;
        assert!(f_capped >= f_free - 1e-9);
    }

    #[test]
    fn solution_no_worse_than_uniform() {
        for seed in [1u64, 2, 3] {
            let data = random_instance(seed, 24, 3);
            let policy = PolicySpec::constant_shift(1.0).unwrap();
            let cache = BalanceCache::new(&data, &policy, true).unwrap();
            let solved = solve_from_cache(&cache, &SolverOptions::default()).unwrap();
            let f_solved = cache.energy_report(&solved).unwrap().value;
            let f_uniform = cache
                .energy_report(&WeightVector::uniform(24))
                .unwrap()
                .value;
            assert!(f_solved <= f_uniform + 1e-7);
        }
    }

    #[test]
    fn balanced_distance_grows_with_shift_size() {
        let data = random_instance(31, 40, 3);
        let mut last = -1.0;
        for tau in [0.0, 1.0, 3.0] {
            let policy = PolicySpec::constant_shift(tau).unwrap();
            let cache = BalanceCache::new(&data, &policy, true).unwrap();
            let w = solve_from_cache(&cache, &SolverOptions::default()).unwrap();
            let value = cache.energy_report(&w).unwrap().value;
            assert!(value >= last - 1e-9, "tau {tau}: {value} < {last}");
            last = value;
        }
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let x = Array2::from_elem((5, 2), 1.0);
        let a = ndarray::Array1::from_elem(5, 2.0);
        let y = ndarray::Array1::zeros(5);
        let data = Dataset::new(x, a, y).unwrap();
        let err = solve_ebw(
            &data,
            &PolicySpec::constant_shift(1.0).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn mmd_gram_matrix_is_positive_semidefinite() {
        let data = random_instance(23, 20, 3);
        let policy = PolicySpec::constant_shift(1.0).unwrap();
        let cache = BalanceCache::new(&data, &policy, true).unwrap();
        let h = cache.pooled_median_bandwidth().unwrap();
        let (k_obs, _, _) = cache.gram_matrices(h);
        // Symmetrize, shift by 2e-8, and require a Cholesky factor: that
        // certifies the minimum eigenvalue is >= -2e-8.
        let n = k_obs.nrows();
        let mut sym = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                sym[[i, j]] = 0.5 * (k_obs[[i, j]] + k_obs[[j, i]]);
            }
            sym[[i, i]] += 2e-8;
        }
        assert!(cholesky(&sym).is_some());
    }

    #[test]
    fn mmd_solve_improves_on_uniform() {
        let data = random_instance(29, 25, 3);
        let policy = PolicySpec::constant_shift(1.2).unwrap();
        let cache = BalanceCache::new(&data, &policy, true).unwrap();
        let opts = SolverOptions { metric: Metric::GaussianMmd, ..Default::default() };
        let w = solve_from_cache(&cache, &opts).unwrap();
        w.check_feasible(25).unwrap();
        let h = cache.pooled_median_bandwidth().unwrap();
        let solved = cache.mmd_report(&w, h).unwrap().value;
        let uniform = cache
            .mmd_report(&WeightVector::uniform(25), h)
            .unwrap()
            .value;
        assert!(solved <= uniform + 1e-9, "{solved} vs {uniform}");
        // An explicit bandwidth is honored.
        let opts2 = SolverOptions {
            metric: Metric::GaussianMmd,
            bandwidth: Some(2.0 * h),
            ..Default::default()
        };
        assert!(solve_from_cache(&cache, &opts2).is_ok());
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let data = random_instance(41, 30, 3);
        let policy = PolicySpec::constant_shift(1.0).unwrap();
        let a = solve_ebw(&data, &policy, &SolverOptions::default()).unwrap();
        let b = solve_ebw(&data, &policy, &SolverOptions::default()).unwrap();
        assert_eq!(a.weights().len(), b.weights().len());
        for (x, y) in a.weights().iter().zip(b.weights().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.iterations, b.iterations);
    }
}
