//! Weighted energy distance and Gaussian MMD between the observed joint
//! sample `(X_i, A_i)` and the policy-shifted target `(X_i, q(X_i, A_i))`.
//!
//! The central quantity is the weighted two-sample V-statistic (Szekely &
//! Rizzo 2013, weighted form):
//!
//! ```text
//! E(F_{n,w}, F^q_n) = (1/n^2) [ 2 * sum_{i,k} w_i ||Zobs_i - Ztgt_k||
//!                               -   sum_{i,k} w_i w_k ||Zobs_i - Zobs_k||
//!                               -   sum_{i,k} ||Ztgt_i - Ztgt_k|| ]
//! ```
//!
//! which is nonnegative for any feasible weighting (`w >= 0`, `sum w = n`)
//! and zero exactly when the weighted observed sample matches the target.
//! The Gaussian-MMD variant (Gretton et al. 2012) replaces distances with
//! kernel values `k(z, z') = exp(-||z - z'||^2 / (2 h^2))` and flips the
//! signs: `MMD^2 = obs + target - 2 * cross`.
//!
//! Distance matrices are computed once per (data, policy) pair and cached in
//! [`BalanceCache`]; the solver and the diagnostics reuse them. All `n^2`
//! accumulations run through pairwise tree summation, and the row fills are
//! data-parallel over row blocks, so results are identical for any thread
//! count.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::exec::{fill_rows, tree_sum, tree_sum_by};
use crate::policy::PolicySpec;
use crate::weights::WeightVector;

/// Which discrepancy the solver minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Energy,
    GaussianMmd,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Metric::Energy),
            "mmd" | "gaussian_mmd" => Ok(Metric::GaussianMmd),
            other => Err(Error::InvalidOptions(format!(
                "unknown metric '{other}'; expected 'energy' or 'mmd'"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Energy => write!(f, "energy"),
            Metric::GaussianMmd => write!(f, "gaussian_mmd"),
        }
    }
}

/// Decomposed discrepancy between the weighted observed sample and the
/// shifted target sample. For the energy metric
/// `value = 2*cross_term - obs_term - target_term`; for the Gaussian MMD
/// `value = obs_term + target_term - 2*cross_term`. All terms carry the
/// `1/n^2` normalization.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub value: f64,
    pub cross_term: f64,
    pub obs_term: f64,
    pub target_term: f64,
    pub metric: Metric,
    /// Kernel bandwidth (Gaussian MMD only).
    pub bandwidth: Option<f64>,
}

fn check_finite(name: &'static str, z: ArrayView2<'_, f64>) -> Result<()> {
    for ((i, j), v) in z.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: name,
                location: format!("({i}, {j})"),
            });
        }
    }
    Ok(())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut ss = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        ss += d * d;
    }
    ss.sqrt()
}

/// All Euclidean distances between rows of `z1` (m rows) and `z2` (k rows),
/// as an `m x k` matrix. Row fills run in parallel when enabled.
pub fn pairwise_distances(z1: ArrayView2<'_, f64>, z2: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if z1.ncols() != z2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "pairwise distances between {}-column and {}-column matrices",
            z1.ncols(),
            z2.ncols()
        )));
    }
    if z1.nrows() == 0 || z2.nrows() == 0 {
        return Err(Error::DimensionMismatch(
            "pairwise distances require at least one row on each side".into(),
        ));
    }
    let (m, k) = (z1.nrows(), z2.nrows());
    // Work on owned standard-layout copies so row slices are contiguous.
    let a = z1.to_owned();
    let b = z2.to_owned();
    let buf = fill_rows(m, k, |i, row| {
        let ri = a.row(i);
        let ri = ri.as_slice().expect("standard layout");
        for (j, cell) in row.iter_mut().enumerate() {
            let rj = b.row(j);
            *cell = euclidean(ri, rj.as_slice().expect("standard layout"));
        }
    });
    Ok(Array2::from_shape_vec((m, k), buf).expect("shape matches fill"))
}

/// Median of the strictly-upper-triangle pairwise distances of `z` (the
/// median heuristic bandwidth). Even counts average the two middle order
/// statistics. A zero median (duplicated rows dominating) is an error.
pub fn median_heuristic(z: ArrayView2<'_, f64>) -> Result<f64> {
    if z.nrows() < 2 {
        return Err(Error::DegenerateData(format!(
            "median heuristic needs at least 2 rows, got {}",
            z.nrows()
        )));
    }
    check_finite("Z", z)?;
    let d = pairwise_distances(z, z)?;
    let n = z.nrows();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(d[[i, j]]);
        }
    }
    median_of(&mut upper)
}

/// Median with the even-count averaging rule; zero medians are degenerate.
fn median_of(values: &mut [f64]) -> Result<f64> {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(f64::total_cmp);
    let c = values.len();
    let median = if c % 2 == 1 {
        values[c / 2]
    } else {
        0.5 * (values[c / 2 - 1] + values[c / 2])
    };
    if median <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// The three V-statistic terms, each normalized by `n^2`, with an arbitrary
/// entry transform `g` (identity for energy distance, Gaussian kernel for
/// MMD). `d_*` are the `n x n` distance matrices.
fn vstat_terms<G>(
    w: &[f64],
    d_obs: &Array2<f64>,
    d_cross: &Array2<f64>,
    d_tgt: &Array2<f64>,
    g: G,
) -> (f64, f64, f64)
where
    G: Fn(f64) -> f64 + Sync,
{
    let n = w.len();
    let n2 = (n * n) as f64;
    let dc = d_cross.as_slice().expect("standard layout");
    let do_ = d_obs.as_slice().expect("standard layout");
    let dt = d_tgt.as_slice().expect("standard layout");
    let cross = tree_sum_by(n * n, |idx| w[idx / n] * g(dc[idx])) / n2;
    let obs = tree_sum_by(n * n, |idx| w[idx / n] * w[idx % n] * g(do_[idx])) / n2;
    let tgt = tree_sum_by(n * n, |idx| g(dt[idx])) / n2;
    (cross, obs, tgt)
}

fn validate_pair(
    w: &WeightVector,
    z_obs: ArrayView2<'_, f64>,
    z_tgt: ArrayView2<'_, f64>,
) -> Result<()> {
    if z_obs.shape() != z_tgt.shape() {
        return Err(Error::DimensionMismatch(format!(
            "observed sample is {:?}, target sample is {:?}",
            z_obs.shape(),
            z_tgt.shape()
        )));
    }
    if z_obs.nrows() == 0 {
        return Err(Error::DimensionMismatch(
            "samples must have at least one row".into(),
        ));
    }
    check_finite("Z_obs", z_obs)?;
    check_finite("Z_tgt", z_tgt)?;
    w.check_feasible(z_obs.nrows())
}

/// Weighted energy distance between the weighted observed sample and the
/// target sample (same shape, paired by the V-statistic over all index
/// pairs).
pub fn weighted_energy_distance(
    w: &WeightVector,
    z_obs: ArrayView2<'_, f64>,
    z_tgt: ArrayView2<'_, f64>,
) -> Result<EnergyReport> {
    validate_pair(w, z_obs, z_tgt)?;
    let d_obs = pairwise_distances(z_obs, z_obs)?;
    let d_cross = pairwise_distances(z_obs, z_tgt)?;
    let d_tgt = pairwise_distances(z_tgt, z_tgt)?;
    Ok(energy_report_from_matrices(w, &d_obs, &d_cross, &d_tgt))
}

fn energy_report_from_matrices(
    w: &WeightVector,
    d_obs: &Array2<f64>,
    d_cross: &Array2<f64>,
    d_tgt: &Array2<f64>,
) -> EnergyReport {
    let (cross, obs, tgt) = vstat_terms(w.weights(), d_obs, d_cross, d_tgt, |d| d);
    EnergyReport {
        value: 2.0 * cross - obs - tgt,
        cross_term: cross,
        obs_term: obs,
        target_term: tgt,
        metric: Metric::Energy,
        bandwidth: None,
    }
}

/// Squared Gaussian-kernel MMD between the weighted observed sample and the
/// target sample (biased V-statistic, all index pairs).
pub fn gaussian_mmd(
    w: &WeightVector,
    z_obs: ArrayView2<'_, f64>,
    z_tgt: ArrayView2<'_, f64>,
    bandwidth: f64,
) -> Result<EnergyReport> {
    validate_pair(w, z_obs, z_tgt)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    let d_obs = pairwise_distances(z_obs, z_obs)?;
    let d_cross = pairwise_distances(z_obs, z_tgt)?;
    let d_tgt = pairwise_distances(z_tgt, z_tgt)?;
    Ok(mmd_report_from_matrices(
        w, &d_obs, &d_cross, &d_tgt, bandwidth,
    ))
}

fn mmd_report_from_matrices(
    w: &WeightVector,
    d_obs: &Array2<f64>,
    d_cross: &Array2<f64>,
    d_tgt: &Array2<f64>,
    bandwidth: f64,
) -> EnergyReport {
    let neg_half_inv = -0.5 / (bandwidth * bandwidth);
    let kernel = move |d: f64| (neg_half_inv * d * d).exp();
    let (cross, obs, tgt) = vstat_terms(w.weights(), d_obs, d_cross, d_tgt, kernel);
    EnergyReport {
        value: obs + tgt - 2.0 * cross,
        cross_term: cross,
        obs_term: obs,
        target_term: tgt,
        metric: Metric::GaussianMmd,
        bandwidth: Some(bandwidth),
    }
}

/// Components of the energy-distance quadratic program:
/// `objective(w) = (2 b'w - w'D w - c) / n^2` with
/// `b_i = sum_k d(Zobs_i, Ztgt_k)`, `D_ik = d(Zobs_i, Zobs_k)`, and
/// `c = sum_{i,k} d(Ztgt_i, Ztgt_k)`.
#[derive(Debug, Clone)]
pub struct QpComponents {
    /// `b`: per-row sums of observed-to-target distances.
    pub cross_row_sums: Vec<f64>,
    /// `D`: observed-to-observed distance matrix.
    pub obs_distances: Array2<f64>,
    /// `c`: total of the target-to-target distance matrix.
    pub target_total: f64,
}

impl QpComponents {
    pub fn n(&self) -> usize {
        self.cross_row_sums.len()
    }

    /// Mean entry of `D`, the scale used for the default ridge penalty.
    pub fn mean_obs_distance(&self) -> f64 {
        let n = self.n();
        tree_sum(self.obs_distances.as_slice().expect("standard layout")) / (n * n) as f64
    }

    /// `D w` (row-parallel matrix-vector product).
    pub(crate) fn obs_matvec(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n();
        let d = self.obs_distances.as_slice().expect("standard layout");
        crate::exec::map_slots(n, 32, |i| {
            let row = &d[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (rv, wv) in row.iter().zip(w.iter()) {
                acc += rv * wv;
            }
            acc
        })
    }

    /// Unpenalized objective `(2 b'w - w'D w - c) / n^2`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.penalized_objective(w, 0.0)
    }

    /// Objective with the ridge term `(lambda / n^2) * sum w_i^2`.
    pub fn penalized_objective(&self, w: &[f64], lambda: f64) -> f64 {
        let n = self.n();
        debug_assert_eq!(w.len(), n);
        let n2 = (n * n) as f64;
        let dw = self.obs_matvec(w);
        let w_d_w = tree_sum_by(n, |i| w[i] * dw[i]);
        let b_w = tree_sum_by(n, |i| self.cross_row_sums[i] * w[i]);
        let ridge = lambda * tree_sum_by(n, |i| w[i] * w[i]);
        (2.0 * b_w - w_d_w + ridge - self.target_total) / n2
    }
}

/// Build the QP components from raw observed/target matrices.
pub fn qp_components(
    z_obs: ArrayView2<'_, f64>,
    z_tgt: ArrayView2<'_, f64>,
) -> Result<QpComponents> {
    let w = WeightVector::uniform(z_obs.nrows().max(1));
    validate_pair(&w, z_obs, z_tgt)?;
    let d_obs = pairwise_distances(z_obs, z_obs)?;
    let d_cross = pairwise_distances(z_obs, z_tgt)?;
    let d_tgt = pairwise_distances(z_tgt, z_tgt)?;
    Ok(qp_from_matrices(&d_obs, &d_cross, &d_tgt))
}

fn qp_from_matrices(
    d_obs: &Array2<f64>,
    d_cross: &Array2<f64>,
    d_tgt: &Array2<f64>,
) -> QpComponents {
    let n = d_obs.nrows();
    let dc = d_cross.as_slice().expect("standard layout");
    let cross_row_sums = (0..n)
        .map(|i| tree_sum(&dc[i * n..(i + 1) * n]))
        .collect();
    QpComponents {
        cross_row_sums,
        obs_distances: d_obs.clone(),
        target_total: tree_sum(d_tgt.as_slice().expect("standard layout")),
    }
}

/// Distance matrices for one (data, policy) pair, computed once and shared
/// by the solver, the diagnostics, and weight comparisons.
#[derive(Debug, Clone)]
pub struct BalanceCache {
    z_obs: Array2<f64>,
    z_tgt: Array2<f64>,
    d_obs: Array2<f64>,
    d_cross: Array2<f64>,
    d_tgt: Array2<f64>,
    standardized: bool,
}

impl BalanceCache {
    /// Assemble the observed matrix `[X | A]` and target matrix
    /// `[X | q(X, A)]`, optionally standardizing every column by the
    /// observed sample's mean and standard deviation (the policy itself is
    /// always evaluated on the raw treatment).
    pub fn new(data: &Dataset, policy: &PolicySpec, standardize: bool) -> Result<Self> {
        data.validate()?;
        let scaler = if standardize {
            Standardizer::fit(data)
        } else {
            Standardizer::identity(data.p())
        };
        let (n, p) = (data.n(), data.p());
        let mut z_obs = Array2::<f64>::zeros((n, p + 1));
        let mut z_tgt = Array2::<f64>::zeros((n, p + 1));
        for i in 0..n {
            for j in 0..p {
                let v = scaler.transform_x_entry(j, data.x()[[i, j]]);
                z_obs[[i, j]] = v;
                z_tgt[[i, j]] = v;
            }
            let a = data.a()[i];
            z_obs[[i, p]] = scaler.transform_a(a);
            z_tgt[[i, p]] = scaler.transform_a(policy.apply(a));
        }
        let mut cache = Self::from_matrices(z_obs, z_tgt)?;
        cache.standardized = standardize;
        Ok(cache)
    }

    /// Build a cache directly from observed/target matrices.
    pub fn from_matrices(z_obs: Array2<f64>, z_tgt: Array2<f64>) -> Result<Self> {
        let w = WeightVector::uniform(z_obs.nrows().max(1));
        validate_pair(&w, z_obs.view(), z_tgt.view())?;
        let d_obs = pairwise_distances(z_obs.view(), z_obs.view())?;
        let d_cross = pairwise_distances(z_obs.view(), z_tgt.view())?;
        let d_tgt = pairwise_distances(z_tgt.view(), z_tgt.view())?;
        Ok(Self {
            z_obs,
            z_tgt,
            d_obs,
            d_cross,
            d_tgt,
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.z_obs.nrows()
    }

    pub fn standardized(&self) -> bool {
        self.standardized
    }

    pub fn z_obs(&self) -> ArrayView2<'_, f64> {
        self.z_obs.view()
    }

    pub fn z_tgt(&self) -> ArrayView2<'_, f64> {
        self.z_tgt.view()
    }

    /// Target-to-target distance matrix (feasibility bootstrap reuses it).
    pub fn target_distances(&self) -> &Array2<f64> {
        &self.d_tgt
    }

    /// Observed-to-observed distance matrix.
    pub fn obs_distances(&self) -> &Array2<f64> {
        &self.d_obs
    }

    /// Energy report for a candidate weighting, reusing cached distances.
    pub fn energy_report(&self, w: &WeightVector) -> Result<EnergyReport> {
        w.check_feasible(self.n())?;
        Ok(energy_report_from_matrices(
            w,
            &self.d_obs,
            &self.d_cross,
            &self.d_tgt,
        ))
    }

    /// Gaussian-MMD report for a candidate weighting.
    pub fn mmd_report(&self, w: &WeightVector, bandwidth: f64) -> Result<EnergyReport> {
        w.check_feasible(self.n())?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(mmd_report_from_matrices(
            w,
            &self.d_obs,
            &self.d_cross,
            &self.d_tgt,
            bandwidth,
        ))
    }

    /// Median-heuristic bandwidth over the pooled sample (observed rows and
    /// target rows together): the median of all `C(2n, 2)` pairwise
    /// distances.
    pub fn pooled_median_bandwidth(&self) -> Result<f64> {
        let n = self.n();
        let mut pooled = Vec::with_capacity(n * (2 * n - 1));
        for i in 0..n {
            for j in i + 1..n {
                pooled.push(self.d_obs[[i, j]]);
            }
        }
        pooled.extend(self.d_cross.iter().copied());
        for i in 0..n {
            for j in i + 1..n {
                pooled.push(self.d_tgt[[i, j]]);
            }
        }
        median_of(&mut pooled)
    }

    /// QP components over the cached distances.
    pub fn qp_components(&self) -> QpComponents {
        qp_from_matrices(&self.d_obs, &self.d_cross, &self.d_tgt)
    }

    /// Gaussian Gram matrices `(K_obs, K_cross, K_tgt)` for the MMD solver
    /// path.
    pub(crate) fn gram_matrices(&self, bandwidth: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let neg_half_inv = -0.5 / (bandwidth * bandwidth);
        let k = |d: &Array2<f64>| d.mapv(|v| (neg_half_inv * v * v).exp());
        (k(&self.d_obs), k(&self.d_cross), k(&self.d_tgt))
    }
}
