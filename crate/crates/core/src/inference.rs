//! Standard errors and confidence intervals for the MTP estimators: the
//! multiplier bootstrap on the estimated influence function, and the
//! nonparametric bootstrap that re-runs the whole pipeline per resample.
//!
//! Multiplier bootstrap: with influence values `phi_i` summing to zero,
//! draw i.i.d. `xi_i ~ Exp(1)` multipliers and form
//!
//! ```text
//! q_r = n^{-1/2} * sum_i xi_i * phi_i,        r = 1..R
//! ```
//!
//! The scale estimate is `IQR({q_r}) / 1.349`, where 1.349 is the
//! interquartile range of the standard normal; the Wald interval is
//! `mu_hat +- z * n^{-1/2} * scale`. Because the multipliers have mean one
//! (not zero), the zero-sum of `phi` is what centers the draws; the IQR is
//! additionally immune to any residual common location.
//!
//! Replications split a counter-based RNG by replication index, so results
//! are bitwise identical for any thread count.

use serde::{Deserialize, Serialize};

use crate::comparators::{gps_density_ratio_weights, uniform_weights};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{
    augmented_estimate, fit_default_model, weighted_estimate, OutcomeModel,
};
use crate::exec::{map_slots, tree_sum_by};
use crate::policy::PolicySpec;
use crate::rng::{exp1, replication_rng, resample_indices};
use crate::solver::{solve_ebw, SolverOptions};
use crate::stats::{iqr, normal_quantile, sample_sd};
use crate::weights::WeightVector;

/// Interquartile range of the standard normal, `z_0.75 - z_0.25`.
pub const NORMAL_IQR: f64 = 1.349;

/// Bootstrap settings shared by both schemes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replications (>= 2).
    pub r: usize,
    pub seed: u64,
    /// Confidence level in (0, 1).
    pub level: f64,
}

impl BootstrapConfig {
    pub fn new(r: usize, seed: u64) -> Self {
        Self { r, seed, level: 0.95 }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::InvalidBootstrap(format!(
                "need at least 2 replications, got {}",
                self.r
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidLevel(self.level));
        }
        Ok(())
    }
}

/// Plug-in influence values
/// `phi_i = w_i (Y_i - mu(X_i, A_i)) + mu(X_i, q(X_i, A_i)) - mu_hat`.
///
/// `mu_hat` must be the augmented estimate from the same weights, model,
/// and policy; the values then average to zero by construction, which is
/// verified.
pub fn influence_values<M: OutcomeModel + ?Sized>(
    w: &WeightVector,
    data: &Dataset,
    policy: &PolicySpec,
    model: &M,
    mu_hat: f64,
) -> Result<Vec<f64>> {
    data.validate()?;
    let n = data.n();
    w.check_feasible(n)?;
    if !mu_hat.is_finite() {
        return Err(Error::NonFinite { field: "mu_hat", location: "scalar".into() });
    }
    let mu_obs = model.predict(data.x(), data.a())?;
    let shifted = data.a().mapv(|a| policy.apply(a));
    let mu_shift = model.predict(data.x(), shifted.view())?;
    let ws = w.weights();
    let y = data.y();
    let phi: Vec<f64> = (0..n)
        .map(|i| ws[i] * (y[i] - mu_obs[i]) + mu_shift[i] - mu_hat)
        .collect();
    let mean = tree_sum_by(n, |i| phi[i]) / n as f64;
    let tol = 1e-8 * (1.0 + mu_hat.abs());
    if mean.abs() > tol {
        return Err(Error::InconsistentInfluence(format!(
            "influence values average to {mean:.3e}; mu_hat does not match the supplied \
             weights/model/policy"
        )));
    }
    Ok(phi)
}

/// The R multiplier-bootstrap draws `q_r = n^{-1/2} sum_i xi_i phi_i`.
pub fn multiplier_bootstrap_draws(phi: &[f64], cfg: &BootstrapConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = phi.len();
    if n == 0 {
        return Err(Error::InvalidBootstrap("empty influence vector".into()));
    }
    for (i, v) in phi.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { field: "phi", location: i.to_string() });
        }
    }
    let root_n = (n as f64).sqrt();
    Ok(map_slots(cfg.r, 8, |rep| {
        let mut rng = replication_rng(cfg.seed, rep as u64);
        let xi: Vec<f64> = (0..n).map(|_| exp1(&mut rng)).collect();
        tree_sum_by(n, |i| xi[i] * phi[i]) / root_n
    }))
}

/// Scale estimate from a set of draws: `IQR / 1.349`.
pub fn se_from_multiplier_draws(draws: &[f64]) -> f64 {
    iqr(draws) / NORMAL_IQR
}

/// Multiplier-bootstrap estimate of `Sigma^{1/2}` (the scale of
/// `sqrt(n) * (mu_hat - mu)`); divide by `sqrt(n)` for the SE of `mu_hat`
/// itself, which [`wald_ci`] does internally.
pub fn multiplier_bootstrap_se(phi: &[f64], cfg: &BootstrapConfig) -> Result<f64> {
    let draws = multiplier_bootstrap_draws(phi, cfg)?;
    Ok(se_from_multiplier_draws(&draws))
}

/// Wald interval `mu_hat +- z_{(1+level)/2} * n^{-1/2} * sigma_half`.
pub fn wald_ci(mu_hat: f64, sigma_half: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if !(sigma_half >= 0.0 && sigma_half.is_finite()) {
        return Err(Error::InvalidBootstrap(format!(
            "sigma_half must be finite and nonnegative, got {sigma_half}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidBootstrap("n must be positive".into()));
    }
    let z = normal_quantile((1.0 + level) / 2.0)?;
    let half_width = z * sigma_half / (n as f64).sqrt();
    Ok((mu_hat - half_width, mu_hat + half_width))
}

/// How to build the weights inside a bootstrap replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum WeightMethod {
    EnergyBalancing { options: SolverOptions },
    Uniform,
    GpsRatio,
}

/// Which point estimator a pipeline run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Weighted,
    Augmented,
}

/// End-to-end pipeline description, rerun per nonparametric replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub weights: WeightMethod,
    pub estimator: EstimatorKind,
}

/// One pipeline run: weights, (optional) outcome model, point estimate.
#[derive(Debug, Clone)]
pub struct PipelineEstimate {
    pub value: f64,
    /// False when the weight solver returned its best iterate without
    /// meeting the convergence test.
    pub converged: bool,
}

/// Run the configured pipeline once on the given data.
pub fn run_pipeline(
    data: &Dataset,
    policy: &PolicySpec,
    pipeline: &PipelineConfig,
) -> Result<PipelineEstimate> {
    let w = match &pipeline.weights {
        WeightMethod::EnergyBalancing { options } => solve_ebw(data, policy, options)?,
        WeightMethod::Uniform => uniform_weights(data.n()),
        WeightMethod::GpsRatio => gps_density_ratio_weights(data, policy)?,
    };
    let converged = w.converged;
    let value = match pipeline.estimator {
        EstimatorKind::Weighted => weighted_estimate(&w, data.y())?,
        EstimatorKind::Augmented => {
            let model = fit_default_model(data)?;
            augmented_estimate(&w, data, policy, &model)?
        }
    };
    Ok(PipelineEstimate { value, converged })
}

/// Nonparametric bootstrap output.
#[derive(Debug, Clone, Serialize)]
pub struct NonparamBootstrap {
    /// Sample standard deviation of the successful replicate estimates —
    /// already on the scale of `mu_hat` (no `sqrt(n)` factor).
    pub se: f64,
    /// Replicate estimates, in replication order (failed replications are
    /// omitted).
    pub estimates: Vec<f64>,
    /// Replications that errored or did not converge.
    pub failures: usize,
    pub total: usize,
}

/// Nonparametric bootstrap: resample rows with replacement, re-run the
/// whole pipeline (weights, model, estimate), and report the standard
/// deviation of the replicate estimates. Aborts if more than 10% of
/// replications fail or fail to converge.
pub fn nonparametric_bootstrap(
    data: &Dataset,
    policy: &PolicySpec,
    pipeline: &PipelineConfig,
    cfg: &BootstrapConfig,
) -> Result<NonparamBootstrap> {
    cfg.validate()?;
    data.validate()?;
    let n = data.n();
    let runs: Vec<Result<PipelineEstimate>> = map_slots(cfg.r, 1, |rep| {
        let idx = resample_indices(n, cfg.seed, rep as u64);
        let sub = data.subsample(&idx)?;
        run_pipeline(&sub, policy, pipeline)
    });
    let mut estimates = Vec::with_capacity(cfg.r);
    let mut failures = 0usize;
    for run in runs {
        match run {
            Ok(pe) if pe.converged => estimates.push(pe.value),
            _ => failures += 1,
        }
    }
    if failures * 10 > cfg.r {
        return Err(Error::BootstrapUnstable { failed: failures, total: cfg.r });
    }
    let se = sample_sd(&estimates);
    Ok(NonparamBootstrap { se, estimates, failures, total: cfg.r })
}

/// Convenience wrapper returning only the SE.
pub fn nonparametric_bootstrap_se(
    data: &Dataset,
    policy: &PolicySpec,
    pipeline: &PipelineConfig,
    cfg: &BootstrapConfig,
) -> Result<f64> {
    Ok(nonparametric_bootstrap(data, policy, pipeline, cfg)?.se)
}
