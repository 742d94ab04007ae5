//! Desk-scale data-generating processes and Monte-Carlo ground truth.
//!
//! The DGP follows a fixed structural recipe: covariate columns alternate
//! Uniform(0,1) and Bernoulli(0.5); the treatment mean is a sparse cubic
//! `c(X)` of the first four covariates (Gaussian noise around it, or a
//! Poisson draw with log-link for count treatments); the outcome couples a
//! quadratic dose curve to a cubic covariate signal,
//!
//! ```text
//! A = c(X) + e,                     e ~ N(0,1)   (continuous)
//! A ~ Poisson(exp(c_pois(X)))                    (discrete)
//! Y = g(A) h(X) + delta(X) 1{high} + eps,  eps ~ N(0,1)
//! g(a) = 1 + 0.05 (a-12) + 0.01 (a-12)^2
//! ```
//!
//! Only the first four covariates carry signal, so the outcome scale is
//! stable in `p`. All coefficients are fixed constants chosen to match that
//! structural description; see the README note on the simulation design.
//!
//! Generation is chunked: chunk `c` draws from its own RNG stream, so
//! results are bitwise reproducible for any thread count. `mc_truth`
//! re-simulates and averages the noiseless outcome at the policy-shifted
//! treatment, reporting a Monte-Carlo standard error alongside the value.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use ndarray::{Array1, Array2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{map_slots, tree_sum_by};
use crate::policy::{PolicyPiece, PolicySpec};
use crate::rng::replication_rng;
use crate::stats::sample_sd;

/// Rows generated per RNG stream.
const CHUNK: usize = 1024;

/// Outcome-surface complexity: `High` adds covariate-interaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Moderate,
    High,
}

/// Continuous (Gaussian-noise) or discrete (Poisson count) treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentKind {
    Continuous,
    Discrete,
}

/// Full specification of one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DGPSpec {
    pub n: usize,
    pub p: usize,
    pub complexity: Complexity,
    pub treatment_kind: TreatmentKind,
    pub seed: u64,
}

/// Monte-Carlo estimate of the mean potential outcome under a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McTruth {
    pub value: f64,
    /// Monte-Carlo standard error: sd of the noiseless outcomes / sqrt(N).
    pub mcse: f64,
    pub n_draws: usize,
}

/// Indices of the four signal covariates (wrapping when `p < 4`).
fn signal_columns(p: usize) -> [usize; 4] {
    [0, 1, 2 % p, 3 % p]
}

fn signal_values(row: &[f64], p: usize) -> [f64; 4] {
    let idx = signal_columns(p);
    [row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]]]
}

/// Cubic treatment mean for the continuous DGP.
fn treatment_mean(z: [f64; 4]) -> f64 {
    10.0 + 3.0 * z[0] + 2.0 * z[1] + 1.5 * z[2] - 2.0 * z[0] * z[2] + 4.0 * z[0].powi(3)
        - 1.0 * z[1] * z[3]
}

/// Log-rate for the Poisson (count) treatment.
fn poisson_log_rate(z: [f64; 4]) -> f64 {
    2.3 + 0.3 * z[0] + 0.2 * z[1] + 0.15 * z[2].powi(3) - 0.2 * z[0] * z[2]
}

/// Quadratic dose curve centered at a = 12.
fn dose_curve(a: f64) -> f64 {
    let d = a - 12.0;
    1.0 + 0.05 * d + 0.01 * d * d
}

/// Cubic covariate signal.
fn covariate_signal(z: [f64; 4]) -> f64 {
    0.5 + z[0] + 0.5 * z[1] - 0.8 * z[0] * z[0] * z[2] + 1.2 * z[0] * z[1] * z[3]
        + 0.7 * z[2].powi(3)
}

/// Extra interaction terms switched on by `Complexity::High`.
fn interaction_terms(z: [f64; 4]) -> f64 {
    1.5 * z[0] * z[1] - 1.0 * z[1] * z[2] * z[3] + 0.9 * z[0] * z[2]
}

/// True (noiseless) outcome at covariates `z` and treatment `a`.
fn noiseless_outcome(complexity: Complexity, z: [f64; 4], a: f64) -> f64 {
    let base = dose_curve(a) * covariate_signal(z);
    match complexity {
        Complexity::Moderate => base,
        Complexity::High => base + interaction_terms(z),
    }
}

/// One chunk of simulated rows: covariates (row-major), treatments, noisy
/// outcomes.
struct ChunkRows {
    x: Vec<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
}

/// Draw `count` rows from chunk stream `chunk_idx`. Per row the draw order
/// is fixed: the `p` covariates, the treatment noise, the outcome noise.
fn sample_chunk(spec: &DGPSpec, chunk_idx: u64, count: usize) -> ChunkRows {
    let mut rng = replication_rng(spec.seed, chunk_idx);
    let p = spec.p;
    let mut x = Vec::with_capacity(count * p);
    let mut a = Vec::with_capacity(count);
    let mut y = Vec::with_capacity(count);
    for _ in 0..count {
        let row_start = x.len();
        for j in 0..p {
            let v = if j % 2 == 0 {
                rng.gen::<f64>()
            } else {
                f64::from(u8::from(rng.gen_bool(0.5)))
            };
            x.push(v);
        }
        let z = signal_values(&x[row_start..], p);
        let treatment = match spec.treatment_kind {
            TreatmentKind::Continuous => {
                let noise: f64 = rng.sample(StandardNormal);
                treatment_mean(z) + noise
            }
            TreatmentKind::Discrete => {
                let rate = poisson_log_rate(z).exp();
                Poisson::new(rate).expect("rate is positive and finite").sample(&mut rng)
            }
        };
        let eps: f64 = rng.sample(StandardNormal);
        a.push(treatment);
        y.push(noiseless_outcome(spec.complexity, z, treatment) + eps);
    }
    ChunkRows { x, a, y }
}

fn chunk_count(rows: usize) -> usize {
    rows.div_ceil(CHUNK)
}

fn rows_in_chunk(total: usize, chunk_idx: usize) -> usize {
    let start = chunk_idx * CHUNK;
    CHUNK.min(total - start)
}

impl DGPSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidSpec(format!(
                "need at least 10 rows, got {}",
                self.n
            )));
        }
        if self.p < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 covariates, got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// Simulate the dataset. Chunks of rows draw from independent RNG
    /// streams, so the output is bitwise identical for any thread count.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let n = self.n;
        let chunks = map_slots(chunk_count(n), 1, |c| {
            sample_chunk(self, c as u64, rows_in_chunk(n, c))
        });
        let mut x = Vec::with_capacity(n * self.p);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for chunk in chunks {
            x.extend_from_slice(&chunk.x);
            a.extend_from_slice(&chunk.a);
            y.extend_from_slice(&chunk.y);
        }
        let x = Array2::from_shape_vec((n, self.p), x)
            .map_err(|e| Error::InvalidSpec(format!("shape error: {e}")))?;
        Dataset::new(x, Array1::from_vec(a), Array1::from_vec(y))
    }
}

/// Minimum Monte-Carlo sample size for `mc_truth`.
pub const MIN_TRUTH_DRAWS: usize = 10_000;

/// Monte-Carlo ground truth: draw `n_draws` fresh units, apply the policy
/// to each treatment, and average the noiseless outcome at the shifted
/// dose. Deterministic given `spec.seed` (the spec's own `n` is ignored).
pub fn mc_truth(spec: &DGPSpec, policy: &PolicySpec, n_draws: usize) -> Result<McTruth> {
    if n_draws < MIN_TRUTH_DRAWS {
        return Err(Error::InvalidSpec(format!(
            "mc_truth needs at least {MIN_TRUTH_DRAWS} draws, got {n_draws}"
        )));
    }
    let mut draw_spec = *spec;
    draw_spec.n = n_draws;
    draw_spec.validate()?;
    let p = spec.p;
    let chunk_values: Vec<Vec<f64>> = map_slots(chunk_count(n_draws), 1, |c| {
        let rows = sample_chunk(&draw_spec, c as u64, rows_in_chunk(n_draws, c));
        (0..rows.a.len())
            .map(|i| {
                let z = signal_values(&rows.x[i * p..(i + 1) * p], p);
                noiseless_outcome(spec.complexity, z, policy.apply(rows.a[i]))
            })
            .collect()
    });
    let values: Vec<f64> = chunk_values.into_iter().flatten().collect();
    let value = tree_sum_by(values.len(), |i| values[i]) / values.len() as f64;
    let mcse = sample_sd(&values) / (values.len() as f64).sqrt();
    Ok(McTruth {
        value,
        mcse,
        n_draws,
    })
}

/// Example MTP for the simulated doses: a two-piece additive shift that
/// raises small doses more aggressively than large ones,
///
/// ```text
/// q(a; tau) = a + 2 tau   if a < 12
///             a + tau     if a >= 12.
/// ```
pub fn example_mtp(tau: f64) -> Result<PolicySpec> {
    PolicySpec::new(
        vec![
            PolicyPiece {
                lower: f64::NEG_INFINITY,
                upper: 12.0,
                slope: 1.0,
                intercept_per_tau: 2.0,
                intercept_const: 0.0,
            },
            PolicyPiece {
                lower: 12.0,
                upper: f64::INFINITY,
                slope: 1.0,
                intercept_per_tau: 1.0,
                intercept_const: 0.0,
            },
        ],
        tau,
    )
}
