//! Feasibility diagnostics for MTP scale selection, and energy-distance
//! ranking of competing weight sets.
//!
//! The feasibility tool asks whether any weighting can plausibly balance
//! the observed sample against the shifted target. Under the null that the
//! target is just a resampling of itself, the energy distance between a
//! with-replacement resample of the shifted sample and the original shifted
//! sample gives a reference distribution:
//!
//! ```text
//! E^r = E(F^{rq}_n (uniform weights), F^q_n),     r = 1..R
//! ```
//!
//! Upper quantiles of {E^r} are the thresholds; a post-solve balanced
//! distance above them flags an infeasible scale. `tau_scan` repeats
//! solve + thresholds across a tau grid and reports, per level, the largest
//! tau whose whole prefix stays below threshold.
//!
//! Resampled distances are gathered from the cached target-distance matrix
//! (rows of a resample are rows of the original, so no distance is
//! recomputed); the balanced distance is always the energy metric so
//! thresholds and distances stay comparable regardless of the solver
//! metric.

use std::io::Write as IoWrite;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::energy::BalanceCache;
use crate::error::{Error, Result};
use crate::exec::{map_slots, tree_sum_by};
use crate::policy::PolicySpec;
use crate::rng::{derive_seed, resample_indices};
use crate::solver::{solve_from_cache, SolverOptions};
use crate::stats::quantile_sorted;
use crate::weights::WeightVector;

/// Default quantile levels for feasibility thresholds.
pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.975];

/// Default number of threshold replications.
pub const DEFAULT_THRESHOLD_R: usize = 1000;

const MIN_THRESHOLD_R: usize = 50;

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidOptions("need at least one quantile level".into()));
    }
    for &l in levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidLevel(l));
        }
    }
    Ok(())
}

/// Energy distance between the resample (rows `idx` of the shifted sample,
/// uniform weights) and the original shifted sample, via gather-sums on the
/// cached target-distance matrix. `tgt_term` is the `(1/n^2)` total of that
/// matrix, shared across replications.
fn resampled_shift_distance(dt: &Array2<f64>, idx: &[usize], tgt_term: f64) -> f64 {
    let n = idx.len();
    let n2 = (n * n) as f64;
    let flat = dt.as_slice().expect("standard layout");
    let cross = tree_sum_by(n * n, |t| flat[idx[t / n] * n + t % n]) / n2;
    let obs = tree_sum_by(n * n, |t| flat[idx[t / n] * n + idx[t % n]]) / n2;
    2.0 * cross - obs - tgt_term
}

/// Bootstrap-null thresholds from a prebuilt cache.
pub fn feasibility_thresholds_from_cache(
    cache: &BalanceCache,
    r: usize,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    if r < MIN_THRESHOLD_R {
        return Err(Error::InvalidBootstrap(format!(
            "feasibility thresholds need at least {MIN_THRESHOLD_R} replications, got {r}"
        )));
    }
    validate_levels(levels)?;
    let n = cache.n();
    let dt = cache.target_distances();
    let tgt_term = tree_sum_by(n * n, |t| dt.as_slice().expect("standard layout")[t])
        / (n * n) as f64;
    let mut values: Vec<f64> = map_slots(r, 1, |rep| {
        let idx = resample_indices(n, seed, rep as u64);
        resampled_shift_distance(dt, &idx, tgt_term)
    });
    values.sort_unstable_by(f64::total_cmp);
    Ok(levels.iter().map(|&l| quantile_sorted(&values, l)).collect())
}

/// Bootstrap-null thresholds for (data, policy): resample the shifted
/// sample with replacement, measure its energy distance to the original
/// shifted sample, and return upper quantiles at the given levels.
/// Distances use standardized coordinates, matching the solver default.
pub fn feasibility_thresholds(
    data: &Dataset,
    policy: &PolicySpec,
    r: usize,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let cache = BalanceCache::new(data, policy, true)?;
    feasibility_thresholds_from_cache(&cache, r, levels, seed)
}

/// Scan output: per-tau balanced distances and thresholds, plus the largest
/// "safe" tau per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauScanResult {
    pub tau_grid: Vec<f64>,
    /// Post-solve weighted energy distance per tau; `None` where the solve
    /// failed outright.
    pub balanced_distance: Vec<Option<f64>>,
    /// `thresholds[t][l]` for tau index `t`, level index `l`.
    pub thresholds: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
    /// Per level: the largest tau such that the balanced distance stays
    /// below the threshold at every tau' <= tau (prefix rule); `None` when
    /// the first grid point already crosses.
    pub max_safe_tau: Vec<Option<f64>>,
    /// Per tau: solver failure or non-convergence note.
    pub notes: Vec<Option<String>>,
}

/// Prefix rule: walk the grid in order; the safe region ends at the first
/// tau whose distance is missing or at/above the level's threshold.
fn max_safe_tau(
    tau_grid: &[f64],
    balanced: &[Option<f64>],
    thresholds: &[Vec<f64>],
    level_idx: usize,
) -> Option<f64> {
    let mut safe = None;
    for (t, &tau) in tau_grid.iter().enumerate() {
        match balanced[t] {
            Some(d) if d <= thresholds[t][level_idx] => safe = Some(tau),
            _ => break,
        }
    }
    safe
}

impl TauScanResult {
    /// Tidy CSV: `tau, balanced_distance, thr_<level>...` with levels named
    /// by percent (e.g. 0.975 -> `thr_975`). Failed solves leave the
    /// distance field empty.
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("tau,balanced_distance");
        for &l in &self.levels {
            header.push_str(&format!(",thr_{}", level_label(l)));
        }
        writeln!(out, "{header}")?;
        for t in 0..self.tau_grid.len() {
            let mut row = format!("{}", self.tau_grid[t]);
            row.push(',');
            if let Some(d) = self.balanced_distance[t] {
                row.push_str(&format!("{d}"));
            }
            for l in 0..self.levels.len() {
                row.push_str(&format!(",{}", self.thresholds[t][l]));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn level_label(level: f64) -> String {
    format!("{}", level * 100.0).replace('.', "")
}

/// Solve, measure, and threshold across a tau grid (ascending, nonempty).
/// Solver failures are recorded per tau and the scan continues; each tau
/// draws its bootstrap indices from a seed derived from (seed, tau index).
pub fn tau_scan(
    data: &Dataset,
    base_policy: &PolicySpec,
    tau_grid: &[f64],
    opts: &SolverOptions,
    r: usize,
    levels: &[f64],
    seed: u64,
) -> Result<TauScanResult> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidOptions("tau grid must be nonempty".into()));
    }
    for pair in tau_grid.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidOptions(format!(
                "tau grid must be strictly ascending, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    opts.validate()?;
    validate_levels(levels)?;
    data.validate()?;

    let mut balanced = Vec::with_capacity(tau_grid.len());
    let mut thresholds = Vec::with_capacity(tau_grid.len());
    let mut notes = Vec::with_capacity(tau_grid.len());
    for (t, &tau) in tau_grid.iter().enumerate() {
        let policy = base_policy.with_tau(tau)?;
        let cache = BalanceCache::new(data, &policy, opts.standardize)?;
        let sub_seed = derive_seed(seed, t as u64);
        thresholds.push(feasibility_thresholds_from_cache(&cache, r, levels, sub_seed)?);
        match solve_from_cache(&cache, opts) {
            Ok(w) => {
                balanced.push(Some(cache.energy_report(&w)?.value));
                notes.push(if w.converged {
                    None
                } else {
                    Some(format!(
                        "solver stopped after {} iterations without convergence",
                        w.iterations
                    ))
                });
            }
            Err(e) => {
                balanced.push(None);
                notes.push(Some(format!("solver failed: {e}")));
            }
        }
    }
    let max_safe: Vec<Option<f64>> = (0..levels.len())
        .map(|l| max_safe_tau(tau_grid, &balanced, &thresholds, l))
        .collect();
    Ok(TauScanResult {
        tau_grid: tau_grid.to_vec(),
        balanced_distance: balanced,
        thresholds,
        levels: levels.to_vec(),
        max_safe_tau: max_safe,
        notes,
    })
}

/// One entry of a weight-set ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub label: String,
    /// Weighted energy distance to the shifted target.
    pub distance: f64,
    /// Tie-breaker: sum of squared deviations from uniform weights.
    pub sum_sq_dev: f64,
}

/// Rank candidate weight sets by weighted energy distance (ascending);
/// ties break by smaller deviation from uniform, then label order.
pub fn compare_weights(
    data: &Dataset,
    policy: &PolicySpec,
    candidates: &[(String, WeightVector)],
) -> Result<Vec<RankedCandidate>> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    let cache = BalanceCache::new(data, policy, true)?;
    let n = cache.n();
    let mut ranked = Vec::with_capacity(candidates.len());
    for (label, w) in candidates {
        w.check_feasible(n).map_err(|e| Error::InfeasibleCandidate {
            label: label.clone(),
            reason: e.to_string(),
        })?;
        ranked.push(RankedCandidate {
            label: label.clone(),
            distance: cache.energy_report(w)?.value,
            sum_sq_dev: w.sum_sq_dev(),
        });
    }
    ranked.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.sum_sq_dev.total_cmp(&b.sum_sq_dev))
            .then(a.label.cmp(&b.label))
    });
    Ok(ranked)
}
