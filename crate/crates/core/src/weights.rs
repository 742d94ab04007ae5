//! Sample weight vectors: nonnegative, summing to `n`, with solver metadata.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Nonnegative sample weights summing to the sample size, plus metadata from
/// whatever produced them. Weights from closed-form constructions (uniform,
/// density ratios) carry `objective: None`; solver output records the final
/// penalized objective value.
#[derive(Debug, Clone)]
pub struct WeightVector {
    weights: Vec<f64>,
    /// Final objective value when produced by the solver.
    pub objective: Option<f64>,
    /// Whether the producing procedure converged (`true` for closed forms).
    pub converged: bool,
    /// Iterations used by the producing procedure (0 for closed forms).
    pub iterations: usize,
}

/// Relative tolerance on the sum-to-n constraint.
pub const SUM_TOLERANCE: f64 = 1e-8;

impl WeightVector {
    /// All-ones weights of length `n`.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            objective: None,
            converged: true,
            iterations: 0,
        }
    }

    /// Validate and wrap an explicit weight vector.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let wv = Self {
            weights,
            objective: None,
            converged: true,
            iterations: 0,
        };
        wv.check_feasible(wv.len())?;
        Ok(wv)
    }

    /// Wrap solver output (already projected onto the feasible set).
    pub(crate) fn from_solver(
        weights: Vec<f64>,
        objective: f64,
        converged: bool,
        iterations: usize,
    ) -> Self {
        Self {
            weights,
            objective: Some(objective),
            converged,
            iterations,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Verify feasibility for a sample of size `n`: matching length, finite
    /// nonnegative entries, and `sum(w) = n` within `1e-8 * n`.
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        if self.weights.len() != n {
            return Err(Error::InfeasibleWeights(format!(
                "{} weights for {} rows",
                self.weights.len(),
                n
            )));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InfeasibleWeights(format!(
                    "weight {i} is not finite"
                )));
            }
            if *w < 0.0 {
                return Err(Error::InfeasibleWeights(format!(
                    "weight {i} is negative ({w})"
                )));
            }
        }
        let sum = crate::exec::tree_sum(&self.weights);
        let target = n as f64;
        if (sum - target).abs() > SUM_TOLERANCE * target {
            return Err(Error::InfeasibleWeights(format!(
                "weights sum to {sum}, expected {target}"
            )));
        }
        Ok(())
    }

    /// `sum((w_i - 1)^2)`: distance from uniform, used as a ranking
    /// tie-breaker.
    pub fn sum_sq_dev(&self) -> f64 {
        crate::exec::tree_sum_by(self.weights.len(), |i| {
            let d = self.weights[i] - 1.0;
            d * d
        })
    }

    /// Write one weight per row under a `weight` header, aligned with the
    /// input row order.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "weight")?;
        for w in &self.weights {
            writeln!(writer, "{w}")?;
        }
        Ok(())
    }

    /// Read a single-column weight CSV (optional `weight` header).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut weights = Vec::new();
        for (line_no, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            match text.parse::<f64>() {
                Ok(v) => weights.push(v),
                Err(_) if line_no == 0 && text == "weight" => continue,
                Err(_) => {
                    return Err(Error::InfeasibleWeights(format!(
                        "line {}: cannot parse '{}' as a weight",
                        line_no + 1,
                        text
                    )))
                }
            }
        }
        Self::from_weights(weights)
    }

    /// Read a weight CSV from disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}
