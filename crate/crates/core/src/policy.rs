//! Modified treatment policies: piecewise-affine maps `a -> q(a; tau)` that
//! reassign each observed treatment, following the intervention framework of
//! Haneuse & Rotnitzky (2013).
//!
//! A policy is a list of pieces partitioning the real line. Each piece is a
//! half-open interval `[lower, upper)` (the first piece starts at `-inf`, the
//! last ends at `+inf`) carrying an affine rule
//!
//! ```text
//! q(a) = slope * a + intercept_per_tau * tau + intercept_const
//! ```
//!
//! so one policy family can be swept over intervention scales `tau`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// One affine piece on `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyPiece {
    pub lower: f64,
    pub upper: f64,
    pub slope: f64,
    pub intercept_per_tau: f64,
    pub intercept_const: f64,
}

impl PolicyPiece {
    fn evaluate(&self, a: f64, tau: f64) -> f64 {
        self.slope * a + self.intercept_per_tau * tau + self.intercept_const
    }
}

/// A validated piecewise-affine policy with its intervention scale `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pieces: Vec<PolicyPiece>,
    tau: f64,
}

impl PolicySpec {
    /// Validate and build a policy. The pieces must partition the real line
    /// with no gaps or overlaps: sorted, first lower `-inf`, last upper
    /// `+inf`, each upper equal to the next lower, and every slope nonzero.
    pub fn new(pieces: Vec<PolicyPiece>, tau: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidPolicy("no pieces".into()));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidPolicy(format!(
                "tau must be finite and nonnegative, got {tau}"
            )));
        }
        if pieces[0].lower != f64::NEG_INFINITY {
            return Err(Error::InvalidPolicy(format!(
                "first piece must start at -inf, starts at {}",
                pieces[0].lower
            )));
        }
        if pieces[pieces.len() - 1].upper != f64::INFINITY {
            return Err(Error::InvalidPolicy(format!(
                "last piece must end at +inf, ends at {}",
                pieces[pieces.len() - 1].upper
            )));
        }
        for (k, piece) in pieces.iter().enumerate() {
            if !(piece.lower < piece.upper) {
                return Err(Error::InvalidPolicy(format!(
                    "piece {k} has empty interval [{}, {})",
                    piece.lower, piece.upper
                )));
            }
            if piece.slope == 0.0 || !piece.slope.is_finite() {
                return Err(Error::InvalidPolicy(format!(
                    "piece {k} has slope {}; slopes must be finite and nonzero",
                    piece.slope
                )));
            }
            if !piece.intercept_per_tau.is_finite() || !piece.intercept_const.is_finite() {
                return Err(Error::InvalidPolicy(format!(
                    "piece {k} has a non-finite intercept"
                )));
            }
            if k + 1 < pieces.len() && pieces[k + 1].lower != piece.upper {
                return Err(Error::InvalidPolicy(format!(
                    "pieces {k} and {} do not meet: [{}, {}) then [{}, {})",
                    k + 1,
                    piece.lower,
                    piece.upper,
                    pieces[k + 1].lower,
                    pieces[k + 1].upper
                )));
            }
        }
        Ok(Self { pieces, tau })
    }

    /// The identity policy `q(a) = a` (tau plays no role).
    pub fn identity() -> Self {
        Self {
            pieces: vec![PolicyPiece {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                slope: 1.0,
                intercept_per_tau: 0.0,
                intercept_const: 0.0,
            }],
            tau: 0.0,
        }
    }

    /// Tiered dose-reduction policy with breakpoints at 0, 5, 10, 20, 40:
    /// doses below 5 are kept, and higher tiers are reduced by 5t, 10t, 15t,
    /// and 30t respectively. Used as the running example throughout the
    /// crate's tests and docs.
    pub fn tiered_reduction(tau: f64) -> Result<Self> {
        let piece = |lower: f64, upper: f64, per_tau: f64| PolicyPiece {
            lower,
            upper,
            slope: 1.0,
            intercept_per_tau: per_tau,
            intercept_const: 0.0,
        };
        Self::new(
            vec![
                piece(f64::NEG_INFINITY, 0.0, 0.0),
                piece(0.0, 5.0, 0.0),
                piece(5.0, 10.0, -5.0),
                piece(10.0, 20.0, -10.0),
                piece(20.0, 40.0, -15.0),
                piece(40.0, f64::INFINITY, -30.0),
            ],
            tau,
        )
    }

    /// A uniform additive shift `q(a) = a + tau`.
    pub fn constant_shift(tau: f64) -> Result<Self> {
        Self::new(
            vec![PolicyPiece {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                slope: 1.0,
                intercept_per_tau: 1.0,
                intercept_const: 0.0,
            }],
            tau,
        )
    }

    /// Same pieces, different intervention scale.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.pieces.clone(), tau)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pieces(&self) -> &[PolicyPiece] {
        &self.pieces
    }

    /// Index of the piece whose half-open interval contains `a`.
    pub fn piece_index(&self, a: f64) -> usize {
        debug_assert!(a.is_finite());
        // Pieces are sorted by lower bound; a belongs to the last piece whose
        // lower bound does not exceed it (intervals are left-closed).
        self.pieces.partition_point(|p| p.lower <= a) - 1
    }

    /// Apply the policy to one treatment value.
    pub fn apply(&self, a: f64) -> f64 {
        self.pieces[self.piece_index(a)].evaluate(a, self.tau)
    }
}

/// The target sample `(X_i, q(X_i, A_i))` as an `n x (p+1)` matrix: covariate
/// columns unchanged, final column the policy-shifted treatment.
pub fn shifted_sample(data: &Dataset, policy: &PolicySpec) -> Array2<f64> {
    let (n, p) = (data.n(), data.p());
    let mut out = Array2::<f64>::zeros((n, p + 1));
    for i in 0..n {
        for j in 0..p {
            out[[i, j]] = data.x()[[i, j]];
        }
        out[[i, p]] = policy.apply(data.a()[i]);
    }
    out
}

// --- JSON wire format -------------------------------------------------------
//
// {"tau": 0.29, "pieces": [{"lower": "-inf", "upper": 0.0, "slope": 1.0,
//  "intercept_per_tau": 0.0, "intercept_const": 0.0}, ...]}
//
// JSON has no literal for infinities, so unbounded endpoints are written as
// the strings "-inf" / "+inf".

#[derive(Serialize, Deserialize)]
struct PolicyJson {
    tau: f64,
    pieces: Vec<PieceJson>,
}

#[derive(Serialize, Deserialize)]
struct PieceJson {
    lower: BoundJson,
    upper: BoundJson,
    slope: f64,
    intercept_per_tau: f64,
    intercept_const: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundJson {
    Num(f64),
    Tag(String),
}

impl BoundJson {
    fn to_f64(&self, what: &str) -> Result<f64> {
        match self {
            BoundJson::Num(v) => Ok(*v),
            BoundJson::Tag(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "+inf" | "inf" => Ok(f64::INFINITY),
                other => Err(Error::InvalidPolicy(format!(
                    "{what} bound '{other}' is not a number, \"-inf\", or \"+inf\""
                ))),
            },
        }
    }

    fn from_f64(v: f64) -> Self {
        if v == f64::NEG_INFINITY {
            BoundJson::Tag("-inf".into())
        } else if v == f64::INFINITY {
            BoundJson::Tag("+inf".into())
        } else {
            BoundJson::Num(v)
        }
    }
}

impl PolicySpec {
    /// Parse a policy from its JSON representation.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: PolicyJson = serde_json::from_str(text)?;
        let mut pieces = Vec::with_capacity(raw.pieces.len());
        for pj in &raw.pieces {
            pieces.push(PolicyPiece {
                lower: pj.lower.to_f64("lower")?,
                upper: pj.upper.to_f64("upper")?,
                slope: pj.slope,
                intercept_per_tau: pj.intercept_per_tau,
                intercept_const: pj.intercept_const,
            });
        }
        Self::new(pieces, raw.tau)
    }

    /// Parse a policy from a JSON file on disk.
    pub fn from_json_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serialize to the JSON wire format.
    pub fn to_json_string(&self) -> Result<String> {
        let raw = PolicyJson {
            tau: self.tau,
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceJson {
                    lower: BoundJson::from_f64(p.lower),
                    upper: BoundJson::from_f64(p.upper),
                    slope: p.slope,
                    intercept_per_tau: p.intercept_per_tau,
                    intercept_const: p.intercept_const,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }
}
