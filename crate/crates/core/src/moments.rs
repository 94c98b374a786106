//! Raw moment sequences of [0,1]-valued random variables.
//!
//! `MomentVector` stores γ_1..γ_d; γ_0 = 1 is implicit everywhere. The
//! validator checks the necessary conditions for a Hausdorff moment sequence
//! (range, monotonicity, log-convexity) and optionally the full iterated
//! difference conditions.

use std::fmt;

use crate::dd::DoubleDouble;
use crate::error::{Error, Result};

/// Absolute slack used by the moment validator.
pub const MOMENT_TOLERANCE: f64 = 1e-12;

/// Raw moments γ_1..γ_d, d ≥ 2.
///
/// Moments computed analytically may also carry a low-order residual so that
/// `values[r] + residual[r]` is accurate to double-double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    values: Vec<f64>,
    residual: Option<Vec<f64>>,
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientMoments {
                needed: 2,
                available: values.len(),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "moment gamma_{} is not finite ({v})",
                i + 1
            )));
        }
        Ok(Self {
            values,
            residual: None,
        })
    }

    /// Moments known to double-double precision.
    pub fn from_extended(values: Vec<DoubleDouble>) -> Result<Self> {
        let mut m = Self::new(values.iter().map(|v| v.hi).collect())?;
        m.residual = Some(values.iter().map(|v| v.lo).collect());
        Ok(m)
    }

    /// Whether a double-double residual is attached.
    pub fn is_extended(&self) -> bool {
        self.residual.is_some()
    }

    /// γ_r in double-double (γ_0 = 1).
    pub fn gamma_extended(&self, r: usize) -> DoubleDouble {
        if r == 0 {
            return DoubleDouble::ONE;
        }
        let lo = self.residual.as_ref().map_or(0.0, |res| res[r - 1]);
        DoubleDouble::new(self.values[r - 1], lo)
    }

    /// Number of stored moments d.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// γ_r for r = 0..=d, with γ_0 = 1.
    pub fn gamma(&self, r: usize) -> f64 {
        if r == 0 {
            1.0
        } else {
            self.values[r - 1]
        }
    }

    /// γ_1..γ_d.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// γ_0..γ_n as a vector (with the leading 1).
    pub fn with_zeroth(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|r| self.gamma(r)).collect()
    }

    pub fn mean(&self) -> f64 {
        self.values[0]
    }

    pub fn variance(&self) -> f64 {
        self.values[1] - self.values[0] * self.values[0]
    }

    /// The first `n` moments.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InsufficientMoments {
                needed: n,
                available: self.len(),
            });
        }
        Ok(Self {
            values: self.values[..n].to_vec(),
            residual: self.residual.as_ref().map(|res| res[..n].to_vec()),
        })
    }
}

/// One failed necessary condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// γ_r outside [0,1].
    Range { r: usize, value: f64 },
    /// γ_{r+1} > γ_r.
    Monotonicity { r: usize, excess: f64 },
    /// γ_r² > γ_{r-1}·γ_{r+1}.
    LogConvexity { r: usize, excess: f64 },
    /// (−1)^k Δ^k γ_j < 0 (strict mode only).
    Hausdorff { order: usize, index: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Range { r, value } => write!(f, "range at r={r} (value {value:e})"),
            Violation::Monotonicity { r, excess } => {
                write!(f, "monotonicity at r={r} (excess {excess:e})")
            }
            Violation::LogConvexity { r, excess } => {
                write!(f, "log-convexity at r={r} (excess {excess:e})")
            }
            Violation::Hausdorff { order, index, value } => {
                write!(f, "hausdorff difference of order {order} at j={index} ({value:e})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub tolerance: f64,
    /// Also check every iterated difference (numerically fragile beyond d≈15).
    pub strict: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            tolerance: MOMENT_TOLERANCE,
            strict: false,
        }
    }
}

/// Necessary conditions only; see [`validate_moments_with`] for strict mode.
pub fn validate_moments(m: &[f64]) -> Result<ValidationReport> {
    validate_moments_with(m, ValidationOptions::default())
}

pub fn validate_moments_with(m: &[f64], opts: ValidationOptions) -> Result<ValidationReport> {
    if m.len() < 2 {
        return Err(Error::InsufficientMoments {
            needed: 2,
            available: m.len(),
        });
    }
    if let Some((i, v)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "moment gamma_{} is not finite ({v})",
            i + 1
        )));
    }
    let tol = opts.tolerance;
    let g = |r: usize| if r == 0 { 1.0 } else { m[r - 1] };
    let d = m.len();
    let mut violations = Vec::new();

    for r in 1..=d {
        let v = g(r);
        if v < -tol || v > 1.0 + tol {
            violations.push(Violation::Range { r, value: v });
        }
    }
    for r in 1..d {
        let excess = g(r + 1) - g(r);
        if excess > tol {
            violations.push(Violation::Monotonicity { r, excess });
        }
    }
    for r in 1..d {
        let excess = g(r) * g(r) - g(r - 1) * g(r + 1);
        if excess > tol {
            violations.push(Violation::LogConvexity { r, excess });
        }
    }
    if opts.strict {
        // row k holds Δ^k γ_j for j = 0..=d-k
        let mut row: Vec<f64> = (0..=d).map(g).collect();
        for order in 1..=d {
            row = row.windows(2).map(|w| w[0] - w[1]).collect();
            for (index, &value) in row.iter().enumerate() {
                if value < -tol {
                    violations.push(Violation::Hausdorff {
                        order,
                        index,
                        value,
                    });
                }
            }
        }
    }
    Ok(ValidationReport { violations })
}

/// x(x+1)…(x+r−1), the rising factorial; 1 for r = 0.
pub fn rising_factorial(x: f64, r: u32) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!(
            "rising factorial needs x > 0, got {x}"
        )));
    }
    Ok((0..r).fold(1.0, |acc, k| acc * (x + k as f64)))
}

/// (a)_r / (a+b)_r, i.e. E[S^r] for S ~ Beta(a, b), as a running product of ratios.
pub fn beta_raw_moment(a: f64, b: f64, r: u32) -> f64 {
    (0..r).fold(1.0, |acc, k| {
        let k = k as f64;
        acc * (a + k) / (a + b + k)
    })
}

fn beta_raw_moment_extended(a: f64, b: f64, r: u32) -> DoubleDouble {
    let a = DoubleDouble::from(a);
    let ab = a + DoubleDouble::from(b);
    (0..r).fold(DoubleDouble::ONE, |acc, k| {
        let k = DoubleDouble::from(k as f64);
        acc * (a + k) / (ab + k)
    })
}

/// Raw moments of Σ_k w_k·Beta(a_k, b_k), carried in double-double.
pub fn beta_mixture_moments(params: &[(f64, f64)], weights: &[f64], d: usize) -> Result<MomentVector> {
    if params.is_empty() || params.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} components but {} weights",
            params.len(),
            weights.len()
        )));
    }
    if let Some(&(a, b)) = params.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
        return Err(Error::Domain(format!(
            "beta shapes must be positive, got ({a}, {b})"
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidInput("mixture weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    if d < 2 {
        return Err(Error::InsufficientMoments {
            needed: 2,
            available: d,
        });
    }
    let values = (1..=d as u32)
        .map(|r| {
            params
                .iter()
                .zip(weights)
                .fold(DoubleDouble::ZERO, |acc, (&(a, b), &w)| {
                    acc + DoubleDouble::from(w) * beta_raw_moment_extended(a, b, r)
                })
        })
        .collect();
    MomentVector::from_extended(values)
}
