//! Density reconstruction on [0,1] from raw moments.
//!
//! A density f on [0,1] is expanded in the Jacobi polynomials G_i that are
//! orthonormal under the weight w_{a,b}(s) = s^{a-1}(1-s)^{b-1}:
//!
//! ```text
//! f_N(s) = w_{a,b}(s) Σ_{i≤N} λ_i G_i(s),   λ_i = Σ_{r≤i} G_{i,r} γ_r
//! ```
//!
//! Internally the basis is stored orthonormal under the Beta(a,b) *density*
//! (w/B(a,b)); this keeps coefficients finite when B(a,b) under- or overflows.
//! The two conventions differ by the constant factor B(a,b)^{-1/2}.
//!
//! Coefficients come from the hypergeometric form of the shifted Jacobi
//! polynomials and are carried in double-double; values are evaluated with
//! the three-term recurrence. The map from raw moments to λ_i cancels
//! catastrophically for concentrated weights, so each λ_i is paired with a
//! rounding-noise bound and orders whose bound exceeds a tolerance are dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::ln_beta;

use crate::dd::DoubleDouble;
use crate::error::{Error, Result};
use crate::moments::MomentVector;

/// Hard cap on the truncation level.
pub const MAX_ORDER: usize = 30;
pub const DEFAULT_GRID_SIZE: usize = 200;
pub const DEFAULT_N_SIM: usize = 1000;

const ENVELOPE_GRID: usize = 2000;
const ENVELOPE_FACTOR: f64 = 1.1;
const MIN_ACCEPTANCE: f64 = 1e-3;
/// Envelope points must carry at least this fraction of the peak of π.
const ENVELOPE_SUPPORT: f64 = 1e-6;
/// Proposal attempts in `momentify`: matched, then concentration ×1/2, ×1/4, ×1/8.
const PROPOSAL_WIDENINGS: usize = 4;

/// Beta shapes matching mean γ1 and variance γ2 − γ1²; (1,1) when the
/// variance is not below γ1(1−γ1).
pub fn select_weight_params(gamma1: f64, gamma2: f64) -> Result<(f64, f64)> {
    if !(gamma1 > 0.0 && gamma1 < 1.0) {
        return Err(Error::Domain(format!(
            "weight matching needs 0 < gamma1 < 1, got {gamma1}"
        )));
    }
    let v = gamma2 - gamma1 * gamma1;
    if !(v > 0.0) {
        return Err(Error::DegenerateVariance(v));
    }
    let spread = gamma1 * (1.0 - gamma1);
    if v >= spread {
        return Ok((1.0, 1.0));
    }
    let k = spread / v - 1.0;
    Ok((gamma1 * k, (1.0 - gamma1) * k))
}

fn pochhammer_dd(x: f64, from: usize, to: usize) -> DoubleDouble {
    let x = DoubleDouble::from(x);
    (from..to).fold(DoubleDouble::ONE, |acc, j| acc * (x + DoubleDouble::from(j as f64)))
}

/// Squared norm of the hypergeometric-normalized shifted Jacobi polynomial
/// of degree n under the Beta(a,b) density, in double-double.
fn norm_sq_dd(a: f64, b: f64, n: usize) -> DoubleDouble {
    if n == 0 {
        return DoubleDouble::ONE;
    }
    let (ad, bd) = (DoubleDouble::from(a), DoubleDouble::from(b));
    let ab = ad + bd;
    // (a)_n (b)_n / ((2n+a+b−1) (a+b)_{n−1} n!), accumulated as ratios
    let mut h = ad * bd;
    for j in 1..n {
        let jd = DoubleDouble::from(j as f64);
        h = h * (ad + jd) * (bd + jd)
            / ((jd + DoubleDouble::ONE) * (ab + jd - DoubleDouble::ONE));
    }
    h / (ab + DoubleDouble::from(2.0 * n as f64 - 1.0))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64).round()
}

/// Orthonormal Jacobi basis on [0,1] for the weight s^{a-1}(1-s)^{b-1}.
#[derive(Debug, Clone)]
pub struct JacobiBasis {
    a: f64,
    b: f64,
    order: usize,
    ln_beta: f64,
    /// coeffs[i][r]: coefficient of s^r in the density-normalized G̃_i.
    coeffs: Vec<Vec<DoubleDouble>>,
    // recurrence factors for the density-normalized polynomials
    rec: Vec<(f64, f64, f64)>,
}

/// Orthonormal basis of degree ≤ `order` for w_{a,b}.
pub fn build_basis(a: f64, b: f64, order: usize) -> Result<JacobiBasis> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "weight parameters must be positive, got ({a}, {b})"
        )));
    }
    if order > MAX_ORDER {
        return Err(Error::TruncationCap(order));
    }
    if order < 1 {
        return Err(Error::InvalidInput("truncation level must be at least 1".into()));
    }
    let norms: Vec<DoubleDouble> = (0..=order).map(|n| norm_sq_dd(a, b, n)).collect();
    let ln_norm: Vec<f64> = norms.iter().map(|h| h.to_f64().ln()).collect();

    let mut coeffs = Vec::with_capacity(order + 1);
    for n in 0..=order {
        let inv_norm = norms[n].sqrt().recip();
        let mut fact = DoubleDouble::ONE;
        for j in 1..=n {
            fact = fact * DoubleDouble::from(j as f64);
        }
        let lead = a + b + n as f64 - 1.0;
        let row: Vec<DoubleDouble> = (0..=n)
            .map(|k| {
                // (−1)^{n+k} C(n,k) (a)_n/(a)_k (n+a+b−1)_k / n!
                let mag = DoubleDouble::from(binomial(n, k))
                    * pochhammer_dd(a, k, n)
                    * pochhammer_dd(lead, 0, k)
                    / fact
                    * inv_norm;
                if (n + k) % 2 == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        coeffs.push(row);
    }

    // three-term recurrence in x = 1 − 2s for P_n^{(α,β)}, α = a−1, β = b−1,
    // rescaled to G̃_n = (−1)^n P_n / sqrt(h_n)
    let (al, be) = (a - 1.0, b - 1.0);
    let mut rec = vec![(0.0, 0.0, 0.0); order + 1];
    for (n, slot) in rec.iter_mut().enumerate().skip(2) {
        let nf = n as f64;
        let s = 2.0 * nf + al + be;
        let a1 = 2.0 * nf * (nf + al + be) * (s - 2.0);
        let a2 = (s - 1.0) * (al * al - be * be);
        let a3 = (s - 2.0) * (s - 1.0) * s;
        let a4 = 2.0 * (nf + al - 1.0) * (nf + be - 1.0) * s;
        let r1 = -(-0.5 * (ln_norm[n] - ln_norm[n - 1])).exp();
        let r2 = (-0.5 * (ln_norm[n] - ln_norm[n - 2])).exp();
        *slot = (a2 * r1 / a1, a3 * r1 / a1, a4 * r2 / a1);
    }
    Ok(JacobiBasis {
        a,
        b,
        order,
        ln_beta: ln_beta(a, b),
        coeffs,
        rec,
    })
}

impl JacobiBasis {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Truncation level N.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ln_beta(&self) -> f64 {
        self.ln_beta
    }

    /// G_{i,r} for the basis orthonormal under w_{a,b}. Overflows to ±inf when
    /// B(a,b) underflows; use [`Self::normalized_coeff`] there.
    pub fn coeff(&self, i: usize, r: usize) -> f64 {
        self.normalized_coeff(i, r) * (-0.5 * self.ln_beta).exp()
    }

    /// Coefficient of s^r in the basis orthonormal under the Beta(a,b) density.
    pub fn normalized_coeff(&self, i: usize, r: usize) -> f64 {
        self.coeffs[i].get(r).map_or(0.0, |c| c.to_f64())
    }

    pub(crate) fn normalized_coeff_dd(&self, i: usize, r: usize) -> DoubleDouble {
        self.coeffs[i][r]
    }

    /// w_{a,b}(s) = s^{a−1}(1−s)^{b−1}.
    pub fn weight(&self, s: f64) -> f64 {
        (self.ln_weight(s)).exp()
    }

    fn ln_weight(&self, s: f64) -> f64 {
        // exponents within rounding of zero would turn 0^ε into 0 at the endpoints
        let term = |e: f64, x: f64| if e.abs() <= 1e-12 { 0.0 } else { e * x.ln() };
        term(self.a - 1.0, s) + term(self.b - 1.0, 1.0 - s)
    }

    /// Beta(a,b) density, w_{a,b}(s)/B(a,b).
    pub fn weight_density(&self, s: f64) -> f64 {
        (self.ln_weight(s) - self.ln_beta).exp()
    }

    /// Writes G̃_0(s)..G̃_N(s) (density-normalized) into `out`.
    pub fn eval_normalized(&self, s: f64, out: &mut [f64]) {
        let x = 1.0 - 2.0 * s;
        out[0] = 1.0;
        if self.order == 0 {
            return;
        }
        let (al, be) = (self.a - 1.0, self.b - 1.0);
        let p1 = (al + 1.0) + (al + be + 2.0) * (x - 1.0) / 2.0;
        out[1] = -p1 / norm_sq_dd(self.a, self.b, 1).to_f64().sqrt();
        for n in 2..=self.order {
            let (c0, c1, c2) = self.rec[n];
            out[n] = (c0 + c1 * x) * out[n - 1] - c2 * out[n - 2];
        }
    }

    /// G_i(s) under the w_{a,b} normalization.
    pub fn eval(&self, i: usize, s: f64) -> f64 {
        let mut buf = vec![0.0; self.order + 1];
        self.eval_normalized(s, &mut buf);
        buf[i] * (-0.5 * self.ln_beta).exp()
    }
}

/// Rounding model for the moment → coefficient map.
#[derive(Debug, Clone, Copy)]
pub struct ExpansionOptions {
    /// Relative error assumed for f64 moments without an extended residual.
    pub moment_rel_error: f64,
    /// Highest admissible noise bound on a density-normalized λ̃_i.
    pub noise_tolerance: f64,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            moment_rel_error: 1e-12,
            noise_tolerance: 1e-2,
        }
    }
}

/// The truncated expansion f_N and its values on a grid.
#[derive(Debug, Clone)]
pub struct ApproxDensity {
    pub xgrid: Vec<f64>,
    pub values: Vec<f64>,
    pub basis: JacobiBasis,
    pub moments_used: MomentVector,
    /// λ̃_0..λ̃_N under the density normalization.
    normalized_lambdas: Vec<f64>,
    /// Rounding-noise bound on each λ̃_i.
    pub noise: Vec<f64>,
    /// Highest order kept in evaluations (≤ N).
    pub order_used: usize,
}

/// f_N on `xgrid` with the default rounding model.
pub fn approximate_density(m: &MomentVector, basis: &JacobiBasis, xgrid: &[f64]) -> Result<ApproxDensity> {
    approximate_density_with(m, basis, xgrid, ExpansionOptions::default())
}

pub fn approximate_density_with(
    m: &MomentVector,
    basis: &JacobiBasis,
    xgrid: &[f64],
    opts: ExpansionOptions,
) -> Result<ApproxDensity> {
    let n = basis.order();
    if m.len() < n {
        return Err(Error::InsufficientMoments {
            needed: n,
            available: m.len(),
        });
    }
    if let Some(x) = xgrid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidInput(format!("grid point {x} outside [0,1]")));
    }
    let eps = if m.is_extended() {
        1e-30
    } else {
        opts.moment_rel_error
    };
    let mut lambdas = Vec::with_capacity(n + 1);
    let mut noise = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut acc = DoubleDouble::ZERO;
        let mut scale = 0.0;
        for r in 0..=i {
            let c = basis.normalized_coeff_dd(i, r);
            let g = m.gamma_extended(r);
            acc += c * g;
            scale += c.hi.abs() * g.hi.abs();
        }
        lambdas.push(acc.to_f64());
        // r = 0 term is exact (γ_0 = 1)
        let exact0 = basis.normalized_coeff(i, 0).abs();
        noise.push(eps * (scale - exact0).max(0.0) + 1e-30 * scale);
    }
    let order_used = noise
        .iter()
        .position(|&e| e > opts.noise_tolerance)
        .map_or(n, |first_bad| first_bad - 1);
    let mut d = ApproxDensity {
        xgrid: xgrid.to_vec(),
        values: Vec::new(),
        basis: basis.clone(),
        moments_used: m.truncate(n.max(2).min(m.len()))?,
        normalized_lambdas: lambdas,
        noise,
        order_used,
    };
    d.values = evaluation_points(xgrid, basis.a(), basis.b())
        .into_iter()
        .map(|s| d.eval(s))
        .collect();
    Ok(d)
}

/// Grid points with singular endpoints pulled in by half a grid step.
fn evaluation_points(xgrid: &[f64], a: f64, b: f64) -> Vec<f64> {
    let len = xgrid.len();
    xgrid
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let singular = (x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0);
            if !singular {
                return x;
            }
            let neighbour = if j + 1 < len && x == 0.0 {
                xgrid[j + 1]
            } else if j > 0 && x == 1.0 {
                xgrid[j - 1]
            } else {
                0.5
            };
            x + 0.5 * (neighbour - x)
        })
        .collect()
}

impl ApproxDensity {
    /// λ_0..λ_N under the w_{a,b} normalization.
    pub fn lambdas(&self) -> Vec<f64> {
        let scale = (-0.5 * self.basis.ln_beta()).exp();
        self.normalized_lambdas.iter().map(|l| l * scale).collect()
    }

    /// λ̃_0..λ̃_N, orthonormal-under-the-Beta-density convention.
    pub fn normalized_lambdas(&self) -> &[f64] {
        &self.normalized_lambdas
    }

    /// Σ_i λ̃_i G̃_i(s): the ratio f_N(s) / Beta(a,b)-density(s).
    pub fn polynomial(&self, s: f64) -> f64 {
        let mut g = vec![0.0; self.basis.order() + 1];
        self.basis.eval_normalized(s, &mut g);
        self.normalized_lambdas[..=self.order_used]
            .iter()
            .zip(&g)
            .map(|(l, g)| l * g)
            .sum()
    }

    /// f_N(s).
    pub fn eval(&self, s: f64) -> f64 {
        let p = self.polynomial(s);
        if p == 0.0 {
            return 0.0;
        }
        self.basis.weight_density(s) * p
    }

    /// Grid point of the largest value.
    pub fn argmax(&self) -> f64 {
        let (j, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best });
        self.xgrid[j]
    }
}

/// max(f_N, 0) on the grid, with the share of |f_N| mass that was clipped.
#[derive(Debug, Clone)]
pub struct PositivePart {
    pub density: ApproxDensity,
    pub values: Vec<f64>,
    pub clipped_fraction: f64,
}

impl PositivePart {
    /// π(s) = max(f_N(s), 0) at any s.
    pub fn eval(&self, s: f64) -> f64 {
        self.density.eval(s).max(0.0)
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn positive_part(d: &ApproxDensity) -> Result<PositivePart> {
    if !d.values.iter().any(|&v| v > 0.0) {
        return Err(Error::EmptySupport);
    }
    let values: Vec<f64> = d.values.iter().map(|v| v.max(0.0)).collect();
    let neg: Vec<f64> = d.values.iter().map(|v| v.min(0.0)).collect();
    let abs: Vec<f64> = d.values.iter().map(|v| v.abs()).collect();
    let total = trapezoid(&d.xgrid, &abs);
    let clipped_fraction = if total > 0.0 {
        trapezoid(&d.xgrid, &neg).abs() / total
    } else {
        0.0
    };
    Ok(PositivePart {
        density: d.clone(),
        values,
        clipped_fraction,
    })
}

#[derive(Debug, Clone)]
pub struct RejectionSample {
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
    /// Envelope constant M with π ≤ M·Beta(a,b).
    pub envelope: f64,
}

/// Independent draws from π ∝ max(f_N, 0) with a Beta(a,b) proposal.
pub fn rejection_sample(pi: &PositivePart, a: f64, b: f64, n_sim: usize, seed: u64) -> Result<RejectionSample> {
    let basis = &pi.density.basis;
    let matched = a == basis.a() && b == basis.b();
    let ln_b_prop = ln_beta(a, b);
    let ratio = |s: f64| -> f64 {
        let p = pi.density.polynomial(s).max(0.0);
        if matched || p == 0.0 {
            return p;
        }
        let ln_prop = (a - 1.0) * s.ln() + (b - 1.0) * (1.0 - s).ln() - ln_b_prop;
        let ln_target = basis.ln_weight(s) - basis.ln_beta();
        p * (ln_target - ln_prop).exp()
    };

    // Envelope over the proposal's bulk, ignoring points where π itself is
    // negligible: expansions grow fast in the far tails, where the weight
    // already makes π vanish.
    let mean = a / (a + b);
    let sd = (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
    let lo = (mean - 10.0 * sd).max(0.0);
    let hi = (mean + 10.0 * sd).min(1.0);
    let step = (hi - lo) / ENVELOPE_GRID as f64;
    let points: Vec<(f64, f64)> = (0..ENVELOPE_GRID)
        .map(|k| {
            let s = lo + (k as f64 + 0.5) * step;
            let target = pi.density.polynomial(s).max(0.0) * (basis.ln_weight(s) - basis.ln_beta()).exp();
            (ratio(s), target)
        })
        .filter(|(r, t)| r.is_finite() && t.is_finite())
        .collect();
    let top = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let peak = points
        .iter()
        .filter(|p| p.1 >= ENVELOPE_SUPPORT * top)
        .map(|p| p.0)
        .fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::EmptySupport);
    }
    let envelope = ENVELOPE_FACTOR * peak;

    let proposal = Beta::new(a, b).map_err(|e| Error::Domain(format!("beta proposal: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_sim);
    let mut attempts: u64 = 0;
    while draws.len() < n_sim {
        attempts += 1;
        let s: f64 = proposal.sample(&mut rng);
        let u: f64 = rng.random();
        if u * envelope < ratio(s) {
            draws.push(s);
        }
        if attempts >= 10_000 && (draws.len() as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(Error::DegenerateEnvelope(draws.len() as f64 / attempts as f64));
        }
    }
    let acceptance_rate = if attempts == 0 {
        1.0 / ENVELOPE_FACTOR
    } else {
        n_sim as f64 / attempts as f64
    };
    Ok(RejectionSample {
        draws,
        acceptance_rate,
        envelope,
    })
}

/// `n` equispaced points from 0 to 1 inclusive.
pub fn equispaced_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|j| j as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct MomentifyOptions {
    /// Number of moments N to use; all available when `None`.
    pub n_moments: Option<usize>,
    pub n_sim: usize,
    /// Evaluation grid; 200 equispaced points on [0,1] when `None`.
    pub xgrid: Option<Vec<f64>>,
    pub seed: u64,
    pub expansion: ExpansionOptions,
}

impl Default for MomentifyOptions {
    fn default() -> Self {
        Self {
            n_moments: None,
            n_sim: DEFAULT_N_SIM,
            xgrid: None,
            seed: 0,
            expansion: ExpansionOptions::default(),
        }
    }
}

/// Density approximation plus a sample from its positive part.
#[derive(Debug, Clone)]
pub struct Momentify {
    pub xgrid: Vec<f64>,
    pub approx_density: Vec<f64>,
    pub psample: Vec<f64>,
    pub density: ApproxDensity,
    pub weight: (f64, f64),
    pub acceptance_rate: f64,
    pub clipped_fraction: f64,
}

/// Rejection sampling with the matched Beta(a,b) proposal; when that
/// envelope degenerates (heavy-tailed π), retries with Beta proposals of the
/// same mean and successively halved concentration.
fn sample_with_widening(pi: &PositivePart, a: f64, b: f64, n_sim: usize, seed: u64) -> Result<RejectionSample> {
    let mut last = None;
    for k in 0..PROPOSAL_WIDENINGS {
        let scale = 0.5f64.powi(k as i32);
        match rejection_sample(pi, a * scale, b * scale, n_sim, seed) {
            Err(Error::DegenerateEnvelope(rate)) => last = Some(rate),
            other => return other,
        }
    }
    Err(Error::DegenerateEnvelope(last.unwrap_or(0.0)))
}

/// weight matching → basis → expansion → positive part → rejection sampling.
pub fn momentify(moments: &MomentVector, opts: &MomentifyOptions) -> Result<Momentify> {
    let n = opts.n_moments.unwrap_or(moments.len());
    if n < 2 || moments.len() < 2 {
        return Err(Error::InsufficientMoments {
            needed: 2,
            available: n.min(moments.len()),
        });
    }
    if n > moments.len() {
        return Err(Error::InsufficientMoments {
            needed: n,
            available: moments.len(),
        });
    }
    let xgrid = opts
        .xgrid
        .clone()
        .unwrap_or_else(|| equispaced_grid(DEFAULT_GRID_SIZE));
    let (a, b) = select_weight_params(moments.gamma(1), moments.gamma(2))?;
    let basis = build_basis(a, b, n)?;
    let density = approximate_density_with(moments, &basis, &xgrid, opts.expansion)?;
    let pi = positive_part(&density)?;
    let sample = sample_with_widening(&pi, a, b, opts.n_sim, opts.seed)?;
    Ok(Momentify {
        xgrid,
        approx_density: density.values.clone(),
        psample: sample.draws,
        weight: (a, b),
        acceptance_rate: sample.acceptance_rate,
        clipped_fraction: pi.clipped_fraction,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::beta_mixture_moments;
    use crate::quadrature::{integrate, Tolerance};
    use crate::stats::{ks_one_sample, ks_two_sample, mean};
    use statrs::distribution::{Beta as BetaDist, Continuous, ContinuousCDF};

    fn beta_moments(a: f64, b: f64, d: usize) -> MomentVector {
        beta_mixture_moments(&[(a, b)], &[1.0], d).unwrap()
    }

    fn mixture(d: usize) -> MomentVector {
        beta_mixture_moments(&[(3.0, 5.0), (10.0, 3.0)], &[0.5, 0.5], d).unwrap()
    }

    fn mixture_pdf(s: f64) -> f64 {
        0.5 * BetaDist::new(3.0, 5.0).unwrap().pdf(s) + 0.5 * BetaDist::new(10.0, 3.0).unwrap().pdf(s)
    }

    /// Test-only Gram–Schmidt on monomials with exact Beta inner products,
    /// <s^p, s^q> = B(a+p+q, b)/B(a,b), in double-double.
    fn gram_schmidt(a: f64, b: f64, n: usize) -> Vec<Vec<DoubleDouble>> {
        let mom = |k: usize| {
            let (a, ab) = (DoubleDouble::from(a), DoubleDouble::from(a + b));
            (0..k).fold(DoubleDouble::ONE, |acc, j| {
                let j = DoubleDouble::from(j as f64);
                acc * (a + j) / (ab + j)
            })
        };
        let inner = |p: &[DoubleDouble], q: &[DoubleDouble]| {
            let mut acc = DoubleDouble::ZERO;
            for (i, pi) in p.iter().enumerate() {
                for (j, qj) in q.iter().enumerate() {
                    acc += *pi * *qj * mom(i + j);
                }
            }
            acc
        };
        let mut basis: Vec<Vec<DoubleDouble>> = Vec::new();
        for deg in 0..=n {
            let mut v = vec![DoubleDouble::ZERO; deg + 1];
            v[deg] = DoubleDouble::ONE;
            for prev in &basis {
                let proj = inner(&v, prev);
                for (k, c) in prev.iter().enumerate() {
                    v[k] = v[k] - proj * *c;
                }
            }
            let norm = inner(&v, &v).sqrt();
            for c in v.iter_mut() {
                *c = *c / norm;
            }
            basis.push(v);
        }
        basis
    }

    #[test]
    fn weight_selection_examples() {
        let (a, b) = select_weight_params(0.5, 1.0 / 3.0).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        let (a, b) = select_weight_params(3.0 / 8.0, 1.0 / 6.0).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && (b - 5.0).abs() < 1e-12);
        // v = 0.15 < 0.25: matched, not the fallback
        let (a, b) = select_weight_params(0.5, 0.4).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-12 && (b - 1.0 / 3.0).abs() < 1e-12);
        // v = γ1(1−γ1) exactly: fallback
        assert_eq!(select_weight_params(0.5, 0.5).unwrap(), (1.0, 1.0));
        assert!(matches!(
            select_weight_params(0.5, 0.25),
            Err(Error::DegenerateVariance(_))
        ));
        assert!(select_weight_params(0.0, 0.1).is_err());
    }

    #[test]
    fn legendre_case_by_hand() {
        let basis = build_basis(1.0, 1.0, 2).unwrap();
        let s3 = 3f64.sqrt();
        let s5 = 5f64.sqrt();
        assert!((basis.coeff(0, 0) - 1.0).abs() < 1e-15);
        assert!((basis.coeff(1, 0) + s3).abs() < 1e-14);
        assert!((basis.coeff(1, 1) - 2.0 * s3).abs() < 1e-14);
        assert!((basis.coeff(2, 0) - s5).abs() < 1e-14);
        assert!((basis.coeff(2, 1) + 6.0 * s5).abs() < 1e-14);
        assert!((basis.coeff(2, 2) - 6.0 * s5).abs() < 1e-14);
        for s in [0.0, 0.3, 0.9, 1.0] {
            assert!((basis.eval(2, s) - s5 * (6.0 * s * s - 6.0 * s + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_gram_schmidt() {
        for &(a, b, n) in &[(1.0, 1.0, 6), (2.5, 4.0, 8), (0.5, 0.7, 6), (10.0, 1.0, 10), (3.0, 5.0, 10)] {
            let basis = build_basis(a, b, n).unwrap();
            let gs = gram_schmidt(a, b, n);
            for i in 0..=n {
                for r in 0..=i {
                    let want = gs[i][r].to_f64();
                    let got = basis.normalized_coeff(i, r);
                    assert!(
                        (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                        "({a},{b}) G[{i}][{r}] = {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn recurrence_matches_monomial_form() {
        let basis = build_basis(2.5, 1.5, 7).unwrap();
        let mut g = vec![0.0; 8];
        for s in [0.05, 0.4, 0.77] {
            basis.eval_normalized(s, &mut g);
            for (i, gi) in g.iter().enumerate() {
                let mono: f64 = (0..=i).map(|r| basis.normalized_coeff(i, r) * s.powi(r as i32)).sum();
                assert!((gi - mono).abs() < 1e-9 * mono.abs().max(1.0), "i={i} s={s}");
            }
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        for &(a, b, n) in &[(1.0, 1.0, 10), (3.0, 5.0, 10), (0.6, 2.0, 8), (1.8, 1.4, 10), (40.0, 25.0, 10)] {
            let basis = build_basis(a, b, n).unwrap();
            let mut g = vec![0.0; n + 1];
            for i in 0..=n {
                for j in 0..=i {
                    let v = integrate(
                        |s| {
                            let mut g2 = vec![0.0; n + 1];
                            basis.eval_normalized(s, &mut g2);
                            basis.weight_density(s) * g2[i] * g2[j]
                        },
                        0.0,
                        1.0,
                        Tolerance::absolute(1e-11),
                    )
                    .unwrap();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-8, "({a},{b}) <{i},{j}> = {v}");
                }
            }
            basis.eval_normalized(0.5, &mut g);
            assert!((basis.coeff(0, 0) - (-0.5 * ln_beta(a, b)).exp()).abs() < 1e-12 * basis.coeff(0, 0));
            for i in 0..=n {
                assert!(basis.normalized_coeff(i, i) > 0.0);
            }
        }
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(build_basis(1.0, 1.0, 31), Err(Error::TruncationCap(31))));
        assert!(matches!(build_basis(0.0, 1.0, 3), Err(Error::Domain(_))));
        assert!(matches!(build_basis(1.0, -2.0, 3), Err(Error::Domain(_))));
        assert!(build_basis(1.0, 1.0, 30).is_ok());
    }

    #[test]
    fn uniform_moments_reconstruct_flat_density() {
        let m = beta_moments(1.0, 1.0, 10);
        let grid = equispaced_grid(200);
        for n in [1, 4, 10] {
            let basis = build_basis(1.0, 1.0, n).unwrap();
            let d = approximate_density(&m, &basis, &grid).unwrap();
            assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn beta_target_reconstructed_exactly() {
        let m = beta_moments(3.0, 5.0, 10);
        let basis = build_basis(3.0, 5.0, 10).unwrap();
        let grid: Vec<f64> = (0..=98).map(|j| 0.01 + j as f64 * 0.01).collect();
        let d = approximate_density(&m, &basis, &grid).unwrap();
        let truth = BetaDist::new(3.0, 5.0).unwrap();
        for (x, v) in grid.iter().zip(&d.values) {
            assert!((v - truth.pdf(*x)).abs() < 1e-8);
        }
        assert_eq!(d.order_used, 10);
    }

    #[test]
    fn mixture_at_ten_moments_is_close_in_sup_norm() {
        let m = mixture(10);
        let (a, b) = select_weight_params(m.gamma(1), m.gamma(2)).unwrap();
        let basis = build_basis(a, b, 10).unwrap();
        let grid: Vec<f64> = (0..=980).map(|j| 0.01 + j as f64 * 0.001).collect();
        let d = approximate_density(&m, &basis, &grid).unwrap();
        let sup = grid
            .iter()
            .zip(&d.values)
            .map(|(x, v)| (v - mixture_pdf(*x)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.1, "sup distance {sup}");
    }

    #[test]
    fn insufficient_moments_and_bad_grid() {
        let m = beta_moments(2.0, 2.0, 3);
        let basis = build_basis(2.0, 2.0, 5).unwrap();
        assert!(matches!(
            approximate_density(&m, &basis, &[0.5]),
            Err(Error::InsufficientMoments { needed: 5, available: 3 })
        ));
        let basis = build_basis(2.0, 2.0, 2).unwrap();
        assert!(approximate_density(&m, &basis, &[1.5]).is_err());
    }

    #[test]
    fn positive_part_examples() {
        let grid = equispaced_grid(200);
        let m = beta_moments(3.0, 5.0, 4);
        let d = approximate_density(&m, &build_basis(3.0, 5.0, 4).unwrap(), &grid).unwrap();
        let pi = positive_part(&d).unwrap();
        assert_eq!(pi.clipped_fraction, 0.0);
        assert_eq!(pi.values, d.values);

        // the four-moment mixture reconstruction dips below zero near 0
        let m = mixture(4);
        let (a, b) = select_weight_params(m.gamma(1), m.gamma(2)).unwrap();
        let d = approximate_density(&m, &build_basis(a, b, 4).unwrap(), &grid).unwrap();
        let negative: Vec<usize> = (0..grid.len()).filter(|&j| d.values[j] < 0.0).collect();
        assert!(!negative.is_empty());
        let pi = positive_part(&d).unwrap();
        assert!(negative.iter().all(|&j| pi.values[j] == 0.0));
        assert!(pi.clipped_fraction > 0.0 && pi.clipped_fraction < 0.5);

        let mut flat = approximate_density(&beta_moments(1.0, 1.0, 2), &build_basis(1.0, 1.0, 1).unwrap(), &grid).unwrap();
        flat.normalized_lambdas = vec![-1.0, 0.0];
        flat.values = vec![-1.0; grid.len()];
        assert!(matches!(positive_part(&flat), Err(Error::EmptySupport)));
    }

    #[test]
    fn mixture_dip_is_near_zero() {
        let m = mixture(4);
        let (a, b) = select_weight_params(m.gamma(1), m.gamma(2)).unwrap();
        let grid = equispaced_grid(200);
        let d = approximate_density(&m, &build_basis(a, b, 4).unwrap(), &grid).unwrap();
        let negative: Vec<f64> = grid.iter().zip(&d.values).filter(|(_, v)| **v < 0.0).map(|(x, _)| *x).collect();
        assert_eq!(negative.len(), 6);
        assert!(negative.iter().all(|x| *x < 0.05));
        // three moments are not enough to go negative
        let m3 = mixture(3);
        let d3 = approximate_density(&m3, &build_basis(a, b, 3).unwrap(), &grid).unwrap();
        assert!(d3.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn acceptance_rate_for_exact_proposal() {
        let m = beta_moments(2.0, 6.0, 2);
        let basis = build_basis(2.0, 6.0, 2).unwrap();
        let d = approximate_density(&m, &basis, &equispaced_grid(50)).unwrap();
        let pi = positive_part(&d).unwrap();
        let s = rejection_sample(&pi, 2.0, 6.0, 20_000, 5).unwrap();
        assert!((s.acceptance_rate - 1.0 / 1.1).abs() < 0.02, "{}", s.acceptance_rate);
    }

    #[test]
    fn beta_reconstruction_sample_matches_direct_draws() {
        let m = beta_moments(3.0, 5.0, 10);
        let basis = build_basis(3.0, 5.0, 10).unwrap();
        let d = approximate_density(&m, &basis, &equispaced_grid(200)).unwrap();
        let pi = positive_part(&d).unwrap();
        let s = rejection_sample(&pi, 3.0, 5.0, 10_000, 11).unwrap();
        let direct = Beta::new(3.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reference: Vec<f64> = (0..10_000).map(|_| direct.sample(&mut rng)).collect();
        assert!(ks_two_sample(&s.draws, &reference).p_value > 0.01);
    }

    #[test]
    fn mixture_sample_mean_matches_first_moment() {
        let m = mixture(10);
        let out = momentify(
            &m,
            &MomentifyOptions {
                n_sim: 10_000,
                seed: 21,
                ..Default::default()
            },
        )
        .unwrap();
        let se = (crate::stats::variance(&out.psample) / 10_000.0).sqrt();
        assert!((mean(&out.psample) - m.gamma(1)).abs() < 3.0 * se);
    }

    #[test]
    fn momentify_uniform() {
        let m = MomentVector::new(vec![0.5, 1.0 / 3.0]).unwrap();
        let out = momentify(&m, &MomentifyOptions::default()).unwrap();
        assert_eq!(out.xgrid.len(), 200);
        assert!(out.approx_density.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert_eq!(out.psample.len(), 1000);
        assert!(ks_one_sample(&out.psample, |x| x.clamp(0.0, 1.0)).p_value > 0.01);
    }

    #[test]
    fn momentify_rejects_too_many_requested_moments() {
        let m = MomentVector::new(vec![0.5, 1.0 / 3.0]).unwrap();
        let opts = MomentifyOptions {
            n_moments: Some(3),
            ..Default::default()
        };
        assert!(matches!(momentify(&m, &opts), Err(Error::InsufficientMoments { .. })));
    }

    #[test]
    fn seeds_are_deterministic() {
        let m = mixture(8);
        let opts = MomentifyOptions {
            seed: 99,
            ..Default::default()
        };
        let a = momentify(&m, &opts).unwrap();
        let b = momentify(&m, &opts).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.psample), bits(&b.psample));
    }

    #[test]
    fn singular_endpoints_are_shifted() {
        let m = beta_moments(0.5, 0.5, 4);
        let basis = build_basis(0.5, 0.5, 4).unwrap();
        let grid = equispaced_grid(11);
        let d = approximate_density(&m, &basis, &grid).unwrap();
        assert!(d.values.iter().all(|v| v.is_finite()));
        let arcsine = BetaDist::new(0.5, 0.5).unwrap();
        assert!((d.values[0] - arcsine.pdf(0.05)).abs() < 1e-8);
        assert!((d.values[10] - arcsine.pdf(0.95)).abs() < 1e-8);
        assert!(arcsine.cdf(0.5) > 0.0);
    }

    #[test]
    fn concentrated_weights_drop_noisy_orders() {
        // f64 moments of Beta(300, 300): high orders are pure rounding noise
        let m = MomentVector::new((1..=10).map(|r| crate::moments::beta_raw_moment(300.0, 300.0, r)).collect()).unwrap();
        let basis = build_basis(300.0, 300.0, 10).unwrap();
        let d = approximate_density(&m, &basis, &equispaced_grid(200)).unwrap();
        assert!(d.order_used < 10);
        assert!(d.order_used >= 2);
        let truth = BetaDist::new(300.0, 300.0).unwrap();
        for x in [0.45, 0.5, 0.53] {
            let rel = (d.eval(x) - truth.pdf(x)).abs() / truth.pdf(x);
            assert!(rel < 0.05, "x={x}: rel err {rel}");
        }
    }
}
