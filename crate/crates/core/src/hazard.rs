//! Gamma completely random measure with a Dykstra–Laud kernel.
//!
//! The hazard is h(t) = ∫ k(t; y) μ(dy) with k(t; y) = β·1(y ≤ t) and μ a
//! gamma CRM with Lévy intensity s⁻¹e⁻ˢ ds · c·P0(dy), P0 exponential.
//! Everything here is specific to that pair: τ and the Frullani form of the
//! inner jump integral are gamma closed forms.

use std::collections::HashMap;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec_pieces, Tolerance};

/// Default absolute tolerance for integrals over the base measure.
pub const QUAD_TOLERANCE: f64 = 1e-9;

/// Dykstra–Laud kernel k(t; y) = β·1(y ≤ t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDL {
    pub beta: f64,
}

impl KernelDL {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("kernel constant must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn eval(&self, t: f64, y: f64) -> f64 {
        if y <= t {
            self.beta
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCrmConfig {
    /// Total mass c.
    pub c: f64,
    /// Rate of the exponential base measure P0.
    pub p0_rate: f64,
}

impl GammaCrmConfig {
    pub fn new(c: f64, p0_rate: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(p0_rate > 0.0 && p0_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "total mass and base rate must be positive, got c={c}, rate={p0_rate}"
            )));
        }
        Ok(Self { c, p0_rate })
    }

    pub fn p0_density(&self, y: f64) -> f64 {
        self.p0_rate * (-self.p0_rate * y).exp()
    }
}

/// Observation times with event indicators (true = exact, false = censored).
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    // all times ascending, and Σ_{k ≥ j} sorted[k]
    sorted: Vec<f64>,
    suffix: Vec<f64>,
}

impl SurvivalDataset {
    pub fn new(times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} event flags",
                times.len(),
                events.len()
            )));
        }
        if let Some((i, t)) = times.iter().enumerate().find(|(_, t)| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Validation {
                line: i + 1,
                message: format!("time must be positive and finite, got {t}"),
            });
        }
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let mut suffix = vec![0.0; sorted.len() + 1];
        for j in (0..sorted.len()).rev() {
            suffix[j] = suffix[j + 1] + sorted[j];
        }
        Ok(Self {
            times,
            events,
            sorted,
            suffix,
        })
    }

    /// All observations exact.
    pub fn uncensored(times: Vec<f64>) -> Result<Self> {
        let events = vec![true; times.len()];
        Self::new(times, events)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty dataset is valid")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Indices of exact observations, in row order.
    pub fn exact_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.events[i]).collect()
    }

    pub fn n_exact(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }

    pub fn max_time(&self) -> f64 {
        self.sorted.last().copied().unwrap_or(0.0)
    }

    /// Sorted observation times: the breakpoints of K_X.
    pub fn sorted_times(&self) -> &[f64] {
        &self.sorted
    }

    /// K_X(y) / β = Σ_i (X_i − y)₊.
    pub fn exposure(&self, y: f64) -> f64 {
        let j = self.sorted.partition_point(|&x| x <= y);
        let m = (self.sorted.len() - j) as f64;
        (self.suffix[j] - m * y).max(0.0)
    }

    /// Number of observations strictly beyond y (slope of K_X / β).
    pub fn at_risk_beyond(&self, y: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&x| x <= y)
    }
}

/// K_x(y) = β (x − y)₊.
pub fn cumulative_kernel(x: f64, y: f64, beta: f64) -> f64 {
    if y <= x {
        beta * (x - y)
    } else {
        0.0
    }
}

/// K_X(y) = Σ_i K_{X_i}(y) over all observations, censored included.
pub fn cumulative_kernel_total(y: f64, data: &SurvivalDataset, beta: f64) -> f64 {
    beta * data.exposure(y)
}

/// τ_m(u) = ∫ s^m e^{−us} ρ(s) ds = Γ(m) / (1+u)^m for ρ(s) = s⁻¹e⁻ˢ.
pub fn tau(m: u32, u: f64) -> Result<f64> {
    ln_tau(m, u).map(f64::exp)
}

pub fn ln_tau(m: u32, u: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("tau diverges at m = 0 for the gamma intensity".into()));
    }
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("tau needs u >= 0, got {u}")));
    }
    Ok(ln_gamma(m as f64) - m as f64 * u.ln_1p())
}

/// Point beyond which an exponential base measure with this rate carries
/// less than e^{−40} of the mass of an integrand that may grow by at most
/// e^{log_growth} relative to its value at 0.
pub fn base_horizon(rate: f64, log_growth: f64) -> f64 {
    (40.0 + log_growth.max(0.0)) / rate
}

/// Breakpoints of K_X inside (0, t), plus the ends.
fn pieces(data: &SurvivalDataset, t: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(data.len() + 2);
    b.push(0.0);
    let mut last = 0.0;
    for &x in data.sorted_times() {
        if x > last && x < t {
            b.push(x);
            last = x;
        }
    }
    b.push(t);
    b
}

/// c ∫₀ᵗ log((1 + K_X(y) + r K_t(y)) / (1 + K_X(y))) P0(dy): minus the log
/// of the prior factor in the conditional moment.
pub fn prior_log_factor(t: f64, r: f64, data: &SurvivalDataset, cfg: &GammaCrmConfig, beta: f64) -> Result<f64> {
    prior_log_factor_batch(t, &[r], data, cfg, beta, Tolerance::absolute(QUAD_TOLERANCE)).map(|v| v[0])
}

/// [`prior_log_factor`] for several r at once, sharing quadrature nodes.
pub fn prior_log_factor_batch(
    t: f64,
    rs: &[f64],
    data: &SurvivalDataset,
    cfg: &GammaCrmConfig,
    beta: f64,
    tol: Tolerance,
) -> Result<Vec<f64>> {
    if !(t >= 0.0) || rs.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Domain(format!("need t >= 0 and r >= 0, got t={t}")));
    }
    if t == 0.0 {
        return Ok(vec![0.0; rs.len()]);
    }
    let r_max = rs.iter().copied().fold(0.0, f64::max);
    let top = t.min(base_horizon(cfg.p0_rate, (r_max * beta * t).ln_1p().ln()));
    let breaks = pieces(data, top);
    let v = integrate_vec_pieces(
        |y, out| {
            let kx = beta * data.exposure(y);
            let kt = beta * (t - y).max(0.0);
            let p0 = cfg.p0_density(y);
            let z = kt / (1.0 + kx);
            for (o, r) in out.iter_mut().zip(rs) {
                *o = (r * z).ln_1p() * p0;
            }
        },
        &breaks,
        rs.len(),
        Tolerance {
            abs: tol.abs / cfg.c,
            ..tol
        },
    )?;
    Ok(v.into_iter().map(|x| cfg.c * x).collect())
}

/// D = ∫ log(1 + K_X(y)) P0(dy), the exponent of the marginal prior factor
/// (divided by c).
pub fn exposure_log_integral(data: &SurvivalDataset, beta: f64, p0_rate: f64, tol: Tolerance) -> Result<f64> {
    let top = data.max_time();
    if top == 0.0 {
        return Ok(0.0);
    }
    let top = top.min(base_horizon(p0_rate, (beta * data.exposure(0.0)).ln_1p().ln()));
    let breaks = pieces(data, top);
    let v = integrate_vec_pieces(
        |y, out| {
            out[0] = (beta * data.exposure(y)).ln_1p() * p0_rate * (-p0_rate * y).exp();
        },
        &breaks,
        1,
        tol,
    )?;
    Ok(v[0])
}

/// Latent locations of the exact observations and the hyperparameters.
///
/// Latents are grouped into clusters sharing a location; `assignment[i]` is
/// the cluster of the i-th exact observation (in dataset row order).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    assignment: Vec<usize>,
    locations: Vec<f64>,
    sizes: Vec<usize>,
    pub c: f64,
    pub beta: f64,
}

impl LatentState {
    /// Groups equal values of `y` into clusters.
    pub fn new(y: &[f64], c: f64, beta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::State(format!("hyperparameters must be positive, got c={c}, beta={beta}")));
        }
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut s = Self {
            assignment: Vec::with_capacity(y.len()),
            locations: Vec::new(),
            sizes: Vec::new(),
            c,
            beta,
        };
        for &v in y {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::State(format!("latent location must be positive, got {v}")));
            }
            let j = *index.entry(v.to_bits()).or_insert_with(|| {
                s.locations.push(v);
                s.sizes.push(0);
                s.locations.len() - 1
            });
            s.sizes[j] += 1;
            s.assignment.push(j);
        }
        Ok(s)
    }

    /// Checks latent count and Y_i ≤ X_i against the dataset.
    pub fn check(&self, data: &SurvivalDataset) -> Result<()> {
        let exact = data.exact_indices();
        if exact.len() != self.assignment.len() {
            return Err(Error::State(format!(
                "{} latents for {} exact observations",
                self.assignment.len(),
                exact.len()
            )));
        }
        for (k, &i) in exact.iter().enumerate() {
            let y = self.locations[self.assignment[k]];
            if y > data.times()[i] {
                return Err(Error::State(format!(
                    "latent {y} exceeds its observation time {}",
                    data.times()[i]
                )));
            }
        }
        let total: usize = self.sizes.iter().sum();
        if total != self.assignment.len() {
            return Err(Error::State("cluster sizes do not sum to the latent count".into()));
        }
        Ok(())
    }

    /// Y_i for each exact observation.
    pub fn y(&self) -> Vec<f64> {
        self.assignment.iter().map(|&j| self.locations[j]).collect()
    }

    /// Distinct locations Y*_j with multiplicities n_j.
    pub fn distinct(&self) -> Vec<(f64, usize)> {
        self.locations.iter().copied().zip(self.sizes.iter().copied()).collect()
    }

    /// Number of clusters k.
    pub fn n_clusters(&self) -> usize {
        self.locations.len()
    }

    pub fn n_latent(&self) -> usize {
        self.assignment.len()
    }

    pub(crate) fn assignment(&self, k: usize) -> usize {
        self.assignment[k]
    }

    pub(crate) fn location(&self, j: usize) -> f64 {
        self.locations[j]
    }

    pub(crate) fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub(crate) fn set_location(&mut self, j: usize, y: f64) {
        self.locations[j] = y;
    }

    /// Takes latent k out of its cluster, dropping the cluster if it empties.
    pub(crate) fn detach(&mut self, k: usize) {
        let j = self.assignment[k];
        self.sizes[j] -= 1;
        if self.sizes[j] == 0 {
            let last = self.locations.len() - 1;
            self.locations.swap_remove(j);
            self.sizes.swap_remove(j);
            if j != last {
                for a in self.assignment.iter_mut() {
                    if *a == last {
                        *a = j;
                    }
                }
            }
        }
        self.assignment[k] = usize::MAX;
    }

    pub(crate) fn attach(&mut self, k: usize, j: usize) {
        self.sizes[j] += 1;
        self.assignment[k] = j;
    }

    pub(crate) fn attach_new(&mut self, k: usize, y: f64) {
        self.locations.push(y);
        self.sizes.push(1);
        self.assignment[k] = self.locations.len() - 1;
    }
}

/// E[S̃(t)^r | X, Y] for the gamma/DL model.
pub fn conditional_moment(
    t: f64,
    r: f64,
    data: &SurvivalDataset,
    state: &LatentState,
    cfg: &GammaCrmConfig,
) -> Result<f64> {
    conditional_moments(t, &[r], data, state, cfg.p0_rate, Tolerance::absolute(QUAD_TOLERANCE)).map(|v| v[0])
}

/// E[S̃(t)^r | X, Y] for every r in `rs`; c and β are taken from the state.
pub fn conditional_moments(
    t: f64,
    rs: &[f64],
    data: &SurvivalDataset,
    state: &LatentState,
    p0_rate: f64,
    tol: Tolerance,
) -> Result<Vec<f64>> {
    let cfg = GammaCrmConfig::new(state.c, p0_rate)?;
    let beta = state.beta;
    let mut log_m: Vec<f64> = prior_log_factor_batch(t, rs, data, &cfg, beta, tol)?
        .into_iter()
        .map(|v| -v)
        .collect();
    for (y, n) in state.distinct() {
        let kt = cumulative_kernel(t, y, beta);
        if kt == 0.0 {
            continue;
        }
        let z = kt / (1.0 + beta * data.exposure(y));
        for (lm, r) in log_m.iter_mut().zip(rs) {
            *lm -= n as f64 * (r * z).ln_1p();
        }
    }
    Ok(log_m.into_iter().map(|v| v.exp().min(1.0)).collect())
}
