//! Marginal Gibbs sampler for the gamma/DL hazard mixture.
//!
//! The CRM is integrated out. The chain moves the latent locations Y (in a
//! Pólya-urn scheme), the cluster locations, the total mass c (conjugate
//! gamma draw) and the kernel constant β (random-walk Metropolis on log β).
//! Kept iterations contribute E[S̃(t)^r | X, Y] on a time grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hazard::{base_horizon, conditional_moments, exposure_log_integral, LatentState, SurvivalDataset};
use crate::moments::validate_moments;
use crate::quadrature::{integrate, Tolerance};
use crate::stats::effective_sample_size;

const TARGET_ACCEPTANCE: f64 = 0.35;
const TUNE_BATCH: usize = 50;
// largest envelope-to-density ratio inside a fresh-value cell
const CELL_RATIO: f64 = 2.0;

/// Gamma(shape, rate) prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0) {
            return Err(Error::Domain(format!("gamma prior needs positive shape and rate, got ({shape}, {rate})")));
        }
        Ok(Self { shape, rate })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate).expect("validated prior").sample(rng)
    }

    fn ln_density_unnorm(&self, x: f64) -> f64 {
        (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Total iterations L.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Grid horizon M.
    pub horizon: f64,
    /// Grid size q.
    pub grid_size: usize,
    /// Number of moments N.
    pub n_moments: usize,
    pub seed: u64,
    pub prior_c: GammaPrior,
    pub prior_beta: GammaPrior,
    /// Initial random-walk scale for log β; tuned during burn-in.
    pub mh_step: f64,
    pub p0_rate: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 5,
            horizon: 6.0,
            grid_size: 50,
            n_moments: 10,
            seed: 0,
            prior_c: GammaPrior::default(),
            prior_beta: GammaPrior::default(),
            mh_step: 0.5,
            p0_rate: 3.0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.burn_in >= self.iterations {
            return bad(format!("burn-in {} must be below the iteration count {}", self.burn_in, self.iterations));
        }
        if self.thin == 0 {
            return bad("thinning must be at least 1".into());
        }
        if self.grid_size < 2 {
            return bad(format!("grid size must be at least 2, got {}", self.grid_size));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("grid horizon must be positive, got {}", self.horizon));
        }
        if !(2..=crate::jacobi::MAX_ORDER).contains(&self.n_moments) {
            return bad(format!("number of moments must lie in [2, 30], got {}", self.n_moments));
        }
        if !(self.mh_step >= 0.0 && self.mh_step.is_finite()) {
            return bad(format!("proposal scale must be nonnegative, got {}", self.mh_step));
        }
        if !(self.p0_rate > 0.0) {
            return bad(format!("base rate must be positive, got {}", self.p0_rate));
        }
        GammaPrior::new(self.prior_c.shape, self.prior_c.rate)?;
        GammaPrior::new(self.prior_beta.shape, self.prior_beta.rate)?;
        Ok(())
    }

    /// t_i = (i−1)·M/(q−1), i = 1..q.
    pub fn t_grid(&self) -> Vec<f64> {
        let step = self.horizon / (self.grid_size - 1) as f64;
        (0..self.grid_size).map(|i| i as f64 * step).collect()
    }

    /// Number of iterations that are stored.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Exact sampler for the fresh-location density ∝ p0(y) / (1 + K_X(y)).
///
/// [0, max X] is cut at the data times and then bisected until the density
/// varies by at most a factor of two inside every cell; a cell is picked by
/// its integrated mass and a point is drawn by rejection from the cell's
/// constant envelope. Cumulative masses at each X_i are exact cell sums.
#[derive(Debug, Clone)]
struct FreshSampler {
    lo: Vec<f64>,
    hi: Vec<f64>,
    envelope: Vec<f64>,
    // cumulative mass through the end of each cell
    cum: Vec<f64>,
}

impl FreshSampler {
    fn new(data: &SurvivalDataset, beta: f64, rate: f64) -> Result<Self> {
        let density = |y: f64| rate * (-rate * y).exp() / (1.0 + beta * data.exposure(y));
        // bounds on a cell: p0 is largest at lo, 1/(1+K) is largest at hi
        let bound = |l: f64, h: f64| rate * (-rate * l).exp() / (1.0 + beta * data.exposure(h));
        let floor = |l: f64, h: f64| rate * (-rate * h).exp() / (1.0 + beta * data.exposure(l));

        let mut s = Self {
            lo: Vec::new(),
            hi: Vec::new(),
            envelope: Vec::new(),
            cum: Vec::new(),
        };
        // density relative to its value at 0 is at most e^{−rate·y}(1 + K_X(0))
        let horizon = base_horizon(rate, (beta * data.exposure(0.0)).ln_1p());
        let mut start = 0.0;
        let mut total = 0.0;
        let mut stack = Vec::new();
        for &x in data.sorted_times() {
            let x = x.min(horizon);
            if x <= start {
                continue;
            }
            stack.push((start, x));
            // left-to-right order: process the stack depth-first, left halves first
            while let Some((l, h)) = stack.pop() {
                let mid = 0.5 * (l + h);
                if bound(l, h) > CELL_RATIO * floor(l, h) && mid > l && mid < h {
                    stack.push((mid, h));
                    stack.push((l, mid));
                    continue;
                }
                let mass = integrate(
                    &density,
                    l,
                    h,
                    Tolerance {
                        abs: 0.0,
                        rel: 1e-13,
                        max_intervals: 200,
                    },
                )?;
                total += mass;
                s.lo.push(l);
                s.hi.push(h);
                s.envelope.push(bound(l, h));
                s.cum.push(total);
            }
            start = x;
        }
        Ok(s)
    }

    /// ∫₀ˣ p0(y)/(1+K_X(y)) dy for a data time x (negligible tail beyond
    /// the last cell dropped).
    fn mass_to(&self, x: f64) -> f64 {
        let j = self.hi.partition_point(|&h| h <= x);
        if j == 0 {
            0.0
        } else {
            self.cum[j - 1]
        }
    }

    fn sample<R: Rng + ?Sized>(&self, x: f64, data: &SurvivalDataset, beta: f64, rate: f64, rng: &mut R) -> f64 {
        let top = self.mass_to(x);
        let u = rng.random::<f64>() * top;
        let j = self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1);
        let (l, h, env) = (self.lo[j], self.hi[j], self.envelope[j]);
        loop {
            let y = l + (h - l) * rng.random::<f64>();
            if y <= 0.0 {
                continue;
            }
            let f = rate * (-rate * y).exp() / (1.0 + beta * data.exposure(y));
            if rng.random::<f64>() * env <= f {
                return y;
            }
        }
    }
}

/// One chain's working state: data, latent state, tuning and RNG.
pub struct Gibbs<'a> {
    data: &'a SurvivalDataset,
    cfg: ChainConfig,
    state: LatentState,
    exact: Vec<usize>,
    rng: ChaCha8Rng,
    fresh: Option<FreshSampler>,
    // D(β) for the current β
    d_cache: Option<(f64, f64)>,
    mh_step: f64,
    proposals: usize,
    accepted: usize,
    tol: Tolerance,
}

impl<'a> Gibbs<'a> {
    pub fn new(data: &'a SurvivalDataset, state: LatentState, cfg: &ChainConfig, rng: ChaCha8Rng) -> Result<Self> {
        state.check(data)?;
        Ok(Self {
            data,
            exact: data.exact_indices(),
            state,
            mh_step: cfg.mh_step,
            cfg: cfg.clone(),
            rng,
            fresh: None,
            d_cache: None,
            proposals: 0,
            accepted: 0,
            tol: Tolerance::absolute(1e-11),
        })
    }

    /// Initial state: Y_i = X_i/2, c and β drawn from their priors.
    pub fn initial_state<R: Rng + ?Sized>(data: &SurvivalDataset, cfg: &ChainConfig, rng: &mut R) -> Result<LatentState> {
        let c = cfg.prior_c.sample(rng);
        let beta = cfg.prior_beta.sample(rng);
        let y: Vec<f64> = data.exact_indices().iter().map(|&i| data.times()[i] / 2.0).collect();
        LatentState::new(&y, c, beta)
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn into_state(self) -> LatentState {
        self.state
    }

    /// Latent state and generator, to continue a stream on new data.
    pub fn into_parts(self) -> (LatentState, ChaCha8Rng) {
        (self.state, self.rng)
    }

    pub fn mh_step(&self) -> f64 {
        self.mh_step
    }

    /// (accepted, proposed) counts for β since the last reset.
    pub fn beta_counts(&self) -> (usize, usize) {
        (self.accepted, self.proposals)
    }

    pub fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposals = 0;
    }

    fn fresh(&mut self) -> Result<&FreshSampler> {
        if self.fresh.is_none() {
            self.fresh = Some(FreshSampler::new(self.data, self.state.beta, self.cfg.p0_rate)?);
        }
        Ok(self.fresh.as_ref().expect("just built"))
    }

    fn exposure_integral(&mut self, beta: f64) -> Result<f64> {
        if let Some((b, d)) = self.d_cache {
            if b == beta {
                return Ok(d);
            }
        }
        let d = exposure_log_integral(self.data, beta, self.cfg.p0_rate, self.tol)?;
        self.d_cache = Some((beta, d));
        Ok(d)
    }

    /// Resamples the latent of the k-th exact observation from its full
    /// conditional: join cluster j with weight n_j/(1 + K_X(Y*_j)) when
    /// Y*_j ≤ X, or open a new cluster with weight c·∫₀ˣ p0/(1+K_X).
    pub fn update_latent(&mut self, k: usize) -> Result<()> {
        let x = self.data.times()[self.exact[k]];
        if !(x > 0.0) {
            return Err(Error::State(format!("no admissible location below {x}")));
        }
        let beta = self.state.beta;
        let rate = self.cfg.p0_rate;
        let c = self.state.c;
        let fresh_mass = self.fresh()?.mass_to(x);
        self.state.detach(k);

        let k_clusters = self.state.n_clusters();
        let mut weights = Vec::with_capacity(k_clusters + 1);
        for j in 0..k_clusters {
            let y = self.state.location(j);
            let w = if y <= x {
                self.state.size(j) as f64 / (1.0 + beta * self.data.exposure(y))
            } else {
                0.0
            };
            weights.push(w);
        }
        weights.push(c * fresh_mass);
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::State(format!("latent weights sum to {total}")));
        }
        let mut u = self.rng.random::<f64>() * total;
        let mut pick = k_clusters;
        for (j, w) in weights.iter().enumerate() {
            if u < *w {
                pick = j;
                break;
            }
            u -= w;
        }
        // rounding can leave u just past the last positive weight
        if pick == k_clusters && weights[k_clusters] == 0.0 {
            pick = weights.iter().rposition(|w| *w > 0.0).expect("positive total");
        }
        if pick < k_clusters {
            self.state.attach(k, pick);
        } else {
            let fresh = self.fresh.as_ref().expect("built above");
            let y = fresh.sample(x, self.data, beta, rate, &mut self.rng);
            self.state.attach_new(k, y);
        }
        Ok(())
    }

    /// Moves every cluster location by slice sampling from
    /// p0(y)·(1 + K_X(y))^{−n_j} on (0, min X over the cluster].
    pub fn relocate_clusters(&mut self) -> Result<()> {
        let k = self.state.n_clusters();
        let mut upper = vec![f64::INFINITY; k];
        for (kk, &i) in self.exact.iter().enumerate() {
            let j = self.state.assignment(kk);
            upper[j] = upper[j].min(self.data.times()[i]);
        }
        let beta = self.state.beta;
        let rate = self.cfg.p0_rate;
        let k0 = (beta * self.data.exposure(0.0)).ln_1p();
        for (j, &ub) in upper.iter().enumerate() {
            let n = self.state.size(j) as f64;
            let y0 = self.state.location(j);
            let ub = ub.min(base_horizon(rate, n * k0)).max(y0);
            let log_f = |y: f64| -rate * y - n * (beta * self.data.exposure(y)).ln_1p();
            let level = log_f(y0) + self.rng.random::<f64>().ln();
            let (mut lo, mut hi) = (0.0, ub);
            let y = loop {
                let y = lo + (hi - lo) * self.rng.random::<f64>();
                if y > 0.0 && log_f(y) > level {
                    break y;
                }
                if y < y0 {
                    lo = y;
                } else {
                    hi = y;
                }
                if hi - lo <= f64::EPSILON * ub {
                    break y0;
                }
            };
            self.state.set_location(j, y);
        }
        Ok(())
    }

    /// c | rest ~ Gamma(a_c + k, b_c + D(β)).
    pub fn update_total_mass(&mut self) -> Result<()> {
        let d = self.exposure_integral(self.state.beta)?;
        let shape = self.cfg.prior_c.shape + self.state.n_clusters() as f64;
        let rate = self.cfg.prior_c.rate + d;
        let c = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| Error::Domain(format!("total-mass conditional: {e}")))?
            .sample(&mut self.rng);
        // guard against a zero draw for tiny shapes
        self.state.c = c.max(f64::MIN_POSITIVE);
        Ok(())
    }

    fn log_target_beta(&mut self, beta: f64) -> Result<f64> {
        let d = self.exposure_integral(beta)?;
        let mut v = self.cfg.prior_beta.ln_density_unnorm(beta) - self.state.c * d
            + self.state.n_latent() as f64 * beta.ln();
        for (y, n) in self.state.distinct() {
            v -= n as f64 * (beta * self.data.exposure(y)).ln_1p();
        }
        Ok(v)
    }

    /// One random-walk Metropolis step on log β.
    pub fn update_kernel_beta(&mut self) -> Result<()> {
        let current = self.state.beta;
        let z: f64 = self.rng.sample(StandardNormal);
        let proposal = (current.ln() + self.mh_step * z).exp();
        self.proposals += 1;
        if !(proposal > 0.0 && proposal.is_finite()) || proposal == current {
            if proposal == current {
                self.accepted += 1;
            }
            return Ok(());
        }
        let lp_cur = self.log_target_beta(current)?;
        let lp_new = self.log_target_beta(proposal)?;
        // log-scale walk: Jacobian β'/β
        let log_ratio = lp_new - lp_cur + proposal.ln() - current.ln();
        if self.rng.random::<f64>().ln() < log_ratio {
            self.state.beta = proposal;
            self.fresh = None;
            self.accepted += 1;
        }
        // keep D(β) for the value the state now holds
        self.exposure_integral(self.state.beta)?;
        Ok(())
    }

    /// Latents in index order, cluster locations, c, then β.
    pub fn sweep(&mut self) -> Result<()> {
        for k in 0..self.exact.len() {
            self.update_latent(k)?;
        }
        self.relocate_clusters()?;
        self.update_total_mass()?;
        self.update_kernel_beta()?;
        Ok(())
    }

    fn tune(&mut self) {
        let rate = self.accepted as f64 / self.proposals.max(1) as f64;
        self.mh_step *= (2.0 * (rate - TARGET_ACCEPTANCE)).exp();
        self.reset_counts();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl TraceSummary {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        Self {
            mean: crate::stats::mean(xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub kept: usize,
    /// β acceptance rate after burn-in.
    pub beta_acceptance: f64,
    pub mh_step: f64,
    pub cluster_count: TraceSummary,
    pub total_mass: TraceSummary,
    pub kernel_beta: TraceSummary,
    /// Effective sample size of the conditional-mean trace at each t.
    pub ess: Vec<f64>,
    /// Kept conditional-moment rows failing the moment validator.
    pub coherence_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrid {
    pub t_grid: Vec<f64>,
    /// q rows × N columns: averaged E[S̃(t_i)^r | X, Y].
    pub moments: Vec<Vec<f64>>,
    /// q rows × kept columns: E[S̃(t_i) | X, Y] per kept iteration.
    pub mean_trace: Vec<Vec<f64>>,
    pub cluster_trace: Vec<usize>,
    pub diagnostics: ChainDiagnostics,
}

/// Runs the sampler and averages conditional moments over kept iterations.
pub fn run_chain(data: &SurvivalDataset, cfg: &ChainConfig) -> Result<MomentGrid> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let state = Gibbs::initial_state(data, cfg, &mut rng)?;
    let mut chain = Gibbs::new(data, state, cfg, rng)?;

    let t_grid = cfg.t_grid();
    let q = t_grid.len();
    let n = cfg.n_moments;
    let rs: Vec<f64> = (1..=n).map(|r| r as f64).collect();
    let kept = cfg.kept();
    let mut sums = vec![vec![0.0; n]; q];
    let mut mean_trace = vec![Vec::with_capacity(kept); q];
    let mut cluster_trace = Vec::with_capacity(kept);
    let mut c_trace = Vec::with_capacity(kept);
    let mut beta_trace = Vec::with_capacity(kept);
    let mut violations = 0;
    let tol = Tolerance::absolute(1e-12);

    for iteration in 1..=cfg.iterations {
        chain.sweep().map_err(|e| Error::ChainAbort {
            iteration,
            message: e.to_string(),
        })?;
        if iteration <= cfg.burn_in {
            if iteration % TUNE_BATCH == 0 {
                chain.tune();
            }
            if iteration == cfg.burn_in {
                chain.reset_counts();
            }
            continue;
        }
        if (iteration - cfg.burn_in) % cfg.thin != 0 {
            continue;
        }
        let state = chain.state();
        for (i, &t) in t_grid.iter().enumerate() {
            let m = conditional_moments(t, &rs, data, state, cfg.p0_rate, tol).map_err(|e| Error::ChainAbort {
                iteration,
                message: e.to_string(),
            })?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::ChainAbort {
                    iteration,
                    message: format!("non-finite conditional moment at t={t}"),
                });
            }
            if !validate_moments(&m)?.is_valid() {
                violations += 1;
            }
            for (s, v) in sums[i].iter_mut().zip(&m) {
                *s += v;
            }
            mean_trace[i].push(m[0]);
        }
        cluster_trace.push(state.n_clusters());
        c_trace.push(state.c);
        beta_trace.push(state.beta);
    }

    let kept_f = cluster_trace.len() as f64;
    let moments: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|row| row.into_iter().map(|s| (s / kept_f).clamp(0.0, 1.0)).collect())
        .collect();
    let (acc, prop) = chain.beta_counts();
    let clusters_f: Vec<f64> = cluster_trace.iter().map(|&k| k as f64).collect();
    let diagnostics = ChainDiagnostics {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        kept: cluster_trace.len(),
        beta_acceptance: acc as f64 / prop.max(1) as f64,
        mh_step: chain.mh_step(),
        cluster_count: TraceSummary::of(&clusters_f),
        total_mass: TraceSummary::of(&c_trace),
        kernel_beta: TraceSummary::of(&beta_trace),
        ess: mean_trace.iter().map(|tr| effective_sample_size(tr)).collect(),
        coherence_violations: violations,
    };
    Ok(MomentGrid {
        t_grid,
        moments,
        mean_trace,
        cluster_trace,
        diagnostics,
    })
}
