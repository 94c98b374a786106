//! Posterior summaries built from a moment grid: per-t posteriors and
//! credible intervals, the posterior of the median survival time, the
//! marginal (trace-based) comparators and Kaplan–Meier baselines.

use crate::error::{Error, Result};
use crate::gibbs::MomentGrid;
use crate::hazard::SurvivalDataset;
use crate::jacobi::{equispaced_grid, momentify, MomentifyOptions, DEFAULT_GRID_SIZE};
use crate::moments::MomentVector;
use crate::stats::{quantile_sorted, running_max, sorted};

/// Rows with γ2 − γ1² below this are treated as point masses at γ1.
pub const DEGENERATE_VARIANCE: f64 = 1e-8;

/// Draws from the approximate posterior of S̃(t) at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: Vec<f64>,
    pub xgrid: Vec<f64>,
    /// Approximate density on `xgrid`; empty for a point mass.
    pub density: Vec<f64>,
    /// Grid argmax of the density, or the atom of a point mass.
    pub mode: f64,
    pub degenerate: bool,
}

/// Approximate posterior sample of S̃(t) from its moment row.
pub fn posterior_at_t(row: &MomentVector, n_sim: usize, seed: u64) -> Result<PosteriorDraws> {
    posterior_at_t_with(row, n_sim, seed, DEFAULT_GRID_SIZE)
}

pub fn posterior_at_t_with(row: &MomentVector, n_sim: usize, seed: u64, grid_size: usize) -> Result<PosteriorDraws> {
    if row.len() < 2 {
        return Err(Error::InsufficientMoments {
            needed: 2,
            available: row.len(),
        });
    }
    let g1 = row.gamma(1);
    if row.variance() < DEGENERATE_VARIANCE {
        let atom = g1.clamp(0.0, 1.0);
        return Ok(PosteriorDraws {
            draws: vec![atom; n_sim],
            xgrid: Vec::new(),
            density: Vec::new(),
            mode: atom,
            degenerate: true,
        });
    }
    let out = momentify(
        row,
        &MomentifyOptions {
            n_sim,
            seed,
            xgrid: Some(equispaced_grid(grid_size)),
            ..Default::default()
        },
    )?;
    let mode = out.density.argmax();
    Ok(PosteriorDraws {
        draws: out.psample,
        xgrid: out.xgrid,
        density: out.approx_density,
        mode,
        degenerate: false,
    })
}

/// Equal-tailed interval from empirical quantiles at α/2 and 1 − α/2.
pub fn credible_interval(sample: &[f64], level: f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("credible interval of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0,1), got {level}")));
    }
    let s = sorted(sample);
    let alpha = 1.0 - level;
    Ok((quantile_sorted(&s, alpha / 2.0), quantile_sorted(&s, 1.0 - alpha / 2.0)))
}

/// c_i = P(S̃(t_i) ≤ 1/2), made monotone by a running maximum.
pub fn median_survival_cdf(samples: &[Vec<f64>]) -> Vec<f64> {
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| {
            if s.is_empty() {
                0.0
            } else {
                s.iter().filter(|v| **v <= 0.5).count() as f64 / s.len() as f64
            }
        })
        .collect();
    running_max(&raw)
}

/// m̂ = M/(q−1) · Σ_{i=1}^q (1 − c_i).
pub fn median_survival_estimate(c: &[f64], horizon: f64, q: usize) -> f64 {
    horizon / (q as f64 - 1.0) * c.iter().map(|ci| 1.0 - ci).sum::<f64>()
}

/// An interval end that may lie beyond the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub value: f64,
    /// The level was never reached; `value` is the grid boundary.
    pub open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianInterval {
    pub lo: Endpoint,
    pub hi: Endpoint,
}

/// Smallest t with c(t) ≥ p, interpolating linearly between grid points.
fn invert_cdf(c: &[f64], t_grid: &[f64], p: f64) -> Endpoint {
    match c.iter().position(|&ci| ci >= p) {
        None => Endpoint {
            value: *t_grid.last().expect("nonempty grid"),
            open: true,
        },
        Some(0) => Endpoint {
            value: t_grid[0],
            open: false,
        },
        Some(i) => {
            let (c0, c1) = (c[i - 1], c[i]);
            let (t0, t1) = (t_grid[i - 1], t_grid[i]);
            Endpoint {
                value: t0 + (p - c0) / (c1 - c0) * (t1 - t0),
                open: false,
            }
        }
    }
}

/// Credible interval for the median from its discrete CDF on the grid.
pub fn median_interval(c: &[f64], t_grid: &[f64], level: f64) -> Result<MedianInterval> {
    if c.len() != t_grid.len() || c.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} CDF values for {} grid points",
            c.len(),
            t_grid.len()
        )));
    }
    let alpha = 1.0 - level;
    Ok(MedianInterval {
        lo: invert_cdf(c, t_grid, alpha / 2.0),
        hi: invert_cdf(c, t_grid, 1.0 - alpha / 2.0),
    })
}

/// Quantile interval of the trace of conditional means at one t.
pub fn marginal_interval(trace: &[f64], level: f64) -> Result<(f64, f64)> {
    credible_interval(trace, level)
}

/// CDF of the median from the conditional-mean traces, and its mean m̂_m.
pub fn marginal_median_cdf(trace: &[Vec<f64>], horizon: f64) -> (Vec<f64>, f64) {
    let c = median_survival_cdf(trace);
    let m = median_survival_estimate(&c, horizon, trace.len());
    (c, m)
}

/// Product-limit estimate, a right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// S just after each event time.
    pub survival: Vec<f64>,
}

impl KaplanMeier {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Π (n_k − d_k)/n_k kept as a reduced fraction while it fits, so that
/// telescoping products come out exact; floats take over on overflow.
#[derive(Debug, Clone, Copy)]
enum Product {
    Exact(u128, u128),
    Float(f64),
}

impl Product {
    fn times(self, num: u64, den: u64) -> Self {
        match self {
            Product::Exact(a, b) => {
                let (n, d) = (num as u128, den as u128);
                let g1 = gcd(a, d).max(1);
                let g2 = gcd(n, b).max(1);
                match ((a / g1).checked_mul(n / g2), (b / g2).checked_mul(d / g1)) {
                    (Some(x), Some(y)) => {
                        let g = gcd(x, y).max(1);
                        Product::Exact(x / g, y / g)
                    }
                    _ => Product::Float(a as f64 / b as f64 * (num as f64 / den as f64)),
                }
            }
            Product::Float(v) => Product::Float(v * (num as f64 / den as f64)),
        }
    }

    fn value(self) -> f64 {
        match self {
            Product::Exact(a, b) => a as f64 / b as f64,
            Product::Float(v) => v,
        }
    }
}

pub fn kaplan_meier(data: &SurvivalDataset) -> Result<KaplanMeier> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows: Vec<(f64, bool)> = data.times().iter().copied().zip(data.events().iter().copied()).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = rows.len() as u64;
    let mut prod = Product::Exact(1, 1);
    let mut km = KaplanMeier {
        times: Vec::new(),
        survival: Vec::new(),
    };
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let mut deaths = 0u64;
        let mut leaving = 0u64;
        while i < rows.len() && rows[i].0 == t {
            deaths += rows[i].1 as u64;
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            prod = prod.times(at_risk - deaths, at_risk);
            km.times.push(t);
            km.survival.push(prod.value());
        }
        at_risk -= leaving;
    }
    Ok(km)
}

/// Smallest event time at which the Kaplan–Meier curve is ≤ 1/2.
pub fn empirical_median(data: &SurvivalDataset) -> Result<Endpoint> {
    let km = kaplan_meier(data)?;
    Ok(match km.survival.iter().position(|&s| s <= 0.5) {
        Some(k) => Endpoint {
            value: km.times[k],
            open: false,
        },
        None => Endpoint {
            value: data.max_time(),
            open: true,
        },
    })
}

/// Settings for turning a moment grid into summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    pub level: f64,
    pub n_sim: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            n_sim: 1000,
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub t_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub mode: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub marginal_lo: Vec<f64>,
    pub marginal_hi: Vec<f64>,
    pub km: Vec<f64>,
    /// Monotone CDF of the median survival time on the grid.
    pub c: Vec<f64>,
    pub m_hat: f64,
    pub m_interval: MedianInterval,
    pub c_marginal: Vec<f64>,
    pub m_hat_m: f64,
    pub m_marginal_interval: MedianInterval,
    pub m_hat_e: Endpoint,
    /// Per-t draws, kept for plotting.
    pub draws: Vec<PosteriorDraws>,
}

/// Per-t posteriors, intervals and median-survival summaries.
pub fn summarize(grid: &MomentGrid, data: &SurvivalDataset, opts: &SummaryOptions) -> Result<PosteriorSummary> {
    let q = grid.t_grid.len();
    let horizon = *grid.t_grid.last().ok_or(Error::InvalidInput("empty time grid".into()))?;
    let mut draws = Vec::with_capacity(q);
    for (i, row) in grid.moments.iter().enumerate() {
        let m = MomentVector::new(row.clone())?;
        let seed = opts.seed.wrapping_add(i as u64);
        draws.push(posterior_at_t_with(&m, opts.n_sim, seed, opts.grid_size)?);
    }
    let mut s = PosteriorSummary {
        t_grid: grid.t_grid.clone(),
        mean: grid.moments.iter().map(|r| r[0]).collect(),
        median: Vec::with_capacity(q),
        mode: Vec::with_capacity(q),
        lo: Vec::with_capacity(q),
        hi: Vec::with_capacity(q),
        marginal_lo: Vec::with_capacity(q),
        marginal_hi: Vec::with_capacity(q),
        km: Vec::with_capacity(q),
        c: Vec::new(),
        m_hat: 0.0,
        m_interval: MedianInterval {
            lo: Endpoint { value: 0.0, open: false },
            hi: Endpoint { value: 0.0, open: false },
        },
        c_marginal: Vec::new(),
        m_hat_m: 0.0,
        m_marginal_interval: MedianInterval {
            lo: Endpoint { value: 0.0, open: false },
            hi: Endpoint { value: 0.0, open: false },
        },
        m_hat_e: empirical_median(data)?,
        draws: Vec::new(),
    };
    let km = kaplan_meier(data)?;
    for (i, d) in draws.iter().enumerate() {
        let sorted_draws = sorted(&d.draws);
        s.median.push(quantile_sorted(&sorted_draws, 0.5));
        s.mode.push(d.mode);
        let (lo, hi) = credible_interval(&d.draws, opts.level)?;
        s.lo.push(lo);
        s.hi.push(hi);
        let (mlo, mhi) = marginal_interval(&grid.mean_trace[i], opts.level)?;
        s.marginal_lo.push(mlo);
        s.marginal_hi.push(mhi);
        s.km.push(km.eval(grid.t_grid[i]));
    }
    let samples: Vec<Vec<f64>> = draws.iter().map(|d| d.draws.clone()).collect();
    s.c = median_survival_cdf(&samples);
    s.m_hat = median_survival_estimate(&s.c, horizon, q);
    s.m_interval = median_interval(&s.c, &grid.t_grid, opts.level)?;
    let (cm, mm) = marginal_median_cdf(&grid.mean_trace, horizon);
    s.m_marginal_interval = median_interval(&cm, &grid.t_grid, opts.level)?;
    s.c_marginal = cm;
    s.m_hat_m = mm;
    s.draws = draws;
    Ok(s)
}
