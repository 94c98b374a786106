//! End-to-end runs: configuration, fitting, density reconstruction and
//! Kaplan–Meier output, each writing its artifacts to disk.
//!
//! Config files are JSON with the sections below; every field is optional
//! and defaults to the values shown by `RunConfig::default()`.
//!
//! ```json
//! {
//!   "model": { "prior_c": {"shape": 1, "rate": 0.333}, "prior_beta": {"shape": 1, "rate": 0.333},
//!              "p0_rate": 3, "kernel": "dykstra-laud" },
//!   "chain": { "iterations": 10000, "burn_in": 5000, "thin": 5, "seed": 0, "mh_step": 0.5 },
//!   "grid": { "horizon": 6, "points": 50, "moments": 10 },
//!   "posterior": { "n_sim": 1000, "grid_size": 200, "level": 0.95 },
//!   "io": { "data": "data.csv", "out_dir": "out", "plots": true, "truth": {"shape": 2, "scale": 2} }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{kaplan_meier, summarize, PosteriorSummary, SummaryOptions};
use crate::gibbs::{run_chain, ChainConfig, GammaPrior, MomentGrid};
use crate::hazard::SurvivalDataset;
use crate::io::{self, fmt_float, median_json, to_rounded_json, write_json};
use crate::jacobi::{equispaced_grid, momentify, MomentifyOptions, DEFAULT_GRID_SIZE, DEFAULT_N_SIM, MAX_ORDER};
use crate::moments::MomentVector;
use crate::plot::{Figure, Series, Style};

pub const KERNEL_DL: &str = "dykstra-laud";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub prior_c: GammaPrior,
    pub prior_beta: GammaPrior,
    pub p0_rate: f64,
    pub kernel: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ChainConfig::default();
        Self {
            prior_c: d.prior_c,
            prior_beta: d.prior_beta,
            p0_rate: d.p0_rate,
            kernel: KERNEL_DL.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mh_step: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        let d = ChainConfig::default();
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            seed: d.seed,
            mh_step: d.mh_step,
        }
    }
}

/// Time grid: horizon M, q points and N moments per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub points: usize,
    pub moments: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let d = ChainConfig::default();
        Self {
            horizon: d.horizon,
            points: d.grid_size,
            moments: d.n_moments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    pub n_sim: usize,
    pub grid_size: usize,
    pub level: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            n_sim: DEFAULT_N_SIM,
            grid_size: DEFAULT_GRID_SIZE,
            level: 0.95,
        }
    }
}

/// Weibull survival exp(−(t/scale)^shape), drawn as a reference curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullTruth {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullTruth {
    pub fn survival(&self, t: f64) -> f64 {
        (-(t / self.scale).powf(self.shape)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub plots: bool,
    pub truth: Option<WeibullTruth>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: PathBuf::from("out"),
            plots: true,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub chain: ChainSection,
    pub grid: GridConfig,
    pub posterior: PosteriorConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative data paths resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(data), Some(dir)) = (&cfg.io.data, path.parent()) {
            if data.is_relative() {
                cfg.io.data = Some(dir.join(data));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.model.kernel != KERNEL_DL {
            return bad(format!("unsupported kernel `{}`", self.model.kernel));
        }
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return bad(format!("grid horizon must be positive, got {}", self.grid.horizon));
        }
        if self.grid.points < 2 {
            return bad(format!("grid needs at least 2 points, got {}", self.grid.points));
        }
        if !(2..=MAX_ORDER).contains(&self.grid.moments) {
            return bad(format!("moments must lie in [2, {MAX_ORDER}], got {}", self.grid.moments));
        }
        if !(self.posterior.level > 0.0 && self.posterior.level < 1.0) {
            return bad(format!("level must lie in (0,1), got {}", self.posterior.level));
        }
        if self.posterior.n_sim == 0 || self.posterior.grid_size < 2 {
            return bad("posterior n_sim must be positive and grid_size at least 2".into());
        }
        if let Some(p) = &self.io.data {
            if !p.exists() {
                return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "data file not found")));
            }
        }
        self.chain_config().validate()
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.chain.iterations,
            burn_in: self.chain.burn_in,
            thin: self.chain.thin,
            horizon: self.grid.horizon,
            grid_size: self.grid.points,
            n_moments: self.grid.moments,
            seed: self.chain.seed,
            prior_c: self.model.prior_c,
            prior_beta: self.model.prior_beta,
            mh_step: self.chain.mh_step,
            p0_rate: self.model.p0_rate,
        }
    }

    pub fn summary_options(&self) -> SummaryOptions {
        SummaryOptions {
            level: self.posterior.level,
            n_sim: self.posterior.n_sim,
            grid_size: self.posterior.grid_size,
            seed: self.chain.seed,
        }
    }
}

/// Files written so far; removed again if a later stage fails.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, text: &str) -> Result<()> {
        self.written.push(path.clone());
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn json(&mut self, path: PathBuf, value: &serde_json::Value) -> Result<()> {
        self.written.push(path.clone());
        write_json(&path, value)
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

#[derive(Debug)]
pub struct FitOutput {
    pub grid: MomentGrid,
    pub summary: PosteriorSummary,
    pub files: Vec<PathBuf>,
}

/// Chain → per-t posteriors → functionals → files in `cfg.io.out_dir`.
pub fn run_fit(data: &SurvivalDataset, cfg: &RunConfig) -> Result<FitOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let dir = &cfg.io.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("write"))?;
    let mut out = Outputs { written: Vec::new() };
    let result = fit_stages(data, cfg, dir, &mut out);
    match result {
        Ok((grid, summary)) => Ok(FitOutput {
            grid,
            summary,
            files: out.written,
        }),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn fit_stages(
    data: &SurvivalDataset,
    cfg: &RunConfig,
    dir: &Path,
    out: &mut Outputs,
) -> Result<(MomentGrid, PosteriorSummary)> {
    let grid = run_chain(data, &cfg.chain_config()).map_err(|e| e.in_stage("chain"))?;
    let summary = summarize(&grid, data, &cfg.summary_options()).map_err(|e| e.in_stage("posterior"))?;
    let write = |out: &mut Outputs| -> Result<()> {
        out.write(dir.join("summary.csv"), &io::format_summary(&summary))?;
        out.json(dir.join("median.json"), &median_json(&summary))?;
        out.json(dir.join("diagnostics.json"), &to_rounded_json(&grid.diagnostics)?)?;
        if cfg.io.plots {
            let svgs = fit_plots(data, &summary, cfg)?;
            for (name, svg) in ["km.svg", "intervals.svg", "posterior.svg"].iter().zip(svgs) {
                out.write(dir.join(name), &svg)?;
            }
        }
        Ok(())
    };
    write(out).map_err(|e| e.in_stage("write"))?;
    Ok((grid, summary))
}

fn fit_plots(data: &SurvivalDataset, s: &PosteriorSummary, cfg: &RunConfig) -> Result<[String; 3]> {
    let t = &s.t_grid;
    let unit = Some((0.0, 1.0));
    let x_range = Some((0.0, cfg.grid.horizon));

    let km = kaplan_meier(data)?;
    let mut km_x = vec![0.0];
    let mut km_y = vec![1.0];
    km_x.extend(&km.times);
    km_y.extend(&km.survival);
    km_x.push(cfg.grid.horizon.max(data.max_time()));
    km_y.push(*km_y.last().unwrap_or(&1.0));
    let mut fig1 = Figure::new("Kaplan-Meier estimate", "t", "S(t)").with(Series::new("Kaplan-Meier", &km_x, &km_y, Style::Step));
    fig1.series.push(Series::new("posterior mean", t, &s.mean, Style::Solid));
    if let Some(truth) = cfg.io.truth {
        let ys: Vec<f64> = t.iter().map(|&x| truth.survival(x)).collect();
        fig1.series.push(Series::new("true survival", t, &ys, Style::Dashed));
    }
    fig1.x_range = x_range;
    fig1.y_range = unit;

    let mut fig2 = Figure::new("Credible vs marginal intervals", "t", "S(t)")
        .with(Series::new("credible lower", t, &s.lo, Style::Solid))
        .with(Series::new("credible upper", t, &s.hi, Style::Solid))
        .with(Series::new("marginal lower", t, &s.marginal_lo, Style::Dashed))
        .with(Series::new("marginal upper", t, &s.marginal_hi, Style::Dashed));
    fig2.x_range = x_range;
    fig2.y_range = unit;

    // density of the median survival time from increments of its CDF
    let dens: Vec<f64> = (0..t.len())
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                (s.c[i] - s.c[i - 1]) / (t[i] - t[i - 1])
            }
        })
        .collect();
    let peak = dens.iter().copied().fold(1.0, f64::max);
    let mut fig3 = Figure::new("Posterior survival and median density", "t", "S(t) / density")
        .with(Series::new("posterior mean", t, &s.mean, Style::Solid))
        .with(Series::new("credible lower", t, &s.lo, Style::Dashed))
        .with(Series::new("credible upper", t, &s.hi, Style::Dashed))
        .with(Series::new("median density", t, &dens, Style::Solid));
    fig3.x_range = x_range;
    fig3.y_range = Some((0.0, peak));
    Ok([fig1.to_svg(), fig2.to_svg(), fig3.to_svg()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOptions {
    pub n_moments: Option<usize>,
    pub n_sim: usize,
    pub grid_size: usize,
    pub seed: u64,
    /// Also reconstruct with N = 2..=n_moments, one output set per N.
    pub sweep: bool,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self {
            n_moments: None,
            n_sim: DEFAULT_N_SIM,
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            sweep: false,
        }
    }
}

fn histogram(draws: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let mut counts = vec![0.0; bins];
    for &d in draws {
        let k = ((d * bins as f64) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let scale = bins as f64 / draws.len().max(1) as f64;
    let mut xs = Vec::with_capacity(bins + 1);
    let mut ys = Vec::with_capacity(bins + 1);
    for (k, c) in counts.iter().enumerate() {
        xs.push(k as f64 / bins as f64);
        ys.push(c * scale);
    }
    xs.push(1.0);
    ys.push(*ys.last().unwrap_or(&0.0));
    (xs, ys)
}

fn approx_once(moments: &MomentVector, n: usize, opts: &ApproxOptions, prefix: &str, out: &mut Outputs) -> Result<()> {
    let m = momentify(
        moments,
        &MomentifyOptions {
            n_moments: Some(n),
            n_sim: opts.n_sim,
            xgrid: Some(equispaced_grid(opts.grid_size)),
            seed: opts.seed,
            ..Default::default()
        },
    )?;
    out.write(
        PathBuf::from(format!("{prefix}_density.csv")),
        &io::format_columns(&["x", "f"], &[&m.xgrid, &m.approx_density]),
    )?;
    out.write(PathBuf::from(format!("{prefix}_sample.csv")), &io::format_columns(&["s"], &[&m.psample]))?;
    let (hx, hy) = histogram(&m.psample, 40);
    let mut fig = Figure::new(&format!("Density from {n} moments"), "s", "density")
        .with(Series::new("approximation", &m.xgrid, &m.approx_density, Style::Solid))
        .with(Series::new("sample histogram", &hx, &hy, Style::Step));
    fig.x_range = Some((0.0, 1.0));
    out.write(PathBuf::from(format!("{prefix}_density.svg")), &fig.to_svg())?;
    Ok(())
}

/// Density reconstruction from a moment vector; writes
/// `<prefix>_density.csv`, `<prefix>_sample.csv` and `<prefix>_density.svg`
/// (and `<prefix>_n<N>_…` for each N when sweeping).
pub fn run_approx(moments: &MomentVector, opts: &ApproxOptions, prefix: &Path) -> Result<Vec<PathBuf>> {
    let n = opts.n_moments.unwrap_or(moments.len());
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let base = prefix.to_string_lossy().into_owned();
    let mut out = Outputs { written: Vec::new() };
    let mut run = || -> Result<()> {
        approx_once(moments, n, opts, &base, &mut out)?;
        if opts.sweep {
            for k in 2..=n {
                approx_once(moments, k, opts, &format!("{base}_n{k}"), &mut out)?;
            }
        }
        Ok(())
    };
    match run() {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Kaplan–Meier curve as `time,survival` rows starting at (0, 1).
pub fn format_km(data: &SurvivalDataset) -> Result<String> {
    let km = kaplan_meier(data)?;
    let mut times = vec![0.0];
    let mut surv = vec![1.0];
    times.extend(&km.times);
    surv.extend(&km.survival);
    Ok(io::format_columns(&["time", "survival"], &[&times, &surv]))
}

/// One-line text summary of the median survival estimates.
pub fn describe_median(s: &PosteriorSummary) -> String {
    let end = |e: &crate::functionals::Endpoint| {
        if e.open {
            format!(">{}", fmt_float(e.value))
        } else {
            fmt_float(e.value)
        }
    };
    format!(
        "median survival {} ({}, {}); marginal {} ({}, {}); Kaplan-Meier {}",
        fmt_float(s.m_hat),
        end(&s.m_interval.lo),
        end(&s.m_interval.hi),
        fmt_float(s.m_hat_m),
        end(&s.m_marginal_interval.lo),
        end(&s.m_marginal_interval.hi),
        end(&s.m_hat_e)
    )
}
