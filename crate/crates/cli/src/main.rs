use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survmoments::io::{load_dataset, load_moments, simulate_weibull, write_dataset};
use survmoments::pipeline::{describe_median, format_km, run_approx, run_fit, ApproxOptions, RunConfig, WeibullTruth};
use survmoments::{Error, Result};

/// Bayesian nonparametric survival analysis from posterior moments.
#[derive(Parser)]
#[command(name = "survmoments", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an uncensored Weibull dataset.
    Simulate {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        shape: f64,
        #[arg(long, default_value_t = 2.0)]
        scale: f64,
        /// File name inside the output directory.
        #[arg(long, default_value = "data.csv")]
        output: String,
    },
    /// Fit the hazard mixture model and summarize the posterior.
    Fit(FitArgs),
    /// Reconstruct a density on [0,1] from a moment file.
    Approx {
        /// CSV with header `moment`.
        moments: PathBuf,
        /// Use only the first N moments.
        #[arg(long)]
        n_moments: Option<usize>,
        #[arg(long, default_value_t = survmoments::jacobi::DEFAULT_N_SIM)]
        n_sim: usize,
        #[arg(long, default_value_t = survmoments::jacobi::DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Output prefix, relative to the output directory.
        #[arg(long, default_value = "approx")]
        out_prefix: String,
        /// Also reconstruct with every N from 2 up to the moment count.
        #[arg(long)]
        sweep: bool,
    },
    /// Kaplan–Meier estimate and empirical median.
    Km {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV with header `time,event`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Total Gibbs iterations L.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Time horizon M of the grid.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of grid points q.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Moments N per grid point.
    #[arg(long)]
    n_moments: Option<usize>,
    /// Posterior draws per grid point.
    #[arg(long)]
    n_sim: Option<usize>,
    /// Evaluation grid size on [0,1] for the per-t densities.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Skip the SVG figures.
    #[arg(long)]
    no_plots: bool,
    /// Overlay a Weibull survival curve with this shape (needs --truth-scale).
    #[arg(long, requires = "truth_scale")]
    truth_shape: Option<f64>,
    #[arg(long, requires = "truth_shape")]
    truth_scale: Option<f64>,
}

fn out_dir(shared: &Shared, fallback: Option<&Path>) -> PathBuf {
    shared
        .out_dir
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(shared: &Shared) -> Result<Option<RunConfig>> {
    shared.config.as_ref().map(RunConfig::load).transpose()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn fit(shared: &Shared, args: FitArgs) -> Result<()> {
    let mut cfg = load_config(shared)?.unwrap_or_default();
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(shared.seed, cfg.chain.seed);
    set!(args.iterations, cfg.chain.iterations);
    set!(args.burn_in, cfg.chain.burn_in);
    set!(args.thin, cfg.chain.thin);
    set!(args.horizon, cfg.grid.horizon);
    set!(args.grid_points, cfg.grid.points);
    set!(args.n_moments, cfg.grid.moments);
    set!(args.n_sim, cfg.posterior.n_sim);
    set!(args.grid_size, cfg.posterior.grid_size);
    if let Some(d) = args.data {
        cfg.io.data = Some(d);
    }
    if let Some(d) = &shared.out_dir {
        cfg.io.out_dir = d.clone();
    }
    if args.no_plots {
        cfg.io.plots = false;
    }
    if let (Some(shape), Some(scale)) = (args.truth_shape, args.truth_scale) {
        cfg.io.truth = Some(WeibullTruth { shape, scale });
    }
    let path = cfg
        .io
        .data
        .clone()
        .ok_or_else(|| Error::InvalidInput("no dataset given (use --data or io.data in the config)".into()))?;
    let data = load_dataset(&path)?;
    let out = run_fit(&data, &cfg)?;
    println!("{}", describe_median(&out.summary));
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let shared = &cli.shared;
    match cli.command {
        Command::Simulate { n, shape, scale, output } => {
            let seed = shared.seed.or(load_config(shared)?.map(|c| c.chain.seed)).unwrap_or(0);
            let dir = out_dir(shared, None);
            create_dir(&dir)?;
            let data = simulate_weibull(n, shape, scale, seed)?;
            let path = dir.join(output);
            write_dataset(&path, &data)?;
            println!("wrote {}", path.display());
        }
        Command::Fit(args) => fit(shared, args)?,
        Command::Approx {
            moments,
            n_moments,
            n_sim,
            grid_size,
            out_prefix,
            sweep,
        } => {
            let cfg = load_config(shared)?;
            let seed = shared.seed.or(cfg.as_ref().map(|c| c.chain.seed)).unwrap_or(0);
            let dir = out_dir(shared, cfg.as_ref().map(|c| c.io.out_dir.as_path()));
            let m = load_moments(&moments)?;
            let opts = ApproxOptions {
                n_moments,
                n_sim,
                grid_size,
                seed,
                sweep,
            };
            for f in run_approx(&m, &opts, &dir.join(out_prefix))? {
                println!("wrote {}", f.display());
            }
        }
        Command::Km { data } => {
            let cfg = load_config(shared)?;
            let dir = out_dir(shared, cfg.as_ref().map(|c| c.io.out_dir.as_path()));
            create_dir(&dir)?;
            let d = load_dataset(&data)?;
            let path = dir.join("km.csv");
            std::fs::write(&path, format_km(&d)?).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let m = survmoments::functionals::empirical_median(&d)?;
            if m.open {
                println!("empirical median beyond {}", m.value);
            } else {
                println!("empirical median {}", m.value);
            }
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
