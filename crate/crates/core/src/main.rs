//! Command-line front end for the shape-correspondence pipeline.
//!
//! Parameter precedence, lowest to highest: built-in defaults, `--config`
//! file, environment (`SHAPECORR_WORKERS`), command-line flags. Exit codes:
//! 0 success, 2 bad input (parse/mesh/config/mismatch), 3 numerical
//! failure, 4 i/o or file-format failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shapecorr::cli;
use shapecorr::config::RunConfig;
use shapecorr::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "shapecorr",
    version,
    about = "PDE-based feature descriptors and shape correspondence on triangle meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Numeric and model parameters shared by all subcommands.
#[derive(Args, Clone)]
struct Params {
    /// Flat key=value config file applied before any flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Evolution model: heat|wave|dampedwave.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Scheme: implicit-euler|crank-nicolson|explicit-euler|twizell.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Number of retained eigenmodes.
    #[arg(short, long, global = true)]
    r: Option<usize>,
    /// Base step count M0 (M = round(M0 / c)).
    #[arg(long, global = true)]
    m0: Option<usize>,
    /// Step coarsening factor c.
    #[arg(short, long, global = true)]
    c: Option<f64>,
    /// Spectral horizon parameter t_M.
    #[arg(long = "tm", global = true)]
    t_m: Option<f64>,
    /// Twizell perturbation epsilon.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Damping coefficient psi (dampedwave only).
    #[arg(long, global = true)]
    psi: Option<f64>,
    /// Hit threshold for the evaluation protocol.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Worker bound for parallel sections (0 = number of cores).
    /// Overrides SHAPECORR_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble mesh operators and cache the r-mode spectrum.
    Spectrum {
        #[command(flatten)]
        params: Params,
        /// Input mesh (.off, or TOSCA .vert with sibling .tri).
        #[arg(long)]
        mesh: PathBuf,
        /// Spectrum cache file to write (or reuse when current).
        #[arg(long)]
        cache: PathBuf,
    },
    /// Compute per-vertex descriptors from a cached spectrum.
    Descriptor {
        #[command(flatten)]
        params: Params,
        /// Input mesh the cache was built from.
        #[arg(long)]
        mesh: PathBuf,
        /// Spectrum cache produced by `spectrum`.
        #[arg(long)]
        cache: PathBuf,
        /// Descriptor set output (.sdsc).
        #[arg(long)]
        output: PathBuf,
        /// Also write every descriptor as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the (t_k, value) curve of this vertex as CSV.
        #[arg(long, value_name = "VERTEX", requires = "curve_out")]
        emit_curve: Option<usize>,
        /// Output path for --emit-curve.
        #[arg(long, requires = "emit_curve")]
        curve_out: Option<PathBuf>,
    },
    /// Match two descriptor sets by L1 descriptor distance.
    Match {
        #[command(flatten)]
        params: Params,
        /// Query descriptor set (.sdsc).
        #[arg(long)]
        query: PathBuf,
        /// Target descriptor set (.sdsc).
        #[arg(long)]
        target: PathBuf,
        /// Matching CSV output.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a matching CSV against ground truth on the target mesh.
    Evaluate {
        #[command(flatten)]
        params: Params,
        /// Matching CSV produced by `match`.
        #[arg(long)]
        matching: PathBuf,
        /// Target mesh the geodesic errors are measured on.
        #[arg(long)]
        target_mesh: PathBuf,
        /// Ground-truth file (query_index target_index per line);
        /// omitted means identity correspondence.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Per-vertex error CSV output.
        #[arg(long)]
        output: PathBuf,
        /// Also write the cumulative error curve as CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run the full scheme x c grid for one model and emit the table.
    Sweep {
        #[command(flatten)]
        params: Params,
        /// Query mesh.
        #[arg(long)]
        mesh: PathBuf,
        /// Target mesh (same path sweeps a shape against itself).
        #[arg(long)]
        target_mesh: PathBuf,
        /// Ground-truth file; omitted means identity correspondence.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Sweep table CSV output.
        #[arg(long)]
        output: PathBuf,
    },
}

/// Defaults -> config file -> SHAPECORR_WORKERS -> flags.
fn build_config(params: &Params) -> Result<RunConfig> {
    let mut config = match &params.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &params.model {
        config.model = v.parse()?;
    }
    if let Some(v) = &params.scheme {
        config.scheme = v.parse()?;
    }
    if let Some(v) = params.r {
        config.r = v;
    }
    if let Some(v) = params.m0 {
        config.m0 = v;
    }
    if let Some(v) = params.c {
        config.c = v;
    }
    if let Some(v) = params.t_m {
        config.t_m = v;
    }
    if let Some(v) = params.epsilon {
        config.epsilon = v;
    }
    if let Some(v) = params.psi {
        config.psi = v;
    }
    if let Some(v) = params.threshold {
        config.threshold = v;
    }
    if let Some(v) = params.workers {
        config.workers = v;
    } else if let Ok(value) = std::env::var("SHAPECORR_WORKERS") {
        config.workers = value.parse().map_err(|_| {
            Error::Config(format!(
                "SHAPECORR_WORKERS must be an integer, got '{value}'"
            ))
        })?;
    }
    Ok(config)
}

fn init_workers(config: &RunConfig) {
    // num_threads(0) lets rayon pick; a second init (tests) only warns
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build_global()
    {
        log::warn!("worker pool already initialized: {e}");
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Spectrum { params, mesh, cache } => {
            let mut config = build_config(&params)?;
            config.mesh = Some(mesh);
            config.cache = Some(cache);
            init_workers(&config);
            let outcome = cli::cmd_spectrum(&config)?;
            println!(
                "spectrum: cache={} n={} r={} cache_hit={}",
                outcome.cache.display(),
                outcome.n,
                outcome.r,
                outcome.cache_hit
            );
        }
        Command::Descriptor {
            params,
            mesh,
            cache,
            output,
            csv,
            emit_curve,
            curve_out,
        } => {
            let mut config = build_config(&params)?;
            config.mesh = Some(mesh);
            config.cache = Some(cache);
            config.output = Some(output);
            init_workers(&config);
            let curve = emit_curve.zip(curve_out.as_deref());
            let out = cli::cmd_descriptor(&config, csv.as_deref(), curve)?;
            println!("descriptor: wrote {}", out.display());
        }
        Command::Match {
            params,
            query,
            target,
            output,
        } => {
            let mut config = build_config(&params)?;
            config.output = Some(output.clone());
            init_workers(&config);
            let matching = cli::cmd_match(&config, &query, &target)?;
            println!(
                "match: {} correspondences, wrote {}",
                matching.matches.len(),
                output.display()
            );
        }
        Command::Evaluate {
            params,
            matching,
            target_mesh,
            truth,
            output,
            curve_out,
        } => {
            let mut config = build_config(&params)?;
            config.target_mesh = Some(target_mesh);
            config.truth = truth;
            config.output = Some(output);
            init_workers(&config);
            let report = cli::cmd_evaluate(&config, &matching, curve_out.as_deref())?;
            println!("evaluate: {}", report.summary_line());
        }
        Command::Sweep {
            params,
            mesh,
            target_mesh,
            truth,
            output,
        } => {
            let mut config = build_config(&params)?;
            config.mesh = Some(mesh);
            config.target_mesh = Some(target_mesh);
            config.truth = truth;
            config.output = Some(output.clone());
            init_workers(&config);
            let rows = cli::cmd_sweep(&config)?;
            println!("sweep: {} rows, wrote {}", rows.len(), output.display());
            for row in rows {
                println!(
                    "  {} c={} M={} hit_rate={}%",
                    row.scheme, row.c, row.m, row.hit_rate_percent
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
