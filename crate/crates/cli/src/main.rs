//! `mrl` — fit mean-residual-life index regressions, export surface grids,
//! and run simulation studies from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{
    build_estimator_config, parse_point_list, parse_scalar_list, EstimatorFlags, FileConfig,
    ResolvedConfig,
};

/// Errors carrying the process exit code: 2 usage/config, 3 degraded
/// result (artifacts written), 4 runtime failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Degraded(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Degraded(_) => 3,
            Self::Runtime(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Degraded(_) => "degraded",
            Self::Runtime(_) => "runtime",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Degraded(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

#[derive(Parser)]
#[command(name = "mrl", version, about)]
struct Cli {
    /// Optional TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridFlags {
    /// Time grid: comma-separated values, e.g. 0,0.5,1.
    #[arg(long, allow_hyphen_values = true)]
    grid_t: Option<String>,
    /// Index grid: points separated by ';', components by ','.
    #[arg(long, allow_hyphen_values = true)]
    grid_v: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the index coefficients from a survival CSV (columns: time,
    /// event, covariates) and write fit.json.
    Fit {
        /// Input CSV path.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Index dimension.
        #[arg(long)]
        d: Option<usize>,
        #[command(flatten)]
        estimator: EstimatorFlags,
        #[command(flatten)]
        grid: GridFlags,
        /// Output directory for artifacts.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit, then export the MRL / cumulative-hazard / sigma-m surfaces on a
    /// product grid as CSV.
    MrlGrid {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        d: Option<usize>,
        #[command(flatten)]
        estimator: EstimatorFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a Monte Carlo study and write a summary CSV plus JSON sidecar.
    Simulate {
        /// Study identifier: S1, S2, or S3.
        #[arg(long)]
        study: Option<String>,
        /// Sample size per replication.
        #[arg(long)]
        n: Option<usize>,
        /// Target censoring rate in [0, 0.6).
        #[arg(long)]
        censoring: Option<f64>,
        /// Number of replications (at least 10).
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        estimator: EstimatorFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Fit {
            input,
            d,
            estimator,
            grid,
            out_dir,
        } => {
            let resolved = resolve_fit("fit", input, d, &estimator, &grid, out_dir, &file)?;
            commands::run_fit(resolved, false)
        }
        Command::MrlGrid {
            input,
            d,
            estimator,
            grid,
            out_dir,
        } => {
            let resolved = resolve_fit("mrl-grid", input, d, &estimator, &grid, out_dir, &file)?;
            commands::run_fit(resolved, true)
        }
        Command::Simulate {
            study,
            n,
            censoring,
            reps,
            estimator,
            out_dir,
        } => {
            let est = build_estimator_config(&estimator, &file)?;
            let study = study.or_else(|| file.study.clone());
            let resolved = ResolvedConfig {
                command: "simulate".into(),
                input: None,
                out_dir: commands::default_out_dir(out_dir.or_else(|| file.out_dir.clone())),
                d: 0,
                kernel: est.kernel.family,
                estimator: est,
                grid_t: None,
                grid_v: None,
                study,
                n: n.or(file.n),
                censoring: censoring.or(file.censoring),
                reps: reps.or(file.reps),
            };
            commands::run_simulate(resolved)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_fit(
    command: &str,
    input: Option<PathBuf>,
    d: Option<usize>,
    estimator: &EstimatorFlags,
    grid: &GridFlags,
    out_dir: Option<PathBuf>,
    file: &FileConfig,
) -> Result<ResolvedConfig, CliError> {
    let est = build_estimator_config(estimator, file)?;
    let d = d
        .or(file.d)
        .ok_or_else(|| CliError::Usage("--d is required".into()))?;
    if d == 0 {
        return Err(CliError::Usage("--d must be at least 1".into()));
    }
    let grid_t = match &grid.grid_t {
        Some(text) => Some(parse_scalar_list(text, "grid-t")?),
        None => file.grid_t.clone(),
    };
    let grid_v = match &grid.grid_v {
        Some(text) => Some(parse_point_list(text, d)?),
        None => file.grid_v.clone(),
    };
    Ok(ResolvedConfig {
        command: command.into(),
        input: input.or_else(|| file.input.clone()),
        out_dir: commands::default_out_dir(out_dir.or_else(|| file.out_dir.clone())),
        d,
        kernel: est.kernel.family,
        estimator: est,
        grid_t,
        grid_v,
        study: None,
        n: None,
        censoring: None,
        reps: None,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            commands::print_error_json(&err);
            ExitCode::from(err.exit_code())
        }
    }
}
