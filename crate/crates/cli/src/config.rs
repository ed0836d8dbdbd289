//! Run configuration: flag parsing helpers and config-file merging.
//!
//! A TOML file supplies defaults; command-line flags win on conflict. The
//! merged, fully resolved configuration is embedded in every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mrl_core::{EstimatorConfig, KernelFamily, KernelSpec};

use crate::CliError;

/// Keys accepted in the optional TOML config file. Every key has a flag
/// counterpart; flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub d: Option<usize>,
    pub kernel: Option<String>,
    pub h: Option<f64>,
    pub b: Option<f64>,
    pub dn: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub grid_t: Option<Vec<f64>>,
    pub grid_v: Option<Vec<Vec<f64>>>,
    pub study: Option<String>,
    pub n: Option<usize>,
    pub censoring: Option<f64>,
    pub reps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))
    }
}

/// Estimator-related flags shared by all subcommands.
#[derive(Debug, Clone, clap::Args)]
pub struct EstimatorFlags {
    /// Kernel family: gaussian or quartic.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Index bandwidth override (default: scaled n^(-1/(d+4)) rule).
    #[arg(long)]
    pub h: Option<f64>,
    /// Time bandwidth override (default: scaled n^(-1/4) rule).
    #[arg(long)]
    pub b: Option<f64>,
    /// Trimming threshold for small risk-set denominators.
    #[arg(long)]
    pub dn: Option<f64>,
    /// Convergence tolerance on the normalized residual norm.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed for solver restarts (and data generation in simulate).
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn parse_kernel(name: &str) -> Result<KernelSpec, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(KernelSpec::default()),
        "quartic" => Ok(KernelSpec::quartic()),
        other => Err(CliError::Usage(format!(
            "unknown kernel '{other}' (expected gaussian or quartic)"
        ))),
    }
}

/// Merge file defaults and flags into an estimator configuration.
pub fn build_estimator_config(
    flags: &EstimatorFlags,
    file: &FileConfig,
) -> Result<EstimatorConfig, CliError> {
    let mut cfg = EstimatorConfig::default();
    if let Some(name) = flags.kernel.as_deref().or(file.kernel.as_deref()) {
        cfg.kernel = parse_kernel(name)?;
    }
    cfg.h = flags.h.or(file.h);
    cfg.b = flags.b.or(file.b);
    cfg.d_n = flags.dn.or(file.dn);
    if let Some(tol) = flags.tolerance.or(file.tolerance) {
        cfg.tolerance = tol;
    }
    if let Some(seed) = flags.seed.or(file.seed) {
        cfg.seed = seed;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid estimator configuration: {e}")))?;
    Ok(cfg)
}

/// Parse a comma-separated list of reals (a time grid).
pub fn parse_scalar_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number '{s}' in --{flag}")))
        })
        .collect()
}

/// Parse index-grid points: points separated by ';', components by ','.
/// For d=1 a plain comma list is also accepted.
pub fn parse_point_list(text: &str, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let points: Vec<Vec<f64>> = if text.contains(';') {
        text.split(';')
            .map(|p| parse_scalar_list(p, "grid-v"))
            .collect::<Result<_, _>>()?
    } else if d == 1 {
        parse_scalar_list(text, "grid-v")?
            .into_iter()
            .map(|x| vec![x])
            .collect()
    } else {
        vec![parse_scalar_list(text, "grid-v")?]
    };
    for p in &points {
        if p.len() != d {
            return Err(CliError::Usage(format!(
                "grid point {p:?} has {} components, expected d={d}",
                p.len()
            )));
        }
    }
    Ok(points)
}

/// The fully resolved configuration echoed into artifacts for provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub d: usize,
    pub kernel: KernelFamily,
    pub estimator: EstimatorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_v: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censoring: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
}
