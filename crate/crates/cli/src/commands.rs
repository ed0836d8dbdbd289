//! The three subcommands: fit, mrl-grid, simulate.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mrl_core::{
    evaluate_grid, load_dataset, run_monte_carlo, CsvSchema, Dataset, GridRow, MonteCarloOptions,
    MrlError, MrlFit, SolveReport, Study, StudySpec, WaldRow, WeightFunction,
};

use crate::config::ResolvedConfig;
use crate::CliError;

pub fn map_core_error(e: MrlError) -> CliError {
    match e {
        MrlError::Config(_) | MrlError::InvalidArgument(_) | MrlError::Schema(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    fs::write(path, text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Free-coefficient labels matching the Wald table: beta_i for d=1,
/// beta_i_j for d>1, with i the 1-based covariate index.
fn coefficient_labels(p: usize, d: usize) -> Vec<String> {
    let q = p - d;
    (0..q * d)
        .map(|k| {
            let cov = d + k % q + 1;
            let col = k / q + 1;
            if d == 1 {
                format!("beta_{cov}")
            } else {
                format!("beta_{cov}_{col}")
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SolveReportOut {
    residual_norm: f64,
    iterations: usize,
    converged: bool,
    restarts_used: usize,
    skipped_terms: usize,
}

impl From<&SolveReport> for SolveReportOut {
    fn from(r: &SolveReport) -> Self {
        Self {
            residual_norm: r.residual_norm,
            iterations: r.iterations,
            converged: r.converged,
            restarts_used: r.restarts_used,
            skipped_terms: r.skipped_terms,
        }
    }
}

#[derive(Serialize)]
struct FitArtifact {
    config: ResolvedConfig,
    coefficients: Vec<String>,
    beta_vecl: Vec<f64>,
    /// Covariance of the free coefficients, row-major nested.
    beta_cov: Vec<Vec<f64>>,
    wald: Vec<WaldRow>,
    solve_report: SolveReportOut,
}

fn load_input(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let schema = CsvSchema::infer(&headers, "time", "event").map_err(map_core_error)?;
    load_dataset(path, &schema).map_err(map_core_error)
}

fn write_grid_csv(path: &Path, d: usize, rows: &[GridRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("v{k}")));
    header.extend(["m_hat", "Lambda_hat", "sigma_m_hat"].map(str::to_string));
    let io_err = |e: csv::Error| CliError::Runtime(format!("cannot write grid: {e}"));
    w.write_record(&header).map_err(io_err)?;
    for r in rows {
        let mut rec = vec![format!("{}", r.t)];
        rec.extend(r.v.iter().map(|x| format!("{x}")));
        rec.push(format!("{}", r.m_hat));
        rec.push(format!("{}", r.lambda_cum_hat));
        rec.push(format!("{}", r.sigma_m_hat));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("cannot flush grid: {e}")))?;
    Ok(())
}

/// Fit the model and write fit.json; optionally also a surface grid CSV.
/// A non-converged solve still writes artifacts but exits degraded.
pub fn run_fit(mut resolved: ResolvedConfig, grid_required: bool) -> Result<(), CliError> {
    let input = resolved
        .input
        .clone()
        .ok_or_else(|| CliError::Usage("--input is required".into()))?;
    if grid_required && (resolved.grid_t.is_none() || resolved.grid_v.is_none()) {
        return Err(CliError::Usage(
            "mrl-grid requires both --grid-t and --grid-v".into(),
        ));
    }
    let dataset = load_input(&input)?;
    if resolved.d >= dataset.p() {
        return Err(CliError::Usage(format!(
            "d={} must be smaller than the number of covariates {}",
            resolved.d,
            dataset.p()
        )));
    }
    ensure_out_dir(&resolved.out_dir)?;
    let fit = MrlFit::fit(
        &dataset,
        resolved.d,
        &WeightFunction::Efficient,
        &resolved.estimator,
    )
    .map_err(map_core_error)?;
    resolved.estimator = fit.config.clone();

    let q = fit.beta_hat.n_free();
    let artifact = FitArtifact {
        coefficients: coefficient_labels(dataset.p(), resolved.d),
        beta_vecl: fit.beta_hat.vecl().to_vec(),
        beta_cov: (0..q)
            .map(|i| (0..q).map(|j| fit.beta_cov[(i, j)]).collect())
            .collect(),
        wald: fit.wald_summary(),
        solve_report: (&fit.solve_report).into(),
        config: resolved.clone(),
    };
    write_json(&resolved.out_dir.join("fit.json"), &artifact)?;

    if let (Some(grid_t), Some(grid_v)) = (&resolved.grid_t, &resolved.grid_v) {
        let surface = fit.surface().map_err(map_core_error)?;
        let rows = evaluate_grid(&surface, grid_t, grid_v).map_err(map_core_error)?;
        write_grid_csv(&resolved.out_dir.join("grid.csv"), resolved.d, &rows)?;
    }

    if !fit.solve_report.converged {
        return Err(CliError::Degraded(format!(
            "solver did not converge: residual {:.3e} > tolerance {:.1e}",
            fit.solve_report.residual_norm, fit.config.tolerance
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSidecar<'a> {
    generated_at: String,
    config: &'a ResolvedConfig,
    report: &'a mrl_core::MonteCarloReport,
}

fn write_report_csv(
    path: &Path,
    labels: &[String],
    report: &mrl_core::MonteCarloReport,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| CliError::Runtime(format!("cannot write report: {e}"));
    let mut header = vec!["metric".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for (metric, values) in [
        ("bias", &report.bias),
        ("sd", &report.sd),
        ("mse", &report.mse),
    ] {
        let mut rec = vec![metric.to_string()];
        rec.extend(values.iter().map(|x| format!("{x:.6}")));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("cannot flush report: {e}")))?;
    Ok(())
}

/// Run the Monte Carlo harness and write the Table-1-shaped CSV plus a JSON
/// sidecar. An unreliable report (>20% failed fits) is still written but
/// exits degraded.
pub fn run_simulate(resolved: ResolvedConfig) -> Result<(), CliError> {
    let study: Study = resolved
        .study
        .as_deref()
        .ok_or_else(|| CliError::Usage("--study is required".into()))?
        .parse()
        .map_err(map_core_error)?;
    let n = resolved.n.unwrap_or(500);
    let reps = resolved.reps.unwrap_or(100);
    let censoring = resolved.censoring.unwrap_or(0.0);
    let spec = StudySpec::new(study, n, censoring, resolved.estimator.seed)
        .map_err(map_core_error)?;
    ensure_out_dir(&resolved.out_dir)?;
    let report = run_monte_carlo(
        &spec,
        reps,
        &resolved.estimator,
        &MonteCarloOptions::default(),
    )
    .map_err(map_core_error)?;

    let labels = coefficient_labels(study.p(), study.d());
    write_report_csv(&resolved.out_dir.join("report.csv"), &labels, &report)?;
    let sidecar = SimulateSidecar {
        generated_at: chrono::Utc::now().to_rfc3339(),
        config: &resolved,
        report: &report,
    };
    write_json(&resolved.out_dir.join("report.json"), &sidecar)?;

    if report.unreliable {
        return Err(CliError::Degraded(format!(
            "{} of {} replications failed to converge; report written but unreliable",
            report.failed, report.reps_requested
        )));
    }
    Ok(())
}

/// Emit the machine-readable error JSON on stderr.
pub fn print_error_json(err: &CliError) {
    let payload = serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }
    });
    let mut stderr = std::io::stderr();
    let _ = writeln!(stderr, "{payload}");
}

pub fn default_out_dir(requested: Option<PathBuf>) -> PathBuf {
    requested.unwrap_or_else(|| PathBuf::from("."))
}
