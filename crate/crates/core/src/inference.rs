//! Asymptotic covariance of the index coefficients and pointwise variance
//! of the fitted MRL surface.
//!
//! With the efficient weight the covariance of vecl(beta-hat) is the
//! inverse of the plug-in Gram matrix of per-event efficient scores,
//! scaled by 1/n. For custom weights the general sandwich A^-1 B A^-T is
//! used, with A a finite-difference Jacobian of the estimating equation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MrlError, Result};
use crate::estimator::{
    eval_events, score_equation, solve_beta, EstimatorConfig, IndexCoefficients, SolveReport,
    WeightFunction,
};
use crate::hazard::{HazardSurface, MrlSurface};
use crate::numeric::normal_cdf;

/// Guard against division by a vanishing smoothed hazard.
const DENOM_GUARD: f64 = 1e-10;

/// Maximum condition number before the Gram matrix is declared singular.
const MAX_CONDITION: f64 = 1e12;

fn invert_checked(g: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let dim = g.nrows();
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(MrlError::SingularInformation {
            cond,
            matrix: g.transpose().as_slice().to_vec(),
            dim,
        });
    }
    let inv = svd
        .pseudo_inverse(0.0)
        .map_err(|_| MrlError::SingularInformation {
            cond,
            matrix: g.transpose().as_slice().to_vec(),
            dim,
        })?;
    Ok(inv * scale)
}

/// Per-event efficient-score Gram matrix (1/n) sum of u u' with
/// u = vec( (lambda2-hat / lambda-hat) (x) centered x_l ), before inversion.
pub fn efficient_score_gram(
    dataset: &Dataset,
    beta_hat: &IndexCoefficients,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let ctx = cfg.context(dataset, beta_hat)?;
    let surface = MrlSurface::new(HazardSurface::new(ctx));
    let events = eval_events(&surface);
    let d = beta_hat.d();
    let q = dataset.p() - d;
    let dim = q * d;
    let mut gram = DMatrix::zeros(dim, dim);
    let mut u = DVector::zeros(dim);
    for ev in &events {
        if ev.trimmed || ev.lambda.abs() < DENOM_GUARD {
            continue;
        }
        for k in 0..d {
            let ratio = ev.lambda2[k] / ev.lambda;
            for r in 0..q {
                u[k * q + r] = ratio * ev.centered[r];
            }
        }
        gram.syger(1.0 / dataset.n() as f64, &u, &u, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for i in 0..dim {
        for j in (i + 1)..dim {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    Ok(gram)
}

/// Covariance of vecl(beta-hat) under the efficient weight:
/// (1/n) times the inverse of the plug-in Gram matrix.
pub fn beta_covariance_efficient(
    dataset: &Dataset,
    beta_hat: &IndexCoefficients,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    let gram = efficient_score_gram(dataset, beta_hat, cfg)?;
    invert_checked(&gram, 1.0 / dataset.n() as f64)
}

/// General sandwich covariance (1/n) A^-1 B A^-T for a custom weight,
/// with B the Gram matrix of per-event terms and A the finite-difference
/// Jacobian of the estimating equation at beta-hat.
///
/// Pass a config whose `d_n` is already resolved so the Jacobian probes see
/// the same trimming threshold as the solution.
pub fn beta_covariance_sandwich(
    dataset: &Dataset,
    beta_hat: &IndexCoefficients,
    weight: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let ctx = cfg.context(dataset, beta_hat)?;
    let surface = MrlSurface::new(HazardSurface::new(ctx));
    let events = eval_events(&surface);
    let ctx = &surface.hazard.ctx;
    let records = dataset.records();
    let event_recs: Vec<usize> = dataset
        .canonical_order()
        .iter()
        .copied()
        .filter(|&j| records[j].delta == 1)
        .collect();
    let d = beta_hat.d();
    let q = dataset.p() - d;
    let dim = q * d;
    let mut b_mat = DMatrix::zeros(dim, dim);
    let mut u = DVector::zeros(dim);
    for (i, ev) in events.iter().enumerate() {
        let g = match weight {
            WeightFunction::Efficient => {
                if ev.m.abs() < DENOM_GUARD || (ev.m1 + 1.0).abs() < DENOM_GUARD {
                    continue;
                }
                ev.m12
                    .iter()
                    .zip(&ev.m2)
                    .map(|(m12, m2)| m12 / (ev.m1 + 1.0) - m2 / ev.m)
                    .collect::<Vec<f64>>()
            }
            WeightFunction::Custom(f) => f(ev.z, ctx.index_of(event_recs[i])),
        };
        for k in 0..d {
            for r in 0..q {
                u[k * q + r] = g[k] * ev.centered[r];
            }
        }
        b_mat.syger(1.0 / dataset.n() as f64, &u, &u, 1.0);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            b_mat[(i, j)] = b_mat[(j, i)];
        }
    }

    let base = score_equation(dataset, beta_hat, weight, cfg)?;
    let mut a_mat = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut probe = beta_hat.vecl().to_vec();
        let step = cfg.fd_step * (1.0 + probe[j].abs());
        probe[j] += step;
        let beta_j = IndexCoefficients::from_vecl(dataset.p(), d, probe)?;
        let score_j = score_equation(dataset, &beta_j, weight, cfg)?;
        for i in 0..dim {
            a_mat[(i, j)] = (score_j[i] - base[i]) / step;
        }
    }
    let a_inv = invert_checked(&a_mat, 1.0)?;
    let cov = &a_inv * b_mat * a_inv.transpose() / dataset.n() as f64;
    // Symmetrize away finite-difference asymmetry.
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Pointwise variance estimate for the MRL surface at (t, v): the plug-in
/// double sum over ordered event times, scaled by exp(2 Lambda-hat) and the
/// squared-kernel integral. The exponential is folded inside the squared
/// bracket so large cumulative hazards cannot overflow.
pub fn mrl_variance(surface: &MrlSurface<'_>, t: f64, v: &[f64]) -> Result<f64> {
    let ctx = &surface.hazard.ctx;
    let tau = ctx.dataset.tau();
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MrlError::InvalidArgument(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    if t >= tau {
        return Err(MrlError::BeyondFollowUp { t, tau });
    }
    let curves = surface.hazard.curves(v);
    let n = ctx.dataset.n() as f64;
    let n_t = curves.times.len();
    let cum_t = curves.cum_at(t);
    // cum_before[j] = Lambda-hat(tau_(j)) exclusive of the jump at tau_(j),
    // i.e. Lambda-hat(tau_(j-1)).
    let cum_before = |j: usize| if j == 0 { 0.0 } else { curves.cum[j - 1] };
    // Shared first bracket term: the tail integral of exp(Lambda(t) - Lambda)
    // discretized over event times above t.
    let mut term1 = 0.0;
    for j in 0..n_t {
        if curves.times[j] > t {
            term1 += (cum_t - cum_before(j)).exp()
                * (curves.times[j] - t.max(if j == 0 { 0.0 } else { curves.times[j - 1] }));
        }
    }
    let mut total = 0.0;
    for i in 0..n_t {
        let prev = if i == 0 { 0.0 } else { curves.times[i - 1] };
        let denom = if i == 0 {
            curves.weight_sum
        } else {
            curves.risk_denom[i - 1]
        } / n;
        if denom <= 0.0 {
            continue;
        }
        let cut = t.max(prev);
        let mut term2 = 0.0;
        for j in 0..n_t {
            if curves.times[j] > cut {
                let lower = if j == 0 { 0.0 } else { curves.times[j - 1] };
                term2 += (cum_t - cum_before(j)).exp() * (curves.times[j] - prev.max(lower));
            }
        }
        let bracket = if prev < t { term1 } else { 0.0 } + term2;
        total += curves.jump[i] / denom * bracket * bracket;
    }
    let ksq = ctx.kernel.square_integral().powi(curves.d as i32);
    Ok(ksq * total)
}

/// One row of the Wald table for a free coefficient of beta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaldRow {
    /// Covariate position (d+1-based row of beta, reported 1-based overall).
    pub covariate: usize,
    /// Index column, 1-based.
    pub column: usize,
    pub estimate: f64,
    pub se: f64,
    pub z_value: f64,
    pub p_value: f64,
}

/// Wald table from a coefficient vector and its covariance; entries follow
/// vecl order (columns stacked).
pub fn wald_summary(beta_hat: &IndexCoefficients, beta_cov: &DMatrix<f64>) -> Vec<WaldRow> {
    let d = beta_hat.d();
    let p = beta_hat.p();
    let q = p - d;
    beta_hat
        .vecl()
        .iter()
        .enumerate()
        .map(|(idx, &est)| {
            let se = beta_cov[(idx, idx)].max(0.0).sqrt();
            let z = if se > 0.0 { est / se } else { f64::INFINITY * est.signum() };
            let p_value = if se > 0.0 {
                2.0 * (1.0 - normal_cdf(z.abs()))
            } else if est == 0.0 {
                1.0
            } else {
                0.0
            };
            WaldRow {
                covariate: d + (idx % q) + 1,
                column: idx / q + 1,
                estimate: est,
                se,
                z_value: z,
                p_value,
            }
        })
        .collect()
}

/// A fitted model: coefficients, their covariance, and enough context to
/// evaluate the MRL surface and its pointwise variance on demand.
#[derive(Debug)]
pub struct MrlFit<'a> {
    dataset: &'a Dataset,
    pub beta_hat: IndexCoefficients,
    /// Covariance of vecl(beta-hat).
    pub beta_cov: DMatrix<f64>,
    pub solve_report: SolveReport,
    /// The config actually used, with the trimming threshold resolved.
    pub config: EstimatorConfig,
}

impl<'a> MrlFit<'a> {
    /// Solve the estimating equation and attach the covariance estimate.
    pub fn fit(
        dataset: &'a Dataset,
        d: usize,
        weight: &WeightFunction,
        cfg: &EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut resolved = cfg.clone();
        if resolved.d_n.is_none() {
            let beta0 = IndexCoefficients::zero(dataset.p(), d)?;
            let ctx = cfg.context(dataset, &beta0)?;
            resolved.d_n = Some(ctx.d_n);
        }
        let solve_report = solve_beta(dataset, d, weight, &resolved)?;
        let beta_hat = solve_report.beta_hat.clone();
        let beta_cov = match weight {
            WeightFunction::Efficient => {
                beta_covariance_efficient(dataset, &beta_hat, &resolved)?
            }
            WeightFunction::Custom(_) => {
                beta_covariance_sandwich(dataset, &beta_hat, weight, &resolved)?
            }
        };
        Ok(Self {
            dataset,
            beta_hat,
            beta_cov,
            solve_report,
            config: resolved,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    /// The fitted MRL surface at beta-hat. Cheap to build; each evaluation
    /// does its own kernel pass.
    pub fn surface(&self) -> Result<MrlSurface<'_>> {
        let ctx = self.config.context(self.dataset, &self.beta_hat)?;
        Ok(MrlSurface::new(HazardSurface::new(ctx)))
    }

    pub fn wald_summary(&self) -> Vec<WaldRow> {
        wald_summary(&self.beta_hat, &self.beta_cov)
    }
}

/// One evaluated grid point of the fitted surfaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub t: f64,
    pub v: Vec<f64>,
    pub m_hat: f64,
    pub lambda_cum_hat: f64,
    pub sigma_m_hat: f64,
}

/// Evaluate m-hat, Lambda-hat, and sigma-m-hat over the product of the
/// given time and index grids, in row-major (t outer, v inner) order.
pub fn evaluate_grid(
    surface: &MrlSurface<'_>,
    grid_t: &[f64],
    grid_v: &[Vec<f64>],
) -> Result<Vec<GridRow>> {
    let points: Vec<(f64, &Vec<f64>)> = grid_t
        .iter()
        .flat_map(|&t| grid_v.iter().map(move |v| (t, v)))
        .collect();
    points
        .par_iter()
        .map(|&(t, v)| {
            let m_hat = surface.mrl(t, v)?;
            let lambda_cum_hat = surface.hazard.cum_hazard(t, v)?;
            let sigma_m_hat = mrl_variance(surface, t, v)?.sqrt();
            Ok(GridRow {
                t,
                v: v.clone(),
                m_hat,
                lambda_cum_hat,
                sigma_m_hat,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;
    use crate::kernel::KernelSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn fixed_cfg(h: f64, b: f64) -> EstimatorConfig {
        EstimatorConfig {
            h: Some(h),
            b: Some(b),
            d_n: Some(0.0),
            ..Default::default()
        }
    }

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let z: f64 = rng.gen_range(0.1..4.0);
                    let delta = u8::from(rng.gen_bool(0.8));
                    SurvivalRecord::new(x, z, delta).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    /// Independent assembly of the Gram matrix from the public smoother and
    /// hazard APIs, one event at a time.
    fn gram_via_public_api(
        ds: &Dataset,
        beta: &IndexCoefficients,
        cfg: &EstimatorConfig,
    ) -> DMatrix<f64> {
        let ctx = cfg.context(ds, beta).unwrap();
        let surface = HazardSurface::new(ctx);
        let d = beta.d();
        let q = ds.p() - d;
        let dim = q * d;
        let mut gram = DMatrix::zeros(dim, dim);
        for r in ds.records() {
            if r.delta != 1 {
                continue;
            }
            let v = beta.index(&r.x);
            let lam = surface.hazard(r.z, &v).unwrap();
            let lam2 = surface.hazard_deriv_v(r.z, &v).unwrap();
            if lam.abs() < 1e-10 {
                continue;
            }
            let ctx = &surface.ctx;
            let centered = ctx.centered_xl(r.z, &v, &r.x[d..]).unwrap();
            let mut u = DVector::zeros(dim);
            for k in 0..d {
                for s in 0..q {
                    u[k * q + s] = lam2[k] / lam * centered[s];
                }
            }
            gram += &u * u.transpose() / ds.n() as f64;
        }
        gram
    }

    #[test]
    fn gram_matches_public_api_oracle() {
        let ds = random_dataset(25, 3, 7);
        let beta = IndexCoefficients::from_vecl(3, 1, vec![0.4, -0.2]).unwrap();
        let cfg = fixed_cfg(0.6, 0.5);
        let fast = efficient_score_gram(&ds, &beta, &cfg).unwrap();
        let slow = gram_via_public_api(&ds, &beta, &cfg);
        assert!((&fast - &slow).norm() < 1e-10, "norm {}", (&fast - &slow).norm());
    }

    #[test]
    fn gram_symmetric_psd() {
        let ds = random_dataset(60, 4, 3);
        let beta = IndexCoefficients::from_vecl(4, 1, vec![0.3, -0.5, 0.1]).unwrap();
        let cfg = fixed_cfg(0.5, 0.4);
        let gram = efficient_score_gram(&ds, &beta, &cfg).unwrap();
        assert!((&gram - gram.transpose()).norm() < 1e-12);
        let eigs = gram.clone().symmetric_eigen().eigenvalues;
        assert!(eigs.iter().all(|&e| e >= -1e-10), "eigs {eigs:?}");
        let cov = beta_covariance_efficient(&ds, &beta, &cfg).unwrap();
        let cov_eigs = cov.symmetric_eigen().eigenvalues;
        assert!(cov_eigs.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn singular_gram_reported() {
        // One lower covariate constant: its centered value is identically
        // zero, so the Gram matrix has a zero row/column.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = Dataset::new(
            (0..40)
                .map(|_| {
                    let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 3.0];
                    SurvivalRecord::new(x, rng.gen_range(0.1..3.0), 1).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let beta = IndexCoefficients::from_vecl(3, 1, vec![0.2, 0.1]).unwrap();
        let err = beta_covariance_efficient(&ds, &beta, &fixed_cfg(0.5, 0.4)).unwrap_err();
        match err {
            MrlError::SingularInformation { cond, dim, .. } => {
                assert_eq!(dim, 2);
                assert!(!cond.is_finite() || cond > 1e12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sandwich_agrees_in_scale_with_plugin_on_efficient_weight() {
        let ds = random_dataset(80, 3, 11);
        let beta = IndexCoefficients::from_vecl(3, 1, vec![0.2, -0.3]).unwrap();
        let cfg = fixed_cfg(0.6, 0.5);
        let plugin = beta_covariance_efficient(&ds, &beta, &cfg).unwrap();
        let sandwich =
            beta_covariance_sandwich(&ds, &beta, &WeightFunction::Efficient, &cfg).unwrap();
        assert!((&sandwich - sandwich.transpose()).norm() < 1e-12);
        // The two estimators coincide only asymptotically; at n=80 just
        // require the same order of magnitude on the diagonal.
        for i in 0..2 {
            let ratio = sandwich[(i, i)] / plugin[(i, i)];
            assert!(ratio.is_finite() && ratio > 0.0, "ratio {ratio}");
        }
    }

    /// Direct transliteration of the variance display for the
    /// identical-index three-event dataset, written out number by number.
    #[test]
    fn variance_matches_transliteration_oracle() {
        let ds = Dataset::new(
            (1..=3)
                .map(|i| SurvivalRecord::new(vec![0.0, 1.0], i as f64, 1).unwrap())
                .collect(),
        )
        .unwrap();
        let beta = IndexCoefficients::from_vecl(2, 1, vec![0.0]).unwrap();
        let cfg = fixed_cfg(1.0, 0.5);
        let ctx = cfg.context(&ds, &beta).unwrap();
        let surface = MrlSurface::new(HazardSurface::new(ctx));
        let t = 1.5;
        let got = mrl_variance(&surface, t, &[0.0]).unwrap();

        // Identical indices: every kernel weight is K(0)/h = K(0); the
        // weights cancel from the Nelson-Aalen increments.
        let k0 = 0.3989422804014327f64;
        let cum = [1.0 / 3.0, 1.0 / 3.0 + 1.0 / 2.0, 1.0 / 3.0 + 1.0 / 2.0 + 1.0];
        let cum_before: [f64; 3] = [0.0, cum[0], cum[1]];
        let times = [1.0f64, 2.0, 3.0];
        let jumps = [1.0 / 3.0, 1.0 / 2.0, 1.0];
        // Risk sets at tau_(0)=0, tau_(1)=1, tau_(2)=2: all three subjects
        // have z >= 1, so the first two denominators coincide.
        let denoms = [3.0 * k0 / 3.0, 3.0 * k0 / 3.0, 2.0 * k0 / 3.0];
        let cum_t = cum[0]; // Lambda-hat(1.5) = 1/3
        let mut term1 = 0.0;
        for j in 0..3 {
            if times[j] > t {
                let lower = if j == 0 { 0.0 } else { times[j - 1] };
                term1 += (cum_t - cum_before[j]).exp() * (times[j] - t.max(lower));
            }
        }
        let mut expect = 0.0;
        for i in 0..3 {
            let prev = if i == 0 { 0.0 } else { times[i - 1] };
            let cut = t.max(prev);
            let mut term2 = 0.0;
            for j in 0..3 {
                if times[j] > cut {
                    let lower = if j == 0 { 0.0 } else { times[j - 1] };
                    term2 += (cum_t - cum_before[j]).exp() * (times[j] - prev.max(lower));
                }
            }
            let bracket = if prev < t { term1 } else { 0.0 } + term2;
            expect += jumps[i] / denoms[i] * bracket * bracket;
        }
        expect *= 1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert!(
            (got - expect).abs() < 1e-12,
            "got {got}, transliteration {expect}"
        );
        assert!(got >= 0.0);
    }

    #[test]
    fn variance_time_scaling_is_quadratic() {
        let ds = random_dataset(40, 2, 9);
        let scaled = Dataset::new(
            ds.records()
                .iter()
                .map(|r| SurvivalRecord::new(r.x.clone(), 3.0 * r.z, r.delta).unwrap())
                .collect(),
        )
        .unwrap();
        let beta = IndexCoefficients::from_vecl(2, 1, vec![0.3]).unwrap();
        let cfg = fixed_cfg(0.6, 0.5);
        let s1 = MrlSurface::new(HazardSurface::new(cfg.context(&ds, &beta).unwrap()));
        let s2 = MrlSurface::new(HazardSurface::new(cfg.context(&scaled, &beta).unwrap()));
        let v = [0.1];
        let a = mrl_variance(&s1, 0.8, &v).unwrap();
        let b = mrl_variance(&s2, 2.4, &v).unwrap();
        assert!((b - 9.0 * a).abs() <= 1e-10 * b.abs().max(1.0), "{b} vs {}", 9.0 * a);
    }

    #[test]
    fn variance_rejects_out_of_range_time() {
        let ds = random_dataset(20, 2, 1);
        let beta = IndexCoefficients::from_vecl(2, 1, vec![0.0]).unwrap();
        let cfg = fixed_cfg(0.6, 0.5);
        let s = MrlSurface::new(HazardSurface::new(cfg.context(&ds, &beta).unwrap()));
        assert!(matches!(
            mrl_variance(&s, ds.tau() + 1.0, &[0.0]),
            Err(MrlError::BeyondFollowUp { .. })
        ));
    }

    #[test]
    fn wald_reference_values() {
        let beta = IndexCoefficients::from_vecl(3, 1, vec![0.0, 1.96]).unwrap();
        let cov = DMatrix::identity(2, 2);
        let rows = wald_summary(&beta, &cov);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].covariate, 2);
        assert_eq!(rows[1].covariate, 3);
        assert!((rows[0].p_value - 1.0).abs() < 1e-12);
        assert!((rows[1].p_value - 0.05).abs() < 1e-3);
        // Monotone decreasing in |estimate| / se.
        let more = wald_summary(
            &IndexCoefficients::from_vecl(3, 1, vec![2.5, 1.0]).unwrap(),
            &cov,
        );
        assert!(more[0].p_value < more[1].p_value);
    }

    #[test]
    fn fit_assembles_covariance_and_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = Dataset::new(
            (0..120)
                .map(|_| {
                    let x1: f64 = rng.gen_range(-1.0..1.0);
                    let x2: f64 = rng.gen_range(-1.0..1.0);
                    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let t = -u.ln() / (x1 + 0.6 * x2).exp();
                    SurvivalRecord::new(vec![x1, x2], t, 1).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let cfg = EstimatorConfig {
            max_simplex_evals: 120,
            ..Default::default()
        };
        let fit = MrlFit::fit(&ds, 1, &WeightFunction::Efficient, &cfg).unwrap();
        assert!(fit.solve_report.converged);
        assert!(fit.beta_cov[(0, 0)] > 0.0);
        assert!(fit.config.d_n.is_some());
        let surface = fit.surface().unwrap();
        let rows = evaluate_grid(&surface, &[0.2, 0.5], &[vec![0.0], vec![0.5]]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.m_hat > 0.0 && r.sigma_m_hat >= 0.0));
        let wald = fit.wald_summary();
        assert_eq!(wald.len(), 1);
        assert!(wald[0].se > 0.0);
    }

    #[test]
    fn custom_weight_fit_uses_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let ds = Dataset::new(
            (0..100)
                .map(|_| {
                    let x1: f64 = rng.gen_range(-1.0..1.0);
                    let x2: f64 = rng.gen_range(-1.0..1.0);
                    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let t = -u.ln() / (x1 + 0.4 * x2).exp();
                    SurvivalRecord::new(vec![x1, x2], t, 1).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let w = WeightFunction::Custom(Arc::new(|_t: f64, v: &[f64]| vec![1.0; v.len()]));
        let cfg = EstimatorConfig {
            kernel: KernelSpec::default(),
            max_simplex_evals: 120,
            ..Default::default()
        };
        let fit = MrlFit::fit(&ds, 1, &w, &cfg).unwrap();
        assert!((fit.beta_cov.clone() - fit.beta_cov.transpose()).norm() < 1e-12);
        assert!(fit.beta_cov[(0, 0)] > 0.0);
    }
}
