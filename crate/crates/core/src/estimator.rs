//! The index-coefficient estimating equation and its solver.
//!
//! The equation is a profile score: every nonparametric surface (the
//! conditional-mean smoothers, the smoothed Nelson-Aalen hazard, the MRL
//! surface and its derivatives) is recomputed at each trial value of beta.
//! The root is found by least-squares descent (Nelder-Mead warm-up, then
//! damped Newton with a finite-difference Jacobian) from multiple starts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MrlError, Result};
use crate::hazard::{HazardSurface, MrlSurface};
use crate::kernel::{default_bandwidths, Bandwidths, KernelSpec, DEFAULT_C_B, DEFAULT_C_H};
use crate::numeric::sample_sd;
use crate::smooth::SmootherContext;

/// Cap on the norm of a full Newton step.
const NEWTON_STEP_CAP: f64 = 0.5;
/// Bandwidth continuation ladder: each start is first solved with the index
/// bandwidth mildly inflated, which smooths the landscape for the descent
/// from distant starts, then refined at the target bandwidth. Stronger
/// inflation backfires: the equation's root drifts outward quadratically in
/// the bandwidth and can leave the searchable region entirely.
const CONTINUATION_LADDER: [f64; 2] = [1.5, 1.0];
/// Number of jittered re-descents after a stalled Newton run.
const MICRO_RESTARTS: usize = 12;
/// Standard deviation of the jitter around a stall point.
const MICRO_SCALE: f64 = 0.03;
/// Step cap during jittered re-descents, kept near the oscillation scale.
const MICRO_STEP_CAP: f64 = 0.1;
/// Per-dimension radius of the navigation leash around each start point.
/// The smooth-equation root sits within a few tenths of the
/// proportional-hazards start in every component, while runaway descents
/// drift to distances of several units before stalling; the leash blocks
/// the latter without constraining genuine roots.
const NAV_LEASH_SCALE: f64 = 0.5;
/// Number of times the efficient weight surface is (re-)estimated at the
/// current solution and the resulting frozen-weight equation re-solved.
const EFFICIENT_WEIGHT_ROUNDS: usize = 2;
/// Bandwidth inflation for the frozen efficient-weight surface. The weight
/// enters the estimating equation as a fixed function of (t, v): any smooth
/// weight keeps the equation unbiased, and only closeness to the population
/// efficient weight matters for the variance. The hazard-gradient ratio is
/// far noisier than the surfaces the equation itself smooths (it is a
/// kernel derivative estimate), so it is estimated with inflated bandwidths
/// to trade a little weight bias for a much steadier weight.
const WEIGHT_BANDWIDTH_MULT: f64 = 2.0;
/// Clamp on each component of the frozen efficient-weight ratio. The
/// population ratio lambda_2 / lambda is a logistic-type derivative bounded
/// well inside this range; the estimated ratio can blow up where the
/// estimated hazard is near zero, handing single events enormous leverage.
const WEIGHT_CLAMP: f64 = 5.0;

/// Terms whose denominators sit within this of zero are skipped and tallied.
const DENOM_GUARD: f64 = 1e-10;

/// Maximize the Cox partial likelihood (Breslow ties) and return the fitted
/// coefficient vector, or `None` if the Newton iteration degenerates.
///
/// The proportional-hazards direction is generally well correlated with the
/// index direction of the mean-residual-life model, and the partial
/// likelihood is concave, so this provides a cheap, reliable starting point
/// for the non-convex estimating-equation descent.
fn cox_direction(dataset: &Dataset) -> Option<Vec<f64>> {
    let p = dataset.p();
    let n = dataset.records().len();
    let mut order: Vec<usize> = (0..n).collect();
    let recs = dataset.records();
    order.sort_by(|&a, &b| recs[b].z.partial_cmp(&recs[a].z).unwrap());

    let mut theta = DVector::zeros(p);
    let ll_at = |th: &DVector<f64>| -> f64 {
        let mut s0 = 0.0f64;
        let mut ll = 0.0f64;
        for &i in &order {
            let eta: f64 = (0..p).map(|k| th[k] * recs[i].x[k]).sum();
            s0 += eta.exp();
            if recs[i].delta == 1 {
                ll += eta - s0.ln();
            }
        }
        ll
    };
    let mut ll = ll_at(&theta);
    for _ in 0..30 {
        let mut s0 = 0.0f64;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        for &i in &order {
            let x = DVector::from_row_slice(&recs[i].x);
            let w = (theta.dot(&x)).exp();
            s0 += w;
            s1 += w * &x;
            s2 += w * &x * x.transpose();
            if recs[i].delta == 1 {
                let xbar = &s1 / s0;
                grad += &x - &xbar;
                hess += &s2 / s0 - &xbar * xbar.transpose();
            }
        }
        let step = hess.clone().cholesky()?.solve(&grad);
        if step.norm() < 1e-8 {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let cand = &theta + alpha * &step;
            let cand_ll = ll_at(&cand);
            if cand_ll > ll {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().all(|v| v.is_finite()) {
        Some(theta.iter().copied().collect())
    } else {
        None
    }
}

/// Map a fitted direction vector to a starting value for the free lower
/// block, column-major. Each column is the direction rescaled so its pinned
/// identity-row entry equals one; columns whose pinned entry is too small
/// relative to the vector norm fall back to zero.
fn direction_to_vecl(c: &[f64], p: usize, d: usize) -> Vec<f64> {
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut vecl = vec![0.0; (p - d) * d];
    if norm == 0.0 {
        return vecl;
    }
    for j in 0..d {
        if c[j].abs() > 0.05 * norm {
            for k in d..p {
                vecl[j * (p - d) + (k - d)] = c[k] / c[j];
            }
        }
    }
    vecl
}

/// The p x d index matrix beta, parameterized by its free lower
/// (p - d) x d block; the upper d x d block is pinned to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCoefficients {
    p: usize,
    d: usize,
    /// Free block, column-major (p - d) x d; this is vecl(beta).
    lower: Vec<f64>,
}

impl IndexCoefficients {
    pub fn zero(p: usize, d: usize) -> Result<Self> {
        Self::from_vecl(p, d, vec![0.0; (p - d) * d])
    }

    pub fn from_vecl(p: usize, d: usize, lower: Vec<f64>) -> Result<Self> {
        if d == 0 || d >= p {
            return Err(MrlError::InvalidArgument(format!(
                "need 1 <= d < p, got d = {d}, p = {p}"
            )));
        }
        if lower.len() != (p - d) * d {
            return Err(MrlError::InvalidArgument(format!(
                "vecl must have length {}, got {}",
                (p - d) * d,
                lower.len()
            )));
        }
        Ok(Self { p, d, lower })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of free parameters (p - d) * d.
    pub fn n_free(&self) -> usize {
        self.lower.len()
    }

    /// The free lower block, column-major.
    pub fn vecl(&self) -> &[f64] {
        &self.lower
    }

    /// Lower-block entry at (row, col), rows indexing covariates d+1..p.
    pub fn lower_entry(&self, row: usize, col: usize) -> f64 {
        self.lower[col * (self.p - self.d) + row]
    }

    /// The materialized p x d matrix, column-major, identity block on top.
    pub fn materialize(&self) -> Vec<f64> {
        let (p, d) = (self.p, self.d);
        let mut out = vec![0.0; p * d];
        for col in 0..d {
            out[col * p + col] = 1.0;
            for row in 0..(p - d) {
                out[col * p + d + row] = self.lower[col * (p - d) + row];
            }
        }
        out
    }

    /// The index value beta' x.
    pub fn index(&self, x: &[f64]) -> Vec<f64> {
        let (p, d) = (self.p, self.d);
        debug_assert_eq!(x.len(), p);
        (0..d)
            .map(|col| {
                let mut v = x[col];
                for row in 0..(p - d) {
                    v += self.lower[col * (p - d) + row] * x[d + row];
                }
                v
            })
            .collect()
    }
}

/// Weight function g(t, v) of the estimating equation.
#[derive(Clone)]
pub enum WeightFunction {
    /// The efficient choice m12/(m1 + 1) - m2/m evaluated from the profile
    /// surfaces.
    Efficient,
    /// A user-supplied g; must return a length-d vector.
    Custom(Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

impl std::fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Efficient => write!(f, "Efficient"),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Kernel, bandwidth, trimming, and solver controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kernel: KernelSpec,
    /// Bandwidth scale constants for the default rules.
    pub c_h: f64,
    pub c_b: f64,
    /// Explicit bandwidth overrides; when unset the default rules apply,
    /// with the index standard deviations recomputed at each trial beta.
    pub h: Option<f64>,
    pub b: Option<f64>,
    /// Trimming threshold; when unset, resolved once per solve as
    /// 1e-3 times the peak sample density at the starting beta.
    pub d_n: Option<f64>,
    /// Convergence threshold on the sqrt(n)-normalized residual norm.
    pub tolerance: f64,
    pub n_starts: usize,
    pub max_simplex_evals: usize,
    pub max_newton_iters: usize,
    /// Base finite-difference step for the Newton Jacobian; the step for
    /// parameter j is fd_step * (1 + |theta_j|).
    pub fd_step: f64,
    /// Seed for the random multi-start perturbations.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            c_h: DEFAULT_C_H,
            c_b: DEFAULT_C_B,
            h: None,
            b: None,
            d_n: None,
            tolerance: 1e-6,
            n_starts: 5,
            max_simplex_evals: 60,
            max_newton_iters: 40,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(MrlError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        for (name, v) in [("c_h", self.c_h), ("c_b", self.c_b), ("fd_step", self.fd_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MrlError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("h", self.h), ("b", self.b)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(MrlError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let Some(dn) = self.d_n {
            if !(dn >= 0.0) {
                return Err(MrlError::Config(format!("d_n must be nonnegative, got {dn}")));
            }
        }
        if self.n_starts == 0 {
            return Err(MrlError::Config("need at least one start".into()));
        }
        Ok(())
    }

    /// Bandwidths for a given trial beta.
    pub fn resolve_bandwidths(&self, dataset: &Dataset, beta: &IndexCoefficients) -> Result<Bandwidths> {
        if let (Some(h), Some(b)) = (self.h, self.b) {
            return Bandwidths::new(h, b);
        }
        let d = beta.d();
        let index_sd: Vec<f64> = (0..d)
            .map(|k| sample_sd(dataset.records().iter().map(|r| beta.index(&r.x)[k])))
            .collect();
        let defaults = default_bandwidths(
            dataset.n(),
            d,
            &index_sd,
            dataset.time_sd(),
            self.c_h,
            self.c_b,
        )?;
        Bandwidths::new(self.h.unwrap_or(defaults.h), self.b.unwrap_or(defaults.b))
    }

    /// Build the smoother context at a trial beta, resolving the trimming
    /// threshold by the default rule when not set.
    pub fn context<'a>(
        &self,
        dataset: &'a Dataset,
        beta: &IndexCoefficients,
    ) -> Result<SmootherContext<'a>> {
        let bw = self.resolve_bandwidths(dataset, beta)?;
        let ctx = SmootherContext::new(dataset, beta, self.kernel, bw, 0.0)?;
        let d_n = match self.d_n {
            Some(dn) => dn,
            None => ctx.default_trim_threshold(),
        };
        SmootherContext::new(dataset, beta, self.kernel, bw, d_n)
    }
}

/// Per-event profile quantities shared by the score and the variance
/// plug-ins.
#[derive(Debug, Clone)]
pub(crate) struct EventEval {
    pub z: f64,
    /// Centered lower covariates; zero when the point is trimmed out.
    pub centered: Vec<f64>,
    pub trimmed: bool,
    pub lambda: f64,
    pub lambda2: Vec<f64>,
    pub m: f64,
    pub m1: f64,
    pub m2: Vec<f64>,
    pub m12: Vec<f64>,
}

/// Evaluate the profile surfaces at every event subject, in canonical order.
pub(crate) fn eval_events(surface: &MrlSurface<'_>) -> Vec<EventEval> {
    let ctx = &surface.hazard.ctx;
    let ds = ctx.dataset;
    let n = ds.n();
    let d = ctx.d();
    let records = ds.records();
    let event_idx: Vec<usize> = ds
        .canonical_order()
        .iter()
        .copied()
        .filter(|&j| records[j].delta == 1)
        .collect();
    event_idx
        .par_iter()
        .map(|&j| {
            let r = &records[j];
            let v = ctx.index_of(j).to_vec();
            let (curves, capture) = surface.hazard.curves_with_capture(&v, r.z);
            let trimmed = curves.weight_sum <= 0.0 || curves.weight_sum / n as f64 <= ctx.d_n;
            // Leave-one-out centering: subject i always sits in its own risk
            // set with the maximal kernel weight, which drags the risk-set
            // average toward x_i and attenuates the centered residual by an
            // amount that varies with the local index density. Dropping the
            // self term removes that systematic attenuation.
            let self_w = crate::kernel::product_kernel(
                ctx.kernel,
                ctx.bandwidths.h,
                &vec![0.0; d],
            )
            .unwrap_or(0.0);
            let loo_w = capture.suffix_w - self_w;
            let centered = if trimmed || loo_w <= 0.0 {
                vec![0.0; ds.p() - d]
            } else {
                r.x[d..]
                    .iter()
                    .zip(&capture.suffix_wxl)
                    .map(|(xl, wxl)| xl - (wxl - self_w * xl) / loo_w)
                    .collect()
            };
            let m = surface.mrl_from_curves(&curves, r.z);
            let der = surface.derivatives_from_curves(&curves, r.z);
            let lambda = curves.hazard_at(r.z, ctx);
            let lambda2 = curves.hazard_grad_at(r.z, ctx);
            EventEval {
                z: r.z,
                centered,
                trimmed,
                lambda,
                lambda2,
                m,
                m1: der.m1,
                m2: der.m2,
                m12: der.m12,
            }
        })
        .collect()
}

pub(crate) fn score_from_events(
    events: &[EventEval],
    weight: &WeightFunction,
    n: usize,
    d: usize,
    q: usize,
    index_of: impl Fn(usize) -> Vec<f64>,
) -> (Vec<f64>, usize, usize) {
    let mut out = vec![0.0; q * d];
    let mut skipped = 0usize;
    let trimmed = events.iter().filter(|ev| ev.trimmed).count();
    for (i, ev) in events.iter().enumerate() {
        let g = match weight {
            WeightFunction::Efficient => {
                if ev.m.abs() < DENOM_GUARD || (ev.m1 + 1.0).abs() < DENOM_GUARD {
                    skipped += 1;
                    continue;
                }
                ev.m12
                    .iter()
                    .zip(&ev.m2)
                    .map(|(m12, m2)| m12 / (ev.m1 + 1.0) - m2 / ev.m)
                    .collect::<Vec<f64>>()
            }
            WeightFunction::Custom(f) => {
                let g = f(ev.z, &index_of(i));
                assert_eq!(g.len(), d, "custom weight must return a length-d vector");
                g
            }
        };
        for (k, gk) in g.iter().enumerate() {
            for (r, c) in ev.centered.iter().enumerate() {
                out[k * q + r] += gk * c;
            }
        }
    }
    for slot in &mut out {
        *slot /= n as f64;
    }
    (out, skipped, trimmed)
}

/// The estimating-equation value (1/n) sum over events of
/// vec( g(Z_i, beta'X_i) (x) centered X_l ), as a vecl-ordered vector of
/// length (p - d) d.
pub fn score_equation(
    dataset: &Dataset,
    beta: &IndexCoefficients,
    weight: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let ctx = cfg.context(dataset, beta)?;
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
    let (score, _skipped, _trimmed) = score_from_events(
        &events,
        weight,
        dataset.n(),
        beta.d(),
        dataset.p() - beta.d(),
        |i| ctx.index_of(event_recs[i]).to_vec(),
    );
    Ok(score)
}

/// Solver outcome for one call to [`solve_beta`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub beta_hat: IndexCoefficients,
    /// sqrt(n) times the norm of the estimating-equation value at beta_hat.
    pub residual_norm: f64,
    /// Total score-equation evaluations across all starts.
    pub iterations: usize,
    pub converged: bool,
    /// Starts attempted beyond the first.
    pub restarts_used: usize,
    /// Events skipped because a profile denominator was within 1e-10 of zero.
    pub skipped_terms: usize,
}

struct Objective<'a> {
    dataset: &'a Dataset,
    weight: &'a WeightFunction,
    cfg: EstimatorConfig,
    p: usize,
    d: usize,
    evals: std::cell::Cell<usize>,
    last_skipped: std::cell::Cell<usize>,
    /// When set, the weight is the efficient ratio lambda_2 / lambda read
    /// off this fixed surface (estimated at a preliminary consistent beta)
    /// instead of being reprofiled at each trial beta. Estimating the weight
    /// at a consistent preliminary value leaves the first-order asymptotics
    /// of the efficient score untouched, and the resulting equation is
    /// smooth in beta, whereas the fully reprofiled efficient score
    /// oscillates on the kernel scale and is full of spurious roots.
    frozen: Option<MrlSurface<'a>>,
}

impl Objective<'_> {
    /// sqrt(n)-normalized estimating-equation value at theta.
    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        self.evals.set(self.evals.get() + 1);
        let beta = IndexCoefficients::from_vecl(self.p, self.d, theta.to_vec()).unwrap();
        let ctx = self.cfg.context(self.dataset, &beta).unwrap();
        let surface = MrlSurface::new(HazardSurface::new(ctx));
        let events = eval_events(&surface);
        let ctx = &surface.hazard.ctx;
        let records = self.dataset.records();
        let event_recs: Vec<usize> = self
            .dataset
            .canonical_order()
            .iter()
            .copied()
            .filter(|&j| records[j].delta == 1)
            .collect();
        let (score, skipped, trimmed) = if let Some(fro) = &self.frozen {
            let q = self.p - self.d;
            let mut out = vec![0.0; q * self.d];
            let mut skipped = 0usize;
            let trimmed = events.iter().filter(|ev| ev.trimmed).count();
            for (i, ev) in events.iter().enumerate() {
                let v = ctx.index_of(event_recs[i]);
                let lam = fro.hazard.hazard(ev.z, v).unwrap();
                if lam.abs() < DENOM_GUARD {
                    skipped += 1;
                    continue;
                }
                let lam2 = fro.hazard.hazard_deriv_v(ev.z, v).unwrap();
                for (k, l2) in lam2.iter().enumerate() {
                    let gk = (l2 / lam).clamp(-WEIGHT_CLAMP, WEIGHT_CLAMP);
                    for (r, c) in ev.centered.iter().enumerate() {
                        out[k * q + r] += gk * c;
                    }
                }
            }
            for slot in &mut out {
                *slot /= self.dataset.n() as f64;
            }
            (out, skipped, trimmed)
        } else {
            score_from_events(
                &events,
                self.weight,
                self.dataset.n(),
                self.d,
                self.p - self.d,
                |i| ctx.index_of(event_recs[i]).to_vec(),
            )
        };
        self.last_skipped.set(skipped);
        // A trial beta where the surfaces degenerate (most events trimmed
        // out or skipped) makes the sum vacuously small; wall it off so the
        // optimizer cannot mistake the void for a root.
        if 2 * (skipped + trimmed) > events.len() {
            return DVector::from_element(score.len(), 1e6);
        }
        let scale = (self.dataset.n() as f64).sqrt();
        DVector::from_iterator(score.len(), score.iter().map(|s| s * scale))
    }

    fn norm(&self, theta: &[f64]) -> f64 {
        self.residual(theta).norm()
    }
}

/// Nelder-Mead descent on the squared residual norm; returns the best vertex.
fn nelder_mead(obj: &Objective<'_>, start: &[f64], budget: usize) -> (Vec<f64>, f64) {
    let q = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(q + 1);
    simplex.push((start.to_vec(), obj.norm(start)));
    for i in 0..q {
        let mut v = start.to_vec();
        v[i] += 0.25 * (1.0 + v[i].abs());
        let f = obj.norm(&v);
        simplex.push((v, f));
    }
    let mut used = q + 1;
    while used < budget {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if simplex[0].1 < 1e-14 {
            break;
        }
        let centroid: Vec<f64> = (0..q)
            .map(|i| simplex[..q].iter().map(|(v, _)| v[i]).sum::<f64>() / q as f64)
            .collect();
        let worst = simplex[q].clone();
        let reflect: Vec<f64> = (0..q)
            .map(|i| centroid[i] + (centroid[i] - worst.0[i]))
            .collect();
        let fr = obj.norm(&reflect);
        used += 1;
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..q)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst.0[i]))
                .collect();
            let fe = obj.norm(&expand);
            used += 1;
            simplex[q] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[q - 1].1 {
            simplex[q] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..q)
                .map(|i| centroid[i] + 0.5 * (worst.0[i] - centroid[i]))
                .collect();
            let fc = obj.norm(&contract);
            used += 1;
            if fc < worst.1 {
                simplex[q] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    for i in 0..q {
                        item.0[i] = best[i] + 0.5 * (item.0[i] - best[i]);
                    }
                    item.1 = obj.norm(&item.0);
                    used += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}

/// Damped Newton with a forward-difference Jacobian on the residual vector.
/// Steps are capped at `step_cap` in norm: the efficient score oscillates on
/// the kernel-bandwidth scale, and an uncapped step can overshoot into a
/// degenerate region far from every root.
/// When `leash` is given as an anchor point and a radius, candidate steps
/// that leave the ball around the anchor are rejected; this keeps the local
/// refinement of an oscillatory score from wandering to a distant spurious
/// root once a trustworthy neighbourhood has been found.
fn damped_newton(
    obj: &Objective<'_>,
    start: Vec<f64>,
    tol: f64,
    max_iters: usize,
    step_cap: f64,
    leash: Option<(&[f64], f64)>,
) -> (Vec<f64>, f64) {
    let q = start.len();
    let within = |cand: &[f64]| match leash {
        None => true,
        Some((anchor, radius)) => {
            let d2: f64 = cand
                .iter()
                .zip(anchor)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() <= radius
        }
    };
    let mut theta = start;
    let mut res = obj.residual(&theta);
    let mut norm = res.norm();
    for _ in 0..max_iters {
        if norm <= tol {
            break;
        }
        let mut jac = DMatrix::zeros(q, q);
        for j in 0..q {
            let step = obj.cfg.fd_step * (1.0 + theta[j].abs());
            let mut probe = theta.clone();
            probe[j] += step;
            let res_j = obj.residual(&probe);
            for i in 0..q {
                jac[(i, j)] = (res_j[i] - res[i]) / step;
            }
        }
        let neg = -&res;
        let mut delta = match jac.clone().lu().solve(&neg) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                // Tikhonov fallback for a singular Jacobian.
                let mu = 1e-8 * jac.norm().max(1.0);
                let reg = &jac.transpose() * &jac + DMatrix::identity(q, q) * mu;
                match reg.lu().solve(&(jac.transpose() * &neg)) {
                    Some(d) => d,
                    None => break,
                }
            }
        };
        let delta_norm = delta.norm();
        if delta_norm > step_cap {
            delta *= step_cap / delta_norm;
        }
        let mut improved = false;
        let mut alpha = 1.0;
        for _ in 0..11 {
            let cand: Vec<f64> = (0..q).map(|i| theta[i] + alpha * delta[i]).collect();
            if !within(&cand) {
                alpha *= 0.5;
                continue;
            }
            let cand_res = obj.residual(&cand);
            let cand_norm = cand_res.norm();
            if cand_norm < norm {
                theta = cand;
                res = cand_res;
                norm = cand_norm;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (theta, norm)
}

/// Solve the estimating equation for the free lower block of beta.
///
/// Starts from the zero matrix plus `n_starts - 1` random perturbations
/// scaled by 0.5, stopping at the first start whose final residual passes
/// the tolerance. The equation is non-monotone, so the root-finding is
/// posed as least-squares minimization.
pub fn solve_beta(
    dataset: &Dataset,
    d: usize,
    weight: &WeightFunction,
    cfg: &EstimatorConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let p = dataset.p();
    if d == 0 || d >= p {
        return Err(MrlError::SolverPrecondition(format!(
            "need 1 <= d < p, got d = {d}, p = {p}"
        )));
    }
    let n_uncensored = dataset.records().iter().filter(|r| r.delta == 1).count();
    let min_events = 30.max(5 * p);
    if n_uncensored == 0 {
        return Err(MrlError::SolverPrecondition("all records are censored".into()));
    }
    if n_uncensored < min_events {
        return Err(MrlError::SolverPrecondition(format!(
            "need at least {min_events} uncensored events, found {n_uncensored}"
        )));
    }
    let q = (p - d) * d;

    // Freeze the trimming threshold once per solve so the objective does not
    // drift with the trial beta.
    let mut cfg_resolved = cfg.clone();
    if cfg_resolved.d_n.is_none() {
        let beta0 = IndexCoefficients::zero(p, d)?;
        let ctx = cfg.context(dataset, &beta0)?;
        cfg_resolved.d_n = Some(ctx.d_n);
    }

    // Navigation weight: the efficient score oscillates on the kernel scale,
    // and descent from a distant start lands on a spurious oscillation root.
    // The constant weight g == 1 gives a smooth equation with the same
    // population root, so the multi-start descent navigates with it and the
    // efficient score is only used for the final local refinement.
    let identity_weight: WeightFunction =
        WeightFunction::Custom(Arc::new(move |_t: f64, _v: &[f64]| vec![1.0; d]));
    let refine_efficient = matches!(weight, WeightFunction::Efficient);
    let nav_weight = if refine_efficient { &identity_weight } else { weight };

    fn stage_objective<'a>(
        dataset: &'a Dataset,
        weight: &'a WeightFunction,
        base: &EstimatorConfig,
        p: usize,
        d: usize,
        mult: f64,
    ) -> Objective<'a> {
        let mut stage_cfg = base.clone();
        stage_cfg.c_h *= mult;
        stage_cfg.h = stage_cfg.h.map(|h| h * mult);
        Objective {
            dataset,
            weight,
            cfg: stage_cfg,
            p,
            d,
            evals: std::cell::Cell::new(0),
            last_skipped: std::cell::Cell::new(0),
            frozen: None,
        }
    }
    let nav_objectives: Vec<Objective<'_>> = CONTINUATION_LADDER
        .iter()
        .map(|&mult| stage_objective(dataset, nav_weight, &cfg_resolved, p, d, mult))
        .collect();
    let obj = stage_objective(dataset, weight, &cfg_resolved, p, d, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gauss = |sd: f64| {
        // Box-Muller keeps rand_distr out of the hot path here.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    // First start: a proportional-hazards fit mapped to the free block. The
    // partial likelihood is concave and its direction tracks the index
    // direction closely, so this start usually lands in the right basin
    // immediately. Remaining starts: zero, jitters of the first start, and
    // wider random draws.
    let anchor = cox_direction(dataset)
        .map(|c| direction_to_vecl(&c, p, d))
        .unwrap_or_else(|| vec![0.0; q]);
    let mut starts: Vec<Vec<f64>> = vec![anchor.clone(), vec![0.0; q]];
    while starts.len() < cfg.n_starts.max(2) {
        let (base, sd): (&[f64], f64) = if starts.len() % 2 == 0 {
            (&anchor, 0.25)
        } else {
            (&[], 0.5)
        };
        starts.push(
            (0..q)
                .map(|i| base.get(i).copied().unwrap_or(0.0) + gauss(sd))
                .collect(),
        );
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut restarts_used = 0usize;
    for (s, start) in starts.iter().enumerate() {
        restarts_used = s;
        let mut theta = start.clone();
        let mut norm = f64::INFINITY;
        let nav_ball = (start.as_slice(), NAV_LEASH_SCALE * (q as f64).sqrt());
        for (stage, obj_stage) in nav_objectives.iter().enumerate() {
            if stage == 0 {
                let (warm, _) = nelder_mead(obj_stage, &theta, cfg.max_simplex_evals);
                if nav_ball
                    .0
                    .iter()
                    .zip(&warm)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    <= nav_ball.1
                {
                    theta = warm;
                }
            }
            let (refined, refined_norm) = damped_newton(
                obj_stage,
                theta,
                cfg.tolerance,
                cfg.max_newton_iters,
                NEWTON_STEP_CAP,
                Some(nav_ball),
            );
            theta = refined;
            norm = refined_norm;
        }
        // Efficient refinement: freeze the efficient weight surface at the
        // navigated (consistent) point and solve the resulting smooth
        // equation; repeat once with the weight re-estimated at the refined
        // value. The solution is first-order equivalent to a root of the
        // fully profiled efficient score without its oscillation pathology.
        let mut frozen_obj: Option<Objective<'_>> = None;
        if refine_efficient {
            for _ in 0..EFFICIENT_WEIGHT_ROUNDS {
                let anchor_beta = IndexCoefficients::from_vecl(p, d, theta.clone())?;
                let mut wcfg = cfg_resolved.clone();
                wcfg.c_h *= WEIGHT_BANDWIDTH_MULT;
                wcfg.c_b *= WEIGHT_BANDWIDTH_MULT;
                wcfg.h = wcfg.h.map(|h| h * WEIGHT_BANDWIDTH_MULT);
                wcfg.b = wcfg.b.map(|b| b * WEIGHT_BANDWIDTH_MULT);
                let fctx = wcfg.context(dataset, &anchor_beta)?;
                frozen_obj = Some(Objective {
                    dataset,
                    weight: nav_weight,
                    cfg: cfg_resolved.clone(),
                    p,
                    d,
                    evals: std::cell::Cell::new(0),
                    last_skipped: std::cell::Cell::new(0),
                    frozen: Some(MrlSurface::new(HazardSurface::new(fctx))),
                });
                let (refined, refined_norm) = damped_newton(
                    frozen_obj.as_ref().unwrap(),
                    theta,
                    cfg.tolerance,
                    cfg.max_newton_iters,
                    NEWTON_STEP_CAP,
                    Some(nav_ball),
                );
                theta = refined;
                norm = refined_norm;
            }
        }
        // Jittered re-descents around a stall point, in case the damped
        // Newton run above stopped at a shallow non-root minimum.
        let active_obj = frozen_obj.as_ref().unwrap_or(&obj);
        let mut micro = 0usize;
        while norm > cfg.tolerance && micro < MICRO_RESTARTS {
            let jittered: Vec<f64> = theta
                .iter()
                .map(|x| {
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    x + MICRO_SCALE * z
                })
                .collect();
            let (cand, cand_norm) = damped_newton(
                active_obj,
                jittered,
                cfg.tolerance,
                cfg.max_newton_iters / 2,
                MICRO_STEP_CAP,
                Some(nav_ball),
            );
            if cand_norm < norm {
                theta = cand;
                norm = cand_norm;
            }
            micro += 1;
        }
        let better = best.as_ref().map_or(true, |(_, bn)| norm < *bn);
        if better {
            best = Some((theta, norm));
        }
        if best.as_ref().unwrap().1 <= cfg.tolerance {
            break;
        }
    }
    let (theta, norm) = best.unwrap();
    // One final evaluation at the reported solution refreshes the skip tally.
    let _ = obj.residual(&theta);
    Ok(SolveReport {
        beta_hat: IndexCoefficients::from_vecl(p, d, theta)?,
        residual_norm: norm,
        iterations: nav_objectives
            .iter()
            .map(|o| o.evals.get())
            .sum::<usize>()
            + obj.evals.get(),
        converged: norm <= cfg.tolerance,
        restarts_used,
        skipped_terms: obj.last_skipped.get(),
    })
}
