//! Kernel-smoothed Nelson-Aalen cumulative hazard, the smoothed hazard, the
//! mean residual life surface, and their index derivatives.
//!
//! All quantities at a fixed index value v reduce to one pass over the
//! records sorted by observed time: suffix sums give the risk-set kernel
//! totals at every distinct event time, the jumps and their v-gradients
//! follow, and the time integrals of exp(-Lambda) are exact piecewise
//! constant sums over the event-time partition. Exponentials are always
//! combined as exp(Lambda(t) - Lambda(s)) with s >= t, so nothing here can
//! overflow even when the cumulative hazard is large.

use crate::error::{MrlError, Result};
use crate::numeric::adaptive_simpson;
use crate::smooth::SmootherContext;

/// Nelson-Aalen-type step curves localized at a single index value.
#[derive(Debug, Clone)]
pub(crate) struct LocalCurves {
    pub d: usize,
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// Trimmed jump of Lambda-hat at each event time.
    pub jump: Vec<f64>,
    /// Gradient of each jump with respect to v, row-major n_times x d.
    pub jump_grad: Vec<f64>,
    /// Lambda-hat at each event time (jumps included).
    pub cum: Vec<f64>,
    /// Lambda2-hat (gradient of Lambda-hat) at each event time.
    pub cum_grad: Vec<f64>,
    /// Untrimmed risk-set kernel total D(tau_k) = sum_{z_j >= tau_k} w_j.
    pub risk_denom: Vec<f64>,
    /// sum_j w_j over all records.
    pub weight_sum: f64,
}

/// Suffix sums captured while crossing a requested time point, used by the
/// estimating equation to read off the conditional-mean smoothers at
/// t = Z_i without a second pass.
#[derive(Debug, Clone)]
pub(crate) struct RiskCapture {
    /// sum of w_j over records with z_j >= t_cap.
    pub suffix_w: f64,
    /// sum of w_j * x_{l,j} over records with z_j >= t_cap.
    pub suffix_wxl: Vec<f64>,
}

impl LocalCurves {
    /// Number of event times <= t.
    fn pos(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    pub fn cum_at(&self, t: f64) -> f64 {
        match self.pos(t) {
            0 => 0.0,
            k => self.cum[k - 1],
        }
    }

    pub fn cum_grad_at(&self, t: f64) -> Vec<f64> {
        match self.pos(t) {
            0 => vec![0.0; self.d],
            k => self.cum_grad[(k - 1) * self.d..k * self.d].to_vec(),
        }
    }

    /// Exact step integrals over [t, upper]:
    /// i0 = int exp{-(Lambda(s) - Lambda(t))} ds and
    /// i1 = int Lambda2(s) exp{-(Lambda(s) - Lambda(t))} ds.
    pub fn tail_integrals(&self, t: f64, upper: f64) -> (f64, Vec<f64>) {
        let d = self.d;
        let cum_t = self.cum_at(t);
        let k0 = self.pos(t);
        let mut i0 = 0.0;
        let mut i1 = vec![0.0; d];
        let mut left = t;
        let mut cur_cum = cum_t;
        let mut cur_grad = self.cum_grad_at(t);
        for k in k0..self.times.len() {
            let right = self.times[k].min(upper);
            if right > left {
                let weight = (right - left) * (cum_t - cur_cum).exp();
                i0 += weight;
                for (slot, g) in i1.iter_mut().zip(&cur_grad) {
                    *slot += weight * g;
                }
            }
            left = self.times[k];
            if left >= upper {
                break;
            }
            cur_cum = self.cum[k];
            cur_grad.copy_from_slice(&self.cum_grad[k * d..(k + 1) * d]);
        }
        if upper > left {
            let weight = (upper - left) * (cum_t - cur_cum).exp();
            i0 += weight;
            for (slot, g) in i1.iter_mut().zip(&cur_grad) {
                *slot += weight * g;
            }
        }
        (i0, i1)
    }

    /// Time-kernel-smoothed hazard at t.
    pub fn hazard_at(&self, t: f64, ctx: &SmootherContext<'_>) -> f64 {
        let b = ctx.bandwidths.b;
        self.times
            .iter()
            .zip(&self.jump)
            .map(|(&tk, &j)| ctx.kernel.value((tk - t) / b) / b * j)
            .sum()
    }

    /// Index gradient of the smoothed hazard at t.
    pub fn hazard_grad_at(&self, t: f64, ctx: &SmootherContext<'_>) -> Vec<f64> {
        let b = ctx.bandwidths.b;
        let mut out = vec![0.0; self.d];
        for (k, &tk) in self.times.iter().enumerate() {
            let kb = ctx.kernel.value((tk - t) / b) / b;
            for (slot, g) in out
                .iter_mut()
                .zip(&self.jump_grad[k * self.d..(k + 1) * self.d])
            {
                *slot += kb * g;
            }
        }
        out
    }
}

/// The kernel-smoothed Nelson-Aalen surface Lambda-hat(t, v) and the
/// smoothed hazard lambda-hat(t, v) with their index derivatives.
pub struct HazardSurface<'a> {
    pub ctx: SmootherContext<'a>,
    integration_upper: f64,
}

impl<'a> HazardSurface<'a> {
    pub fn new(ctx: SmootherContext<'a>) -> Self {
        let integration_upper = ctx.dataset.tau();
        Self {
            ctx,
            integration_upper,
        }
    }

    /// Upper end of the MRL integration range; equals the dataset's tau.
    pub fn integration_upper(&self) -> f64 {
        self.integration_upper
    }

    pub(crate) fn curves(&self, v: &[f64]) -> LocalCurves {
        self.curves_with_capture(v, f64::INFINITY).0
    }

    /// Build the local curves at v, additionally capturing the risk-set
    /// suffix sums at `t_cap` (pass infinity to skip).
    pub(crate) fn curves_with_capture(&self, v: &[f64], t_cap: f64) -> (LocalCurves, RiskCapture) {
        let ctx = &self.ctx;
        let ds = ctx.dataset;
        let n = ds.n();
        let d = ctx.d();
        let p = ds.p();
        let q = p - d;
        let d_n = ctx.d_n;
        let w = ctx.weights(v);
        let wg = ctx.weight_grads(v);
        let times = ds.ordered_event_times();
        let nt = times.len();
        let records = ds.records();

        let mut denom = vec![0.0; nt];
        let mut denom_grad = vec![0.0; nt * d];
        let mut num = vec![0.0; nt];
        let mut num_grad = vec![0.0; nt * d];
        let mut sw = 0.0;
        let mut swg = vec![0.0; d];
        let mut cap_w = 0.0;
        let mut cap_wxl = vec![0.0; q];
        let mut cap_wxl_acc = vec![0.0; q];
        let mut cap_done = !t_cap.is_finite();
        let mut k = nt;

        // Descending sweep over observed times; the canonical order makes
        // every suffix sum independent of the input row order.
        for &j in ds.canonical_order().iter().rev() {
            let r = &records[j];
            while k > 0 && r.z < times[k - 1] {
                denom[k - 1] = sw;
                denom_grad[(k - 1) * d..k * d].copy_from_slice(&swg);
                k -= 1;
            }
            if !cap_done && r.z < t_cap {
                cap_w = sw;
                cap_wxl.copy_from_slice(&cap_wxl_acc);
                cap_done = true;
            }
            sw += w[j];
            for (slot, g) in swg.iter_mut().zip(&wg[j * d..(j + 1) * d]) {
                *slot += g;
            }
            for (slot, xl) in cap_wxl_acc.iter_mut().zip(&r.x[d..]) {
                *slot += w[j] * xl;
            }
            if r.delta == 1 {
                // After the while loop, times[k-1] is exactly this record's
                // observed time.
                debug_assert!(k > 0 && r.z == times[k - 1]);
                num[k - 1] += w[j];
                for (slot, g) in num_grad[(k - 1) * d..k * d].iter_mut().zip(&wg[j * d..(j + 1) * d])
                {
                    *slot += g;
                }
            }
        }
        while k > 0 {
            denom[k - 1] = sw;
            denom_grad[(k - 1) * d..k * d].copy_from_slice(&swg);
            k -= 1;
        }
        if !cap_done {
            cap_w = sw;
            cap_wxl.copy_from_slice(&cap_wxl_acc);
        }

        let nf = n as f64;
        let mut jump = vec![0.0; nt];
        let mut jump_grad = vec![0.0; nt * d];
        let mut cum = vec![0.0; nt];
        let mut cum_grad = vec![0.0; nt * d];
        let mut run = 0.0;
        let mut run_grad = vec![0.0; d];
        for kk in 0..nt {
            let dk = denom[kk];
            if dk > 0.0 && dk / nf > d_n {
                jump[kk] = num[kk] / dk;
                for l in 0..d {
                    jump_grad[kk * d + l] = num_grad[kk * d + l] / dk
                        - num[kk] * denom_grad[kk * d + l] / (dk * dk);
                }
            }
            run += jump[kk];
            cum[kk] = run;
            for l in 0..d {
                run_grad[l] += jump_grad[kk * d + l];
                cum_grad[kk * d + l] = run_grad[l];
            }
        }

        (
            LocalCurves {
                d,
                times: times.to_vec(),
                jump,
                jump_grad,
                cum,
                cum_grad,
                risk_denom: denom,
                weight_sum: sw,
            },
            RiskCapture {
                suffix_w: cap_w,
                suffix_wxl: cap_wxl,
            },
        )
    }

    /// Lambda-hat(t, v): the kernel-smoothed Nelson-Aalen estimator, a
    /// nondecreasing step function of t with jumps at the event times.
    pub fn cum_hazard(&self, t: f64, v: &[f64]) -> Result<f64> {
        check_nonneg(t)?;
        Ok(self.curves(v).cum_at(t))
    }

    /// Lambda2-hat(t, v): the analytic gradient of `cum_hazard` in v.
    pub fn cum_hazard_deriv_v(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_nonneg(t)?;
        Ok(self.curves(v).cum_grad_at(t))
    }

    /// lambda-hat(t, v): the time-kernel-smoothed hazard.
    pub fn hazard(&self, t: f64, v: &[f64]) -> Result<f64> {
        check_nonneg(t)?;
        Ok(self.curves(v).hazard_at(t, &self.ctx))
    }

    /// lambda2-hat(t, v): the analytic gradient of `hazard` in v.
    pub fn hazard_deriv_v(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_nonneg(t)?;
        Ok(self.curves(v).hazard_grad_at(t, &self.ctx))
    }
}

fn check_nonneg(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(MrlError::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    Ok(())
}

/// Derivatives of the MRL surface returned by [`MrlSurface::mrl_derivatives`].
#[derive(Debug, Clone, PartialEq)]
pub struct MrlDerivatives {
    /// Time derivative m1-hat.
    pub m1: f64,
    /// Index gradient m2-hat.
    pub m2: Vec<f64>,
    /// Mixed derivative m12-hat.
    pub m12: Vec<f64>,
}

/// The estimated mean residual life surface m-hat(t, v) and derivatives.
///
/// The time integral is truncated at tau, the largest observed time:
/// Lambda-hat is constant beyond the last event, so the untruncated
/// integral would diverge. This is why the estimate degrades as t
/// approaches tau.
pub struct MrlSurface<'a> {
    pub hazard: HazardSurface<'a>,
}

impl<'a> MrlSurface<'a> {
    pub fn new(hazard: HazardSurface<'a>) -> Self {
        Self { hazard }
    }

    fn check_t(&self, t: f64) -> Result<()> {
        check_nonneg(t)?;
        let tau = self.hazard.integration_upper();
        if t >= tau {
            return Err(MrlError::BeyondFollowUp { t, tau });
        }
        Ok(())
    }

    /// m-hat(t, v) = exp{Lambda-hat(t, v)} int_t^tau exp{-Lambda-hat(s, v)} ds.
    pub fn mrl(&self, t: f64, v: &[f64]) -> Result<f64> {
        self.check_t(t)?;
        let curves = self.hazard.curves(v);
        Ok(curves.tail_integrals(t, self.hazard.integration_upper()).0)
    }

    /// The plug-in derivative estimators (m1, m2, m12). The identity
    /// (m1 + 1) / m = lambda-hat holds exactly by construction.
    pub fn mrl_derivatives(&self, t: f64, v: &[f64]) -> Result<MrlDerivatives> {
        self.check_t(t)?;
        let curves = self.hazard.curves(v);
        Ok(self.derivatives_from_curves(&curves, t))
    }

    pub(crate) fn mrl_from_curves(&self, curves: &LocalCurves, t: f64) -> f64 {
        curves.tail_integrals(t, self.hazard.integration_upper()).0
    }

    pub(crate) fn derivatives_from_curves(&self, curves: &LocalCurves, t: f64) -> MrlDerivatives {
        let ctx = &self.hazard.ctx;
        let (m, i1) = curves.tail_integrals(t, self.hazard.integration_upper());
        let lambda = curves.hazard_at(t, ctx);
        let lambda2 = curves.hazard_grad_at(t, ctx);
        let cum_grad = curves.cum_grad_at(t);
        let m1 = lambda * m - 1.0;
        let m2: Vec<f64> = cum_grad
            .iter()
            .zip(&i1)
            .map(|(l2, j)| l2 * m - j)
            .collect();
        let m12: Vec<f64> = lambda2
            .iter()
            .zip(&m2)
            .map(|(l2, m2k)| l2 * m + lambda * m2k)
            .collect();
        MrlDerivatives { m1, m2, m12 }
    }
}

/// The model identity linking the MRL function to survival:
/// S(t) = m(0)/m(t) exp{-int_0^t du/m(u)}. Used as a test oracle tying the
/// MRL surface back to a survival function.
pub fn survival_from_mrl(m0: f64, m_fn: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
    check_nonneg(t)?;
    let mt = m_fn(t);
    if !(m0 > 0.0 && mt > 0.0) {
        return Err(MrlError::NonPositiveMrl(t));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let integral = adaptive_simpson(
        &|u| {
            let m = m_fn(u);
            if m > 0.0 {
                1.0 / m
            } else {
                f64::NAN
            }
        },
        0.0,
        t,
        1e-10,
    );
    if !integral.is_finite() {
        return Err(MrlError::NonPositiveMrl(t));
    }
    Ok(m0 / mt * (-integral).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SurvivalRecord};
    use crate::estimator::IndexCoefficients;
    use crate::kernel::{Bandwidths, KernelSpec};

    fn surface_fixture(
        z: &[f64],
        delta: &[u8],
        x1: &[f64],
        h: f64,
        b: f64,
    ) -> (Dataset, IndexCoefficients) {
        let records = z
            .iter()
            .zip(delta)
            .zip(x1)
            .map(|((&t, &d), &a)| SurvivalRecord::new(vec![a, 0.0], t, d).unwrap())
            .collect();
        let _ = (h, b);
        (
            Dataset::new(records).unwrap(),
            IndexCoefficients::from_vecl(2, 1, vec![0.0]).unwrap(),
        )
    }

    fn hazard_of<'a>(
        ds: &'a Dataset,
        beta: &'a IndexCoefficients,
        h: f64,
        b: f64,
    ) -> HazardSurface<'a> {
        let ctx = SmootherContext::new(
            ds,
            beta,
            KernelSpec::default(),
            Bandwidths::new(h, b).unwrap(),
            0.0,
        )
        .unwrap();
        HazardSurface::new(ctx)
    }

    #[test]
    fn identical_indices_reproduce_nelson_aalen() {
        let (ds, beta) = surface_fixture(
            &[1.0, 2.0, 3.0],
            &[1, 1, 1],
            &[0.0, 0.0, 0.0],
            1.0,
            1.0,
        );
        let surf = hazard_of(&ds, &beta, 1.0, 1.0);
        assert_eq!(surf.cum_hazard(0.0, &[0.0]).unwrap(), 0.0);
        let got = surf.cum_hazard(3.0, &[0.0]).unwrap();
        assert!((got - 11.0 / 6.0).abs() < 1e-14);
        let mid = surf.cum_hazard(2.5, &[0.0]).unwrap();
        assert!((mid - (1.0 / 3.0 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn all_censored_gives_zero_hazard() {
        let (ds, beta) = surface_fixture(
            &[1.0, 2.0, 3.0],
            &[0, 0, 0],
            &[0.5, -0.5, 0.0],
            1.0,
            1.0,
        );
        let surf = hazard_of(&ds, &beta, 1.0, 1.0);
        for t in [0.0, 1.5, 3.0] {
            assert_eq!(surf.cum_hazard(t, &[0.0]).unwrap(), 0.0);
            assert_eq!(surf.hazard(t, &[0.0]).unwrap(), 0.0);
            assert_eq!(surf.cum_hazard_deriv_v(t, &[0.0]).unwrap(), vec![0.0]);
            assert_eq!(surf.hazard_deriv_v(t, &[0.0]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn hand_smoothed_hazard() {
        // z = (2, 3) both events, identical indices, gaussian b = 1, t = 2:
        // K_b(0)/2 + K_b(1)/1.
        let (ds, beta) = surface_fixture(&[2.0, 3.0], &[1, 1], &[0.0, 0.0], 1.0, 1.0);
        let surf = hazard_of(&ds, &beta, 1.0, 1.0);
        let got = surf.hazard(2.0, &[0.0]).unwrap();
        let expect = 0.3989422804014327 / 2.0 + 0.24197072451914337;
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.441442).abs() < 1e-5);
        // Far beyond tau the time kernel has decayed to nothing.
        assert!(surf.hazard(3.0 + 8.0, &[0.0]).unwrap() < 1e-8);
    }

    #[test]
    fn symmetric_configuration_has_zero_index_derivative() {
        // Two mirrored covariates, shared event time; K' is odd so the
        // gradient cancels at v = 0.
        let (ds, beta) = surface_fixture(&[1.0, 1.0], &[1, 1], &[0.6, -0.6], 1.0, 1.0);
        let surf = hazard_of(&ds, &beta, 1.0, 1.0);
        let g = surf.cum_hazard_deriv_v(2.0, &[0.0]).unwrap();
        assert!(g[0].abs() < 1e-14);
        let gl = surf.hazard_deriv_v(1.0, &[0.0]).unwrap();
        assert!(gl[0].abs() < 1e-14);
        assert_eq!(surf.cum_hazard_deriv_v(0.0, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (ds, beta) = surface_fixture(
            &[0.7, 1.1, 1.9, 2.4, 3.0, 0.9, 1.5],
            &[1, 0, 1, 1, 0, 1, 1],
            &[0.3, -0.8, 1.2, 0.1, -0.4, 0.9, -1.1],
            0.8,
            0.6,
        );
        let surf = hazard_of(&ds, &beta, 0.8, 0.6);
        let step = 1e-4;
        for (t, v) in [(0.5, 0.2), (1.3, -0.4), (2.1, 0.7)] {
            let up = surf.cum_hazard(t, &[v + step]).unwrap();
            let dn = surf.cum_hazard(t, &[v - step]).unwrap();
            let fd = (up - dn) / (2.0 * step);
            let an = surf.cum_hazard_deriv_v(t, &[v]).unwrap()[0];
            assert!(
                (an - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                "Lambda2 mismatch at t={t}, v={v}: {an} vs {fd}"
            );

            let up = surf.hazard(t, &[v + step]).unwrap();
            let dn = surf.hazard(t, &[v - step]).unwrap();
            let fd = (up - dn) / (2.0 * step);
            let an = surf.hazard_deriv_v(t, &[v]).unwrap()[0];
            assert!(
                (an - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                "lambda2 mismatch at t={t}, v={v}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn cum_hazard_nondecreasing_step_in_t() {
        let (ds, beta) = surface_fixture(
            &[0.7, 1.1, 1.9, 2.4, 3.0],
            &[1, 1, 0, 1, 1],
            &[0.3, -0.8, 1.2, 0.1, -0.4],
            0.8,
            0.6,
        );
        let surf = hazard_of(&ds, &beta, 0.8, 0.6);
        let mut prev = 0.0;
        for i in 0..60 {
            let t = 0.06 * i as f64;
            let cur = surf.cum_hazard(t, &[0.1]).unwrap();
            assert!(cur >= prev);
            prev = cur;
        }
        // Jumps occur exactly at event times.
        for &et in ds.ordered_event_times() {
            let before = surf.cum_hazard(et - 1e-9, &[0.1]).unwrap();
            let after = surf.cum_hazard(et, &[0.1]).unwrap();
            assert!(after > before);
        }
    }

    #[test]
    fn hand_mrl_from_step_integration() {
        let (ds, beta) = surface_fixture(
            &[1.0, 2.0, 3.0],
            &[1, 1, 1],
            &[0.0, 0.0, 0.0],
            1.0,
            1.0,
        );
        let surf = MrlSurface::new(hazard_of(&ds, &beta, 1.0, 1.0));
        let got = surf.mrl(0.0, &[0.0]).unwrap();
        let expect = 1.0 + (-1.0f64 / 3.0).exp() + (-5.0f64 / 6.0).exp();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 2.151129).abs() < 1e-6);
        // Just below tau only the last sliver remains.
        let t = 3.0 - 1e-6;
        let tail = surf.mrl(t, &[0.0]).unwrap();
        assert!((tail - (3.0 - t)).abs() < 1e-12);
        assert!(surf.mrl(3.0, &[0.0]).is_err());
    }

    #[test]
    fn construction_identity_and_m2_finite_difference() {
        let (ds, beta) = surface_fixture(
            &[0.7, 1.1, 1.9, 2.4, 3.0, 0.9, 1.5],
            &[1, 0, 1, 1, 0, 1, 1],
            &[0.3, -0.8, 1.2, 0.1, -0.4, 0.9, -1.1],
            0.8,
            0.6,
        );
        let hs = hazard_of(&ds, &beta, 0.8, 0.6);
        let surf = MrlSurface::new(hs);
        let step = 1e-4;
        for (t, v) in [(0.4, 0.1), (1.2, -0.3), (2.0, 0.5)] {
            let m = surf.mrl(t, &[v]).unwrap();
            let der = surf.mrl_derivatives(t, &[v]).unwrap();
            let lam = surf.hazard.hazard(t, &[v]).unwrap();
            assert!(
                ((der.m1 + 1.0) / m - lam).abs() <= 1e-12 * lam.abs().max(1.0),
                "identity broken at t={t}, v={v}"
            );
            let up = surf.mrl(t, &[v + step]).unwrap();
            let dn = surf.mrl(t, &[v - step]).unwrap();
            let fd = (up - dn) / (2.0 * step);
            assert!(
                (der.m2[0] - fd).abs() <= 1e-4 * fd.abs().max(1e-2),
                "m2 mismatch at t={t}, v={v}: {} vs {fd}",
                der.m2[0]
            );
        }
    }

    #[test]
    fn mrl_positive_on_follow_up() {
        let (ds, beta) = surface_fixture(
            &[0.7, 1.1, 1.9, 2.4, 3.0],
            &[1, 1, 0, 1, 1],
            &[0.3, -0.8, 1.2, 0.1, -0.4],
            0.8,
            0.6,
        );
        let surf = MrlSurface::new(hazard_of(&ds, &beta, 0.8, 0.6));
        for i in 0..29 {
            let t = 0.1 * i as f64;
            assert!(surf.mrl(t, &[0.0]).unwrap() > 0.0);
        }
    }

    #[test]
    fn exponential_oracle_curves() {
        // A synthetic Lambda = lambda0 * t step approximation: dense event
        // grid with constant jumps. The MRL should be close to 1/lambda0
        // away from the truncation boundary.
        let lambda0 = 0.8;
        let nt = 4000;
        let dt = 0.01;
        let times: Vec<f64> = (1..=nt).map(|k| k as f64 * dt).collect();
        let jump: Vec<f64> = vec![lambda0 * dt; nt];
        let cum: Vec<f64> = (1..=nt).map(|k| lambda0 * dt * k as f64).collect();
        let curves = LocalCurves {
            d: 1,
            times: times.clone(),
            jump,
            jump_grad: vec![0.0; nt],
            cum,
            cum_grad: vec![0.0; nt],
            risk_denom: vec![1.0; nt],
            weight_sum: 1.0,
        };
        let upper = nt as f64 * dt;
        let (m, _) = curves.tail_integrals(1.0, upper);
        assert!((m - 1.0 / lambda0).abs() < 0.01, "m = {m}");
        let (m2, _) = curves.tail_integrals(5.0, upper);
        assert!((m2 - 1.0 / lambda0).abs() < 0.01);
    }

    #[test]
    fn survival_from_mrl_identity() {
        let lambda0 = 0.7;
        let m_const = move |_t: f64| 1.0 / lambda0;
        for t in [0.0, 0.5, 1.7] {
            let s = survival_from_mrl(1.0 / lambda0, &m_const, t).unwrap();
            assert!((s - (-lambda0 * t).exp()).abs() < 1e-9);
        }
        assert_eq!(survival_from_mrl(1.0, &|_| 1.0, 0.0).unwrap(), 1.0);
        assert!(survival_from_mrl(1.0, &|_| -1.0, 1.0).is_err());
    }
}
