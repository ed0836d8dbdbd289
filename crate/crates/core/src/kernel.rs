//! Kernel functions, their derivatives, multivariate product kernels, and
//! the default bandwidth rules.
//!
//! Both families are symmetric order-2 kernels integrating to one. The
//! gaussian kernel is the default: the derivative estimators need K'
//! everywhere and the surface-variance formula uses a closed form of
//! int K^2(u) du. The quartic (biweight) kernel is offered for compact
//! support.

use serde::{Deserialize, Serialize};

use crate::error::{MrlError, Result};
use crate::numeric::geometric_mean;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Quartic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Kernel order nu; both built-in families have order 2.
    pub order: u32,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            order: 2,
        }
    }
}

impl KernelSpec {
    pub fn quartic() -> Self {
        Self {
            family: KernelFamily::Quartic,
            order: 2,
        }
    }

    /// K(u).
    pub fn value(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelFamily::Quartic => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - u * u;
                    0.9375 * s * s
                }
            }
        }
    }

    /// K'(u) = dK/du; an odd function.
    pub fn deriv(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => -u * INV_SQRT_2PI * (-0.5 * u * u).exp(),
            KernelFamily::Quartic => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    -3.75 * u * (1.0 - u * u)
                }
            }
        }
    }

    /// int K^2(u) du, used by the surface-variance plug-in.
    pub fn square_integral(&self) -> f64 {
        match self.family {
            // 1 / (2 sqrt(pi))
            KernelFamily::Gaussian => 0.5 / std::f64::consts::PI.sqrt(),
            // (15/16)^2 * int (1-u^2)^4 du over [-1, 1] = 5/7
            KernelFamily::Quartic => 5.0 / 7.0,
        }
    }
}

/// K_h(u) = h^{-d} prod_j K(u_j / h) for a d-dimensional argument.
pub fn product_kernel(spec: KernelSpec, h: f64, u: &[f64]) -> Result<f64> {
    if u.is_empty() {
        return Err(MrlError::InvalidArgument(
            "product kernel needs dimension d >= 1".into(),
        ));
    }
    let mut out = h.powi(-(u.len() as i32));
    for &uj in u {
        out *= spec.value(uj / h);
    }
    Ok(out)
}

/// Smoothing scales in the index direction (h) and time direction (b).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub h: f64,
    pub b: f64,
}

impl Bandwidths {
    pub fn new(h: f64, b: f64) -> Result<Self> {
        if !(h > 0.0 && b > 0.0 && h.is_finite() && b.is_finite()) {
            return Err(MrlError::InvalidArgument(format!(
                "bandwidths must be positive, got h = {h}, b = {b}"
            )));
        }
        Ok(Self { h, b })
    }
}

pub const DEFAULT_C_H: f64 = 1.0;
pub const DEFAULT_C_B: f64 = 1.0;

/// Plug-in scale defaults: h = c_h * geomean(index_sd) * n^{-1/(d+4)} and
/// b = c_b * time_sd * n^{-1/4}.
///
/// The asymptotic theory constrains the bandwidth rates to an undersmoothing
/// regime (nh^{2nu} -> 0, nh^{d+2}b -> infinity) without giving a
/// finite-sample rule; these classical plug-in scales are a practical
/// default and both constants are overridable in the estimator config.
pub fn default_bandwidths(
    n: usize,
    d: usize,
    index_sd: &[f64],
    time_sd: f64,
    c_h: f64,
    c_b: f64,
) -> Result<Bandwidths> {
    if n < 10 {
        return Err(MrlError::InsufficientSample { n, min: 10 });
    }
    if index_sd.len() != d || d == 0 {
        return Err(MrlError::InvalidArgument(format!(
            "need {d} index standard deviations, got {}",
            index_sd.len()
        )));
    }
    if index_sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) || !(time_sd > 0.0) {
        return Err(MrlError::InvalidArgument(
            "standard deviations must be positive".into(),
        ));
    }
    let nf = n as f64;
    let h = c_h * geometric_mean(index_sd) * nf.powf(-1.0 / (d as f64 + 4.0));
    let b = c_b * time_sd * nf.powf(-0.25);
    Bandwidths::new(h, b)
}
