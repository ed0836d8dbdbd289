//! Kernel-weighted conditional expectations of the at-risk process given the
//! index, E{Y(t) | b'X = v} and E{X_l Y(t) | b'X = v}, in trimmed form.
//!
//! Trimming zeroes the whole ratio wherever the local index density estimate
//! (1/n) sum_k K_h(b'X_k - v) falls at or below d_n, so a trimmed-out
//! observation contributes nothing downstream instead of propagating 0/0.

use crate::data::Dataset;
use crate::error::{MrlError, Result};
use crate::estimator::IndexCoefficients;
use crate::kernel::{product_kernel, Bandwidths, KernelSpec};

/// Everything needed to evaluate the smoothers at a trial value of beta.
pub struct SmootherContext<'a> {
    pub dataset: &'a Dataset,
    pub beta: IndexCoefficients,
    pub kernel: KernelSpec,
    pub bandwidths: Bandwidths,
    /// Trimming threshold; 0 means untrimmed.
    pub d_n: f64,
    /// Cached index values b'X_j, row-major n x d.
    index: Vec<f64>,
}

/// A smoothed value together with whether the query point was trimmed out.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed<T> {
    pub value: T,
    pub trimmed_out: bool,
}

impl<'a> SmootherContext<'a> {
    pub fn new(
        dataset: &'a Dataset,
        beta: &IndexCoefficients,
        kernel: KernelSpec,
        bandwidths: Bandwidths,
        d_n: f64,
    ) -> Result<Self> {
        if beta.p() != dataset.p() {
            return Err(MrlError::InvalidArgument(format!(
                "beta has p = {}, dataset has p = {}",
                beta.p(),
                dataset.p()
            )));
        }
        if !(d_n >= 0.0) {
            return Err(MrlError::InvalidArgument(format!(
                "trimming threshold must be nonnegative, got {d_n}"
            )));
        }
        let d = beta.d();
        let mut index = Vec::with_capacity(dataset.n() * d);
        for r in dataset.records() {
            index.extend_from_slice(&beta.index(&r.x));
        }
        Ok(Self {
            dataset,
            beta: beta.clone(),
            kernel,
            bandwidths,
            d_n,
            index,
        })
    }

    pub fn d(&self) -> usize {
        self.beta.d()
    }

    /// Index value of record j.
    pub fn index_of(&self, j: usize) -> &[f64] {
        let d = self.d();
        &self.index[j * d..(j + 1) * d]
    }

    /// Kernel weights K_h(b'X_j - v) for every record.
    pub fn weights(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut diff = vec![0.0; d];
        (0..self.dataset.n())
            .map(|j| {
                for k in 0..d {
                    diff[k] = self.index[j * d + k] - v[k];
                }
                product_kernel(self.kernel, self.bandwidths.h, &diff).unwrap()
            })
            .collect()
    }

    /// Gradient of K_h(b'X_j - v) with respect to v, row-major n x d.
    pub fn weight_grads(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        let h = self.bandwidths.h;
        let hd = h.powi(-(d as i32));
        let n = self.dataset.n();
        let mut out = vec![0.0; n * d];
        for j in 0..n {
            // d/dv_k K_h(u) with u = b'X_j - v: the chain rule brings a
            // factor -1/h on the k-th coordinate.
            let mut vals = vec![0.0; d];
            for k in 0..d {
                vals[k] = self.kernel.value((self.index[j * d + k] - v[k]) / h);
            }
            for k in 0..d {
                let mut g = -hd / h * self.kernel.deriv((self.index[j * d + k] - v[k]) / h);
                for (l, &val) in vals.iter().enumerate() {
                    if l != k {
                        g *= val;
                    }
                }
                out[j * d + k] = g;
            }
        }
        out
    }

    /// Local index density estimate (1/n) sum_j K_h(b'X_j - v).
    pub fn density(&self, v: &[f64]) -> f64 {
        self.weights(v).iter().sum::<f64>() / self.dataset.n() as f64
    }

    /// Default trimming threshold: 1e-3 times the largest kernel density
    /// estimate over the sample's own index points.
    pub fn default_trim_threshold(&self) -> f64 {
        let n = self.dataset.n();
        let mut max_dens: f64 = 0.0;
        for j in 0..n {
            let v: Vec<f64> = self.index_of(j).to_vec();
            max_dens = max_dens.max(self.density(&v));
        }
        1e-3 * max_dens
    }

    /// Trimmed Nadaraya-Watson estimate of E{Y(t) | b'X = v}.
    pub fn cond_mean_y(&self, t: f64, v: &[f64]) -> Result<Smoothed<f64>> {
        if !(t >= 0.0) {
            return Err(MrlError::InvalidArgument(format!("t must be >= 0, got {t}")));
        }
        let w = self.weights(v);
        let denom: f64 = w.iter().sum();
        if denom <= 0.0 || denom / self.dataset.n() as f64 <= self.d_n {
            return Ok(Smoothed {
                value: 0.0,
                trimmed_out: true,
            });
        }
        let num: f64 = self
            .dataset
            .records()
            .iter()
            .zip(&w)
            .filter(|(r, _)| r.z >= t)
            .map(|(_, &wj)| wj)
            .sum();
        Ok(Smoothed {
            value: num / denom,
            trimmed_out: false,
        })
    }

    /// Trimmed Nadaraya-Watson estimate of E{X_l Y(t) | b'X = v}, one entry
    /// per lower covariate.
    pub fn cond_mean_xl_y(&self, t: f64, v: &[f64]) -> Result<Smoothed<Vec<f64>>> {
        if !(t >= 0.0) {
            return Err(MrlError::InvalidArgument(format!("t must be >= 0, got {t}")));
        }
        let d = self.d();
        let p = self.dataset.p();
        if p == d {
            return Err(MrlError::NoLowerCovariates { d });
        }
        let q = p - d;
        let w = self.weights(v);
        let denom: f64 = w.iter().sum();
        if denom <= 0.0 || denom / self.dataset.n() as f64 <= self.d_n {
            return Ok(Smoothed {
                value: vec![0.0; q],
                trimmed_out: true,
            });
        }
        let mut num = vec![0.0; q];
        for (r, &wj) in self.dataset.records().iter().zip(&w) {
            if r.z >= t {
                for (k, slot) in num.iter_mut().enumerate() {
                    *slot += wj * r.x[d + k];
                }
            }
        }
        for slot in &mut num {
            *slot /= denom;
        }
        Ok(Smoothed {
            value: num,
            trimmed_out: false,
        })
    }

    /// X_l centered by the ratio of the two smoothers; the zero vector when
    /// the query point is trimmed out.
    pub fn centered_xl(&self, t: f64, v: &[f64], x_l: &[f64]) -> Result<Vec<f64>> {
        let ey = self.cond_mean_y(t, v)?;
        if ey.trimmed_out || ey.value <= 0.0 {
            return Ok(vec![0.0; x_l.len()]);
        }
        let exy = self.cond_mean_xl_y(t, v)?;
        Ok(x_l
            .iter()
            .zip(&exy.value)
            .map(|(xl, num)| xl - num / ey.value)
            .collect())
    }
}
