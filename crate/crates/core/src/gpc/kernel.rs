use faer::Mat;
use serde::{Deserialize, Serialize};

use super::GpcError;

pub const DEFAULT_JITTER: f64 = 1e-8;

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Self {
        Self {
            signal_variance,
            lengthscales,
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn isotropic(signal_variance: f64, lengthscale: f64, ndim: usize) -> Self {
        Self::new(signal_variance, vec![lengthscale; ndim])
    }

    pub fn ndim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self, ndim: usize) -> Result<(), GpcError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.signal_variance)
            || !self.lengthscales.iter().all(|&l| positive(l))
            || !(self.jitter.is_finite() && self.jitter >= 0.0)
        {
            return Err(GpcError::InvalidKernel(format!("{self:?}")));
        }
        if self.lengthscales.len() != ndim {
            return Err(GpcError::DimensionMismatch {
                expected: ndim,
                found: self.lengthscales.len(),
            });
        }
        Ok(())
    }

    /// `σ_f² · exp(-½ Σ_d (a_d - b_d)² / ℓ_d²)`.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let z = (x - y) / l;
                z * z
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// Gram matrix of `xs` with `jitter` added on the diagonal.
    pub(crate) fn gram(&self, xs: &[Vec<f64>], jitter: f64) -> Mat<f64> {
        let n = xs.len();
        let mut k = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            k.write(j, j, self.signal_variance + jitter);
            for i in j + 1..n {
                let v = self.eval(&xs[i], &xs[j]);
                k.write(i, j, v);
                k.write(j, i, v);
            }
        }
        k
    }

    /// `n × m` cross-covariance between training inputs and queries.
    pub(crate) fn cross(&self, xs: &[Vec<f64>], queries: &[Vec<f64>]) -> Mat<f64> {
        Mat::from_fn(xs.len(), queries.len(), |i, j| self.eval(&xs[i], &queries[j]))
    }
}

/// Kernel evaluation `k(a, b)`.
pub fn kernel_eval(a: &[f64], b: &[f64], theta: &KernelParams) -> f64 {
    theta.eval(a, b)
}
