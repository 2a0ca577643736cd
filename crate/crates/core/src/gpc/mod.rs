//! Binary Gaussian Process classification with a Laplace-approximate posterior.
//!
//! Labels are `+1` (collision) and `-1` (no collision) with a logistic
//! likelihood and a zero-mean prior. Inputs live in the unit cube obtained by
//! normalizing raw parameters with the box bounds; the kernel is a
//! squared exponential with one lengthscale per dimension.
//!
//! Prediction follows the usual two steps: the latent posterior at a query is
//! Gaussian with mean `k_*ᵀ ∇log p(y|f̂)` and variance
//! `k_** - k_*ᵀ (K + W⁻¹)⁻¹ k_*`, and the class probability is the logistic
//! function averaged over that Gaussian (32-node Gauss–Hermite).

mod kernel;
mod laplace;
mod linalg;
mod optimize;
pub mod quadrature;

pub use kernel::{kernel_eval, KernelParams, DEFAULT_JITTER};
pub use laplace::{laplace_fit, laplace_fit_from, MAX_NEWTON_ITERS, PSI_TOLERANCE};
pub use optimize::{
    optimize_hyperparams, HyperBounds, HyperOptOptions, HyperOptResult, NelderMead, RestartRecord,
};

use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::{LabeledSample, ParameterBox};
use crate::scenario::Outcome;
use linalg::{matvec, solve_lower};
use quadrature::sigmoid_gaussian_integral;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Queries are predicted in blocks of this many columns.
const PREDICT_BLOCK: usize = 512;

#[derive(Debug, Error)]
pub enum GpcError {
    #[error("kernel matrix not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("Newton iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("invalid training data: {0}")]
    InvalidTraining(String),
    #[error("test set is empty; accuracy is undefined")]
    EmptyTestSet,
    #[error("all {restarts} optimizer restarts failed; last error: {last}")]
    AllRestartsFailed { restarts: usize, last: Box<GpcError> },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
}

/// Normalized inputs with ±1 labels, stored sorted by input coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub bounds: ParameterBox,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(bounds: ParameterBox, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, GpcError> {
        if x.is_empty() {
            return Err(GpcError::InvalidTraining("no training points".into()));
        }
        if x.len() != y.len() {
            return Err(GpcError::InvalidTraining(format!(
                "{} inputs but {} labels",
                x.len(),
                y.len()
            )));
        }
        if let Some(bad) = x.iter().find(|p| p.len() != bounds.ndim()) {
            return Err(GpcError::DimensionMismatch {
                expected: bounds.ndim(),
                found: bad.len(),
            });
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(GpcError::InvalidTraining("labels must be +1 or -1".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GpcError::InvalidTraining("non-finite input".into()));
        }
        // Canonical order: the posterior does not depend on the order of the
        // data, and sorting makes the floating-point work independent of it too.
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&i, &j| {
            x[i].iter()
                .zip(&x[j])
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let x = order.iter().map(|&i| x[i].clone()).collect();
        let y = order.iter().map(|&i| y[i]).collect();
        Ok(Self { bounds, x, y })
    }

    pub(crate) fn new_unchecked(bounds: ParameterBox, x: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        Self { bounds, x, y }
    }

    /// Normalizes raw scenario samples with `bounds`.
    pub fn from_samples(bounds: ParameterBox, samples: &[LabeledSample]) -> Result<Self, GpcError> {
        let x = samples
            .iter()
            .map(|s| bounds.normalize(&s.params.as_array()))
            .collect();
        let y = samples.iter().map(|s| s.outcome.label()).collect();
        Self::new(bounds, x, y)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.bounds.ndim()
    }

    pub fn require_both_classes(&self) -> Result<(), GpcError> {
        let pos = self.y.iter().any(|&v| v > 0.0);
        let neg = self.y.iter().any(|&v| v < 0.0);
        if pos && neg {
            Ok(())
        } else {
            Err(GpcError::SingleClass)
        }
    }

    /// Same inputs with every label negated.
    pub fn flipped(&self) -> Self {
        Self {
            bounds: self.bounds.clone(),
            x: self.x.clone(),
            y: self.y.iter().map(|v| -v).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub latent_mean: f64,
    pub latent_var: f64,
    pub prob_collision: f64,
    /// Query lies outside the unit cube of the training box.
    pub extrapolated: bool,
}

/// Trained classifier: Laplace mode plus the factors needed for prediction.
#[derive(Debug, Clone)]
pub struct GpcModel {
    pub training: TrainingSet,
    pub kernel: KernelParams,
    pub log_marginal: f64,
    f_hat: Vec<f64>,
    grad: Vec<f64>,
    sqrt_w: Vec<f64>,
    chol_b: Mat<f64>,
}

impl GpcModel {
    /// Rebuilds the cached factors at `f_hat`. When `a = K⁻¹ f̂` from the
    /// Newton iteration is given, the log marginal likelihood is computed too.
    pub(crate) fn assemble(
        training: TrainingSet,
        kernel: KernelParams,
        f_hat: Vec<f64>,
        k: &Mat<f64>,
        a: Option<&[f64]>,
    ) -> Result<Self, GpcError> {
        let fac = laplace::factorize(k, &training.y, &f_hat).ok_or(
            GpcError::NotPositiveDefinite {
                jitter: kernel.jitter,
            },
        )?;
        let log_marginal = match a {
            Some(a) => {
                let quad: f64 = linalg::dot(a, &f_hat);
                let lik: f64 = training
                    .y
                    .iter()
                    .zip(&f_hat)
                    .map(|(&y, &f)| laplace::log_likelihood_term(y, f))
                    .sum();
                let half_logdet: f64 = (0..fac.chol_b.nrows())
                    .map(|i| fac.chol_b.read(i, i).ln())
                    .sum();
                -0.5 * quad + lik - half_logdet
            }
            None => f64::NAN,
        };
        Ok(Self {
            training,
            kernel,
            log_marginal,
            f_hat,
            grad: fac.grad,
            sqrt_w: fac.sqrt_w,
            chol_b: fac.chol_b,
        })
    }

    /// Prior-only model: no training data, every prediction is the prior.
    pub fn prior(bounds: ParameterBox, kernel: KernelParams) -> Self {
        Self {
            training: TrainingSet::new_unchecked(bounds, Vec::new(), Vec::new()),
            kernel,
            log_marginal: 0.0,
            f_hat: Vec::new(),
            grad: Vec::new(),
            sqrt_w: Vec::new(),
            chol_b: Mat::zeros(0, 0),
        }
    }

    /// Laplace posterior mode `f̂` over the training latents.
    pub fn mode(&self) -> &[f64] {
        &self.f_hat
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.training.bounds
    }

    /// Negative log-likelihood Hessian diagonal at the mode.
    pub fn hessian_diag(&self) -> Vec<f64> {
        self.sqrt_w.iter().map(|s| s * s).collect()
    }

    /// `‖f̂ - K ∇log p(y|f̂)‖_∞`.
    pub fn stationarity_residual(&self) -> f64 {
        if self.f_hat.is_empty() {
            return 0.0;
        }
        let k = self.kernel.gram(&self.training.x, self.kernel.jitter);
        let kg = matvec(&k, &self.grad);
        self.f_hat
            .iter()
            .zip(&kg)
            .map(|(f, g)| (f - g).abs())
            .fold(0.0, f64::max)
    }

    /// Latent mean only, `k_*ᵀ ∇log p(y|f̂)`. Its sign decides the class.
    pub fn latent_mean(&self, x_unit: &[f64]) -> f64 {
        self.training
            .x
            .iter()
            .zip(&self.grad)
            .map(|(xi, g)| self.kernel.eval(xi, x_unit) * g)
            .sum()
    }

    /// Prediction at a normalized query point.
    pub fn predict(&self, x_unit: &[f64]) -> Prediction {
        self.predict_batch(std::slice::from_ref(&x_unit.to_vec()))[0]
    }

    /// Prediction at a raw-unit query point.
    pub fn predict_raw(&self, x_raw: &[f64]) -> Prediction {
        self.predict(&self.bounds().normalize(x_raw))
    }

    /// Predictions at many normalized query points, computed in blocks.
    pub fn predict_batch(&self, queries: &[Vec<f64>]) -> Vec<Prediction> {
        let mut out = Vec::with_capacity(queries.len());
        let prior_var = self.kernel.signal_variance;
        for block in queries.chunks(PREDICT_BLOCK) {
            let n = self.f_hat.len();
            let (means, vars) = if n == 0 {
                (vec![0.0; block.len()], vec![prior_var; block.len()])
            } else {
                let cross = self.kernel.cross(&self.training.x, block);
                let means: Vec<f64> = (0..block.len())
                    .map(|j| (0..n).map(|i| cross.read(i, j) * self.grad[i]).sum())
                    .collect();
                let mut v = Mat::from_fn(n, block.len(), |i, j| self.sqrt_w[i] * cross.read(i, j));
                solve_lower(&self.chol_b, &mut v);
                let vars = (0..block.len())
                    .map(|j| {
                        let explained: f64 = (0..n).map(|i| v.read(i, j).powi(2)).sum();
                        (prior_var - explained).max(0.0)
                    })
                    .collect();
                (means, vars)
            };
            for ((q, mean), var) in block.iter().zip(means).zip(vars) {
                out.push(Prediction {
                    latent_mean: mean,
                    latent_var: var,
                    prob_collision: sigmoid_gaussian_integral(mean, var),
                    extrapolated: q.iter().any(|&u| !(0.0..=1.0).contains(&u)),
                });
            }
        }
        out
    }

    /// Classifies labeled raw-unit samples with threshold `p ≥ 0.5`.
    pub fn evaluate(&self, test: &[LabeledSample]) -> Result<Metrics, GpcError> {
        evaluate(self, test)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            bounds: self.training.bounds.clone(),
            kernel: self.kernel.clone(),
            x: self.training.x.clone(),
            y: self.training.y.clone(),
            f_hat: self.f_hat.clone(),
            log_marginal: self.log_marginal,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self, GpcError> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(GpcError::UnsupportedVersion(file.format_version));
        }
        let stored = file.x.clone();
        let training = TrainingSet::new(file.bounds, file.x, file.y)?;
        if training.x != stored {
            // f̂ is aligned with the stored order, which must be canonical.
            return Err(GpcError::InvalidTraining(
                "model file inputs are not in sorted order".into(),
            ));
        }
        file.kernel.validate(training.ndim())?;
        if file.f_hat.len() != training.len() {
            return Err(GpcError::DimensionMismatch {
                expected: training.len(),
                found: file.f_hat.len(),
            });
        }
        let k = file.kernel.gram(&training.x, file.kernel.jitter);
        let mut model = Self::assemble(training, file.kernel, file.f_hat, &k, None)?;
        model.log_marginal = file.log_marginal;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelLoadError> {
        let file: ModelFile = serde_json::from_str(text)?;
        Ok(Self::from_file(file)?)
    }
}

#[derive(Debug, Error)]
pub enum ModelLoadError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] GpcError),
}

/// Serialized form of a [`GpcModel`]; caches are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub bounds: ParameterBox,
    pub kernel: KernelParams,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub log_marginal: f64,
}

/// Classification metrics on a labeled test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_test: usize,
    pub n_correct: usize,
    pub n_misclassified: usize,
    pub accuracy: f64,
    pub points: Vec<PointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub speed_ego: f64,
    pub speed_target: f64,
    pub aperture_angle: f64,
    pub outcome: Outcome,
    pub predicted: Outcome,
    pub prob_collision: f64,
}

pub fn evaluate(model: &GpcModel, test: &[LabeledSample]) -> Result<Metrics, GpcError> {
    if test.is_empty() {
        return Err(GpcError::EmptyTestSet);
    }
    let queries: Vec<Vec<f64>> = test
        .iter()
        .map(|s| model.bounds().normalize(&s.params.as_array()))
        .collect();
    let preds = model.predict_batch(&queries);
    let points: Vec<PointResult> = test
        .iter()
        .zip(&preds)
        .map(|(s, p)| PointResult {
            speed_ego: s.params.speed_ego,
            speed_target: s.params.speed_target,
            aperture_angle: s.params.aperture_angle,
            outcome: s.outcome,
            predicted: classify(p.prob_collision),
            prob_collision: p.prob_collision,
        })
        .collect();
    let n_correct = points.iter().filter(|p| p.outcome == p.predicted).count();
    Ok(Metrics {
        n_test: test.len(),
        n_correct,
        n_misclassified: test.len() - n_correct,
        accuracy: n_correct as f64 / test.len() as f64,
        points,
    })
}

/// Decision rule at the symmetric threshold.
pub fn classify(prob_collision: f64) -> Outcome {
    if prob_collision >= 0.5 {
        Outcome::Collision
    } else {
        Outcome::NoCollision
    }
}
