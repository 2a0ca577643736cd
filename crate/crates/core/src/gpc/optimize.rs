//! Kernel hyperparameter search on the Laplace marginal likelihood.
//!
//! Parameters are searched in log space, `[ln ℓ_1, …, ln ℓ_d, ln σ_f²]`, by a
//! bounded Nelder–Mead simplex (trial points are projected onto the box).
//! Restart 0 starts at the centre of the log box, later restarts at seeded
//! uniform draws. Within a restart each Laplace fit is warm-started from the
//! previous mode.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::laplace::laplace_fit_from;
use super::{GpcError, KernelParams, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            lengthscale: (0.03, 3.0),
            signal_variance: (0.01, 900.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Marginal-likelihood evaluations allowed per restart.
    pub max_evals: usize,
    #[serde(default)]
    pub bounds: HyperBounds,
}

impl Default for HyperOptOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_evals: 150,
            bounds: HyperBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start: KernelParams,
    /// `None` when the Laplace fit failed at the start point.
    pub start_log_marginal: Option<f64>,
    pub best_log_marginal: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptResult {
    pub kernel: KernelParams,
    pub log_marginal: f64,
    pub restarts: Vec<RestartRecord>,
}

/// Derivative-free simplex minimizer on a box.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 200,
            f_tol: 1e-7,
            x_tol: 1e-4,
            initial_step: 0.5,
        }
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0` within `[lo, hi]`; returns `(x, f(x), evaluations)`.
    pub fn minimize(
        &self,
        mut f: impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        lo: &[f64],
        hi: &[f64],
    ) -> (Vec<f64>, f64, usize) {
        let dim = x0.len();
        let project = |x: &mut Vec<f64>| {
            for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                *v = v.clamp(*l, *h);
            }
        };
        let mut evals = 0;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut start = x0.to_vec();
        project(&mut start);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let f0 = eval(&start, &mut evals);
        simplex.push((start.clone(), f0));
        for i in 0..dim {
            let mut x = start.clone();
            // step inward when the start sits on the upper bound
            x[i] += if x[i] + self.initial_step <= hi[i] {
                self.initial_step
            } else {
                -self.initial_step
            };
            project(&mut x);
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[dim].1;
            let spread = if best.is_finite() && worst.is_finite() {
                worst - best
            } else {
                f64::INFINITY
            };
            let diameter = simplex
                .iter()
                .skip(1)
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread < self.f_tol && diameter < self.x_tol {
                break;
            }

            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                project(&mut x);
                x
            };

            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[dim].1 {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let mut x: Vec<f64> = anchor
                    .iter()
                    .zip(&vertex.0)
                    .map(|(a, v)| a + 0.5 * (v - a))
                    .collect();
                project(&mut x);
                let v = eval(&x, &mut evals);
                *vertex = (x, v);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        (x, v, evals)
    }
}

fn to_kernel(z: &[f64], jitter: f64) -> KernelParams {
    let d = z.len() - 1;
    KernelParams {
        signal_variance: z[d].exp(),
        lengthscales: z[..d].iter().map(|v| v.exp()).collect(),
        jitter,
    }
}

/// Maximizes the Laplace log marginal likelihood over kernel parameters.
pub fn optimize_hyperparams(
    training: &TrainingSet,
    options: &HyperOptOptions,
) -> Result<HyperOptResult, GpcError> {
    let restarts = options.restarts.max(1);
    let d = training.ndim();
    let b = options.bounds;
    let mut lo = vec![b.lengthscale.0.ln(); d];
    let mut hi = vec![b.lengthscale.1.ln(); d];
    lo.push(b.signal_variance.0.ln());
    hi.push(b.signal_variance.1.ln());

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let optimizer = NelderMead {
        max_evals: options.max_evals,
        ..NelderMead::default()
    };

    let mut records = Vec::with_capacity(restarts);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_error = None;

    for r in 0..restarts {
        let start: Vec<f64> = if r == 0 {
            lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect()
        } else {
            lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect()
        };

        let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
        let start_value: RefCell<Option<f64>> = RefCell::new(None);
        let first = RefCell::new(true);
        let objective = |z: &[f64]| -> f64 {
            let theta = to_kernel(z, crate::gpc::DEFAULT_JITTER);
            let init = warm.borrow().clone();
            let result = laplace_fit_from(training, &theta, init.as_deref());
            let is_first = first.replace(false);
            match result {
                Ok(model) if model.log_marginal.is_finite() => {
                    if is_first {
                        *start_value.borrow_mut() = Some(model.log_marginal);
                    }
                    *warm.borrow_mut() = Some(model.mode().to_vec());
                    -model.log_marginal
                }
                Ok(_) => f64::INFINITY,
                Err(e) => {
                    log::debug!("hyperparameter candidate failed: {e}");
                    last_error = Some(e);
                    f64::INFINITY
                }
            }
        };
        let (z, value, evaluations) = optimizer.minimize(objective, &start, &lo, &hi);
        let best_lml = value.is_finite().then_some(-value);
        records.push(RestartRecord {
            start: to_kernel(&start, crate::gpc::DEFAULT_JITTER),
            start_log_marginal: start_value.into_inner(),
            best_log_marginal: best_lml,
            evaluations,
        });
        if let Some(lml) = best_lml {
            if best.as_ref().map_or(true, |(_, b)| lml > *b) {
                best = Some((z, lml));
            }
        }
    }

    match best {
        Some((z, lml)) => Ok(HyperOptResult {
            kernel: to_kernel(&z, crate::gpc::DEFAULT_JITTER),
            log_marginal: lml,
            restarts: records,
        }),
        None => Err(GpcError::AllRestartsFailed {
            restarts,
            last: Box::new(last_error.unwrap_or(GpcError::SingleClass)),
        }),
    }
}
