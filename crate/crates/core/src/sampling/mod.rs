//! Experimental designs over the scenario parameter box.

mod lhs;

pub use lhs::{latin_hypercube, minimax_criterion, MinimaxReference, REFERENCE_GRID_SIDE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{self, Outcome, PhysicsConfig, ScenarioError, ScenarioParams};

/// RNG stream used for the train/test shuffle, distinct from the design stream.
const SPLIT_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("point {index} {params}: {source}")]
    Simulation {
        index: usize,
        params: ScenarioParams,
        #[source]
        source: ScenarioError,
    },
    #[error("point {index} has {found} coordinates, scenario points need 3")]
    NotAScenario { index: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

impl Dimension {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Axis-aligned box of parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct ParameterBox {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for ParameterBox {
    type Error = SamplingError;

    fn try_from(dims: Vec<Dimension>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<ParameterBox> for Vec<Dimension> {
    fn from(b: ParameterBox) -> Self {
        b.dims
    }
}

impl ParameterBox {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, SamplingError> {
        if dims.is_empty() {
            return Err(SamplingError::InvalidBox("need at least one dimension".into()));
        }
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(SamplingError::InvalidBox(format!(
                    "dimension `{}` needs finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
        }
        Ok(Self { dims })
    }

    /// Convenience constructor from `(lower, upper)` pairs with generated names.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self, SamplingError> {
        Self::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lower, upper))| Dimension {
                    name: format!("x{i}"),
                    lower,
                    upper,
                    unit: String::new(),
                })
                .collect(),
        )
    }

    /// Ego speed 40–70 km/h, target speed 5–20 km/h, aperture 10–25°.
    pub fn scenario_default() -> Self {
        let dim = |name: &str, lower, upper, unit: &str| Dimension {
            name: name.into(),
            lower,
            upper,
            unit: unit.into(),
        };
        Self {
            dims: vec![
                dim("speed_ego", 40.0, 70.0, "km/h"),
                dim("speed_target", 5.0, 20.0, "km/h"),
                dim("aperture_angle", 10.0, 25.0, "deg"),
            ],
        }
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len()
            && point
                .iter()
                .zip(&self.dims)
                .all(|(x, d)| *x >= d.lower && *x <= d.upper)
    }

    /// Affine map of a raw point into the unit cube (no clamping).
    pub fn normalize(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(&self.dims)
            .map(|(x, d)| (x - d.lower) / d.width())
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.dims)
            .map(|(u, d)| d.lower + u * d.width())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    LatinHypercube,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mc" | "monte_carlo" | "montecarlo" => Ok(Method::MonteCarlo),
            "lhc" | "lhs" | "latin_hypercube" | "latinhypercube" => Ok(Method::LatinHypercube),
            other => Err(format!("unknown sampling method `{other}`")),
        }
    }
}

pub const DEFAULT_MINIMAX_ITERS: usize = 10_000;

fn default_train_fraction() -> f64 {
    0.9
}

fn default_minimax_iters() -> usize {
    DEFAULT_MINIMAX_ITERS
}

/// How a data set is drawn and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub method: Method,
    pub n_total: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_minimax_iters")]
    pub minimax_iters: usize,
}

impl DesignSpec {
    pub fn new(method: Method, n_total: usize, seed: u64) -> Self {
        Self {
            method,
            n_total,
            train_fraction: default_train_fraction(),
            seed,
            minimax_iters: DEFAULT_MINIMAX_ITERS,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.n_total < 2 {
            return Err(SamplingError::InvalidDesign(format!(
                "n_total must be >= 2, got {}",
                self.n_total
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SamplingError::InvalidDesign(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        (self.n_total as f64 * self.train_fraction).round() as usize
    }

    pub fn n_test(&self) -> usize {
        self.n_total - self.n_train()
    }

    /// Draws the point set this spec describes.
    pub fn generate(&self, bx: &ParameterBox) -> Result<SampleSet, SamplingError> {
        self.validate()?;
        let mut set = match self.method {
            Method::MonteCarlo => monte_carlo(bx, self.n_total, self.seed)?,
            Method::LatinHypercube => {
                latin_hypercube(bx, self.n_total, self.seed, self.minimax_iters)?
            }
        };
        set.provenance = Some(self.clone());
        Ok(set)
    }
}

/// Ordered raw-unit points plus the design that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub provenance: Option<DesignSpec>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scenarios(&self) -> Result<Vec<ScenarioParams>, SamplingError> {
        self.points
            .iter()
            .enumerate()
            .map(|(index, p)| {
                ScenarioParams::from_slice(p).ok_or(SamplingError::NotAScenario {
                    index,
                    found: p.len(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub params: ScenarioParams,
    pub outcome: Outcome,
}

/// `n` independent uniform draws inside `bx`.
pub fn monte_carlo(bx: &ParameterBox, n: usize, seed: u64) -> Result<SampleSet, SamplingError> {
    if n < 1 {
        return Err(SamplingError::InvalidDesign("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            bx.dims()
                .iter()
                .map(|d| d.lower + rng.gen::<f64>() * d.width())
                .collect()
        })
        .collect();
    Ok(SampleSet {
        points,
        provenance: None,
    })
}

/// Seeded shuffle, then the first `spec.n_train()` points train and the rest test.
pub fn split(s: &SampleSet, spec: &DesignSpec) -> Result<(SampleSet, SampleSet), SamplingError> {
    spec.validate()?;
    split_items(&s.points, spec).map(|(train, test)| {
        let wrap = |points| SampleSet {
            points,
            provenance: Some(spec.clone()),
        };
        (wrap(train), wrap(test))
    })
}

/// Same permutation as [`split`], applied to any item list of length `n_total`.
pub fn split_items<T: Clone>(
    items: &[T],
    spec: &DesignSpec,
) -> Result<(Vec<T>, Vec<T>), SamplingError> {
    if items.len() != spec.n_total {
        return Err(SamplingError::InvalidDesign(format!(
            "sample set has {} points but the design says {}",
            items.len(),
            spec.n_total
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SPLIT_STREAM);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let n_train = spec.n_train();
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Simulates every point; order is preserved.
pub fn label(s: &SampleSet, c: &PhysicsConfig) -> Result<Vec<LabeledSample>, SamplingError> {
    let scenarios = s.scenarios()?;
    scenarios
        .par_iter()
        .enumerate()
        .map(|(index, params)| {
            scenario::simulate(params, c)
                .map(|trace| LabeledSample {
                    params: *params,
                    outcome: trace.outcome,
                })
                .map_err(|source| SamplingError::Simulation {
                    index,
                    params: *params,
                    source,
                })
        })
        .collect()
}

/// Labels every point with the closed-form outcome instead of the integrator.
pub fn label_with_oracle(
    s: &SampleSet,
    c: &PhysicsConfig,
) -> Result<Vec<LabeledSample>, SamplingError> {
    Ok(s.scenarios()?
        .into_iter()
        .map(|params| LabeledSample {
            params,
            outcome: scenario::oracle(&params, c),
        })
        .collect())
}
