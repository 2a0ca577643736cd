//! The `p = 0.5` performance boundary of a trained classifier.
//!
//! The boundary is located on a regular grid: every grid edge whose endpoints
//! fall on different sides of the threshold yields one crossing point. Since
//! `p ≥ 0.5` exactly when the latent mean is non-negative, edges are found
//! from the cheap latent mean alone. Each crossing starts at the linear
//! interpolation of `p` along its edge and is then refined to the root of the
//! latent mean on that edge, so re-evaluated probabilities sit at the
//! threshold even where the transition is sharper than one cell.

mod slice;
pub mod svg;

pub use slice::{confidence_slice, contour_polylines, ConfidenceSlice};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpc::{GpcModel, Prediction};
use crate::sampling::ParameterBox;
use crate::scenario::ScenarioParams;

pub const DEFAULT_RESOLUTION: usize = 41;
const ROOT_TOLERANCE: f64 = 1e-10;
const MAX_ROOT_ITERS: usize = 60;
const CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("no grid edge straddles p = 0.5; the model predicts one class everywhere")]
    EmptyBoundary,
    #[error("empty input point set")]
    EmptyInput,
    #[error("grid resolution must be >= 2 in each of {ndim} dimensions, got {found:?}")]
    InvalidGrid { ndim: usize, found: Vec<usize> },
    #[error("boundary estimates were computed on different parameter boxes")]
    BoxMismatch,
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
}

/// Regular evaluation grid over a parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: ParameterBox,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: ParameterBox, resolution: Vec<usize>) -> Result<Self, BoundaryError> {
        if resolution.len() != bounds.ndim() || resolution.iter().any(|&r| r < 2) {
            return Err(BoundaryError::InvalidGrid {
                ndim: bounds.ndim(),
                found: resolution,
            });
        }
        Ok(Self { bounds, resolution })
    }

    pub fn uniform(bounds: ParameterBox, per_dim: usize) -> Result<Self, BoundaryError> {
        let d = bounds.ndim();
        Self::new(bounds, vec![per_dim; d])
    }

    /// 41 points per dimension.
    pub fn default_for(bounds: ParameterBox) -> Self {
        let d = bounds.ndim();
        Self {
            bounds,
            resolution: vec![DEFAULT_RESOLUTION; d],
        }
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell size per dimension in normalized units.
    pub fn cell(&self) -> Vec<f64> {
        self.resolution
            .iter()
            .map(|&r| 1.0 / (r - 1) as f64)
            .collect()
    }

    /// Multi-index of a flat index; dimension 0 varies fastest.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&r| {
                let i = flat % r;
                flat /= r;
                i
            })
            .collect()
    }

    fn stride(&self, dim: usize) -> usize {
        self.resolution[..dim].iter().product()
    }

    pub fn unit_point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(&self.resolution)
            .map(|(&i, &r)| i as f64 / (r - 1) as f64)
            .collect()
    }

    pub fn unit_points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.unit_point(k)).collect()
    }
}

/// Boundary crossing points in raw parameter units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub points: Vec<Vec<f64>>,
    /// Predicted collision probability re-evaluated at each point.
    pub probabilities: Vec<f64>,
    pub grid: GridSpec,
    pub model_id: String,
}

impl BoundaryEstimate {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn unit_points(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| self.grid.bounds.normalize(p))
            .collect()
    }
}

/// Full predictions at every grid point, in flat-index order.
pub fn predict_grid(model: &GpcModel, grid: &GridSpec) -> Vec<Prediction> {
    let points = grid.unit_points();
    points
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| model.predict_batch(chunk))
        .collect()
}

fn latent_grid(model: &GpcModel, grid: &GridSpec) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|k| model.latent_mean(&grid.unit_point(k)))
        .collect()
}

/// Illinois-style bracketed root of the latent mean on the segment `a → b`,
/// starting from the fraction `t0`.
fn refine_on_edge(model: &GpcModel, a: &[f64], b: &[f64], t0: f64, fa: f64, fb: f64) -> f64 {
    let at = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    let (mut lo, mut hi, mut flo, mut fhi) = (0.0, 1.0, fa, fb);
    let mut t = t0.clamp(0.0, 1.0);
    let mut side = 0i8;
    for _ in 0..MAX_ROOT_ITERS {
        let ft = model.latent_mean(&at(t));
        if ft == 0.0 || hi - lo < ROOT_TOLERANCE {
            break;
        }
        if (ft >= 0.0) == (flo >= 0.0) {
            lo = t;
            flo = ft;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = ft;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        t = (lo * fhi - hi * flo) / (fhi - flo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
    }
    t
}

/// Locates the `p = 0.5` surface on `grid`.
pub fn extract_boundary(
    model: &GpcModel,
    grid: &GridSpec,
    model_id: &str,
) -> Result<BoundaryEstimate, BoundaryError> {
    let d = grid.bounds.ndim();
    let latent = latent_grid(model, grid);
    let positive = |k: usize| latent[k] >= 0.0;

    let mut edges = Vec::new();
    for k in 0..grid.len() {
        let idx = grid.unravel(k);
        for dim in 0..d {
            if idx[dim] + 1 < grid.resolution[dim] {
                let k2 = k + grid.stride(dim);
                if positive(k) != positive(k2) {
                    edges.push((k, k2));
                }
            }
        }
    }
    if edges.is_empty() {
        return Err(BoundaryError::EmptyBoundary);
    }

    let mut vertices: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    vertices.sort_unstable();
    vertices.dedup();
    let vertex_points: Vec<Vec<f64>> = vertices.iter().map(|&k| grid.unit_point(k)).collect();
    let vertex_probs: HashMap<usize, f64> = vertices
        .iter()
        .zip(model.predict_batch(&vertex_points))
        .map(|(&k, p)| (k, p.prob_collision))
        .collect();

    let crossings: Vec<Vec<f64>> = edges
        .par_iter()
        .map(|&(ka, kb)| {
            let (a, b) = (grid.unit_point(ka), grid.unit_point(kb));
            let (pa, pb) = (vertex_probs[&ka], vertex_probs[&kb]);
            let t0 = if pb != pa { (0.5 - pa) / (pb - pa) } else { 0.5 };
            let t = refine_on_edge(model, &a, &b, t0, latent[ka], latent[kb]);
            a.iter().zip(&b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect();

    let kept = dedup_within_half_cell(crossings, &grid.cell());
    let probabilities = model
        .predict_batch(&kept)
        .iter()
        .map(|p| p.prob_collision)
        .collect();
    let points = kept.iter().map(|u| grid.bounds.denormalize(u)).collect();
    Ok(BoundaryEstimate {
        points,
        probabilities,
        grid: grid.clone(),
        model_id: model_id.to_string(),
    })
}

/// Greedy removal of points closer than half a cell (in cell units) to an
/// already kept point. Order of the input decides which point survives.
fn dedup_within_half_cell(points: Vec<Vec<f64>>, cell: &[f64]) -> Vec<Vec<f64>> {
    let d = cell.len();
    let scaled = |p: &[f64]| -> Vec<f64> { p.iter().zip(cell).map(|(x, c)| x / c).collect() };
    let key = |s: &[f64]| -> Vec<i64> { s.iter().map(|v| (v / 0.5).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut kept_scaled: Vec<Vec<f64>> = Vec::new();

    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut m| {
            (0..d)
                .map(|_| {
                    let o = (m % 3) as i64 - 1;
                    m /= 3;
                    o
                })
                .collect()
        })
        .collect();

    for p in points {
        let s = scaled(&p);
        let k = key(&s);
        let duplicate = offsets.iter().any(|off| {
            let nk: Vec<i64> = k.iter().zip(off).map(|(a, b)| a + b).collect();
            buckets.get(&nk).is_some_and(|ids| {
                ids.iter().any(|&i| {
                    let d2: f64 = kept_scaled[i]
                        .iter()
                        .zip(&s)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d2 < 0.25
                })
            })
        });
        if !duplicate {
            buckets.entry(k).or_default().push(kept.len());
            kept.push(p);
            kept_scaled.push(s);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    Raw,
    Normalized,
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, BoundaryError> {
    if a.is_empty() || b.is_empty() {
        return Err(BoundaryError::EmptyInput);
    }
    let directed = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        from.par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)).sqrt())
}

/// Hausdorff distance between two boundary estimates in raw or normalized units.
pub fn boundary_distance(
    a: &BoundaryEstimate,
    b: &BoundaryEstimate,
    space: DistanceSpace,
) -> Result<f64, BoundaryError> {
    if a.grid.bounds != b.grid.bounds {
        return Err(BoundaryError::BoxMismatch);
    }
    match space {
        DistanceSpace::Raw => hausdorff(&a.points, &b.points),
        DistanceSpace::Normalized => hausdorff(&a.unit_points(), &b.unit_points()),
    }
}

/// `k` boundary points spread out by greedy farthest-point selection in
/// normalized space, starting from the point nearest the boundary centroid.
pub fn boundary_scenarios(
    model: &GpcModel,
    boundary: &BoundaryEstimate,
    k: usize,
) -> Result<Vec<ScenarioParams>, BoundaryError> {
    if boundary.is_empty() {
        return Err(BoundaryError::EmptyInput);
    }
    let unit: Vec<Vec<f64>> = boundary
        .points
        .iter()
        .map(|p| model.bounds().normalize(p))
        .collect();
    let picked = farthest_point_indices(&unit, k);
    picked
        .into_iter()
        .map(|i| {
            ScenarioParams::from_slice(&boundary.points[i]).ok_or_else(|| {
                BoundaryError::InvalidSlice(format!(
                    "boundary points have {} coordinates, scenarios need 3",
                    boundary.points[i].len()
                ))
            })
        })
        .collect()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn farthest_point_indices(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    if k >= n {
        return (0..n).collect();
    }
    if k == 0 {
        return Vec::new();
    }
    let d = points[0].len();
    let centroid: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let first = (0..n)
        .min_by(|&i, &j| sq(&points[i], &centroid).total_cmp(&sq(&points[j], &centroid)))
        .unwrap_or(0);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq(p, &points[first])).collect();
    while chosen.len() < k {
        let next = (0..n)
            .max_by(|&i, &j| nearest[i].total_cmp(&nearest[j]).then(j.cmp(&i)))
            .unwrap_or(0);
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq(p, &points[next]));
        }
    }
    chosen
}

/// Binary entropy of a class probability, in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Mean predictive entropy over all grid points.
pub fn mean_predictive_entropy(model: &GpcModel, grid: &GridSpec) -> f64 {
    let preds = predict_grid(model, grid);
    preds
        .iter()
        .map(|p| binary_entropy(p.prob_collision))
        .sum::<f64>()
        / preds.len() as f64
}
