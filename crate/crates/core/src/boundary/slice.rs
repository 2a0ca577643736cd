//! Two-dimensional confidence slices at a fixed value of one parameter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BoundaryError, GridSpec};
use crate::gpc::GpcModel;
use crate::sampling::LabeledSample;

/// Collision probability on a 2-D grid with one parameter held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSlice {
    pub fixed_dim: usize,
    pub fixed_value: f64,
    /// The two free dimensions, `(x, y)`.
    pub free_dims: (usize, usize),
    /// Raw coordinates along the free dimensions.
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `probs[row][col]` is the probability at `(x_values[col], y_values[row])`.
    pub probs: Vec<Vec<f64>>,
    pub band: f64,
    /// Data points whose fixed coordinate lies within `±band` of the value.
    pub overlay: Vec<LabeledSample>,
}

impl ConfidenceSlice {
    /// Closed interval of the fixed coordinate covered by the overlay.
    pub fn overlay_range(&self) -> (f64, f64) {
        (self.fixed_value - self.band, self.fixed_value + self.band)
    }
}

/// Evaluates the model on the plane `x[dim] = value` using the grid
/// resolution of the free dimensions, and attaches the data near the plane.
pub fn confidence_slice(
    model: &GpcModel,
    grid: &GridSpec,
    dim: usize,
    value: f64,
    data: &[LabeledSample],
    band: f64,
) -> Result<ConfidenceSlice, BoundaryError> {
    let bx = &grid.bounds;
    if bx.ndim() != 3 {
        return Err(BoundaryError::InvalidSlice(format!(
            "slices need a 3-D box, got {} dimensions",
            bx.ndim()
        )));
    }
    if dim >= 3 {
        return Err(BoundaryError::InvalidSlice(format!("no dimension {dim}")));
    }
    let fixed = &bx.dims()[dim];
    if !(value >= fixed.lower && value <= fixed.upper) {
        return Err(BoundaryError::InvalidSlice(format!(
            "{} = {value} lies outside [{}, {}]",
            fixed.name, fixed.lower, fixed.upper
        )));
    }
    if !(band >= 0.0) {
        return Err(BoundaryError::InvalidSlice(format!("negative band {band}")));
    }

    let free: Vec<usize> = (0..3).filter(|&d| d != dim).collect();
    let (dx, dy) = (free[0], free[1]);
    let axis = |d: usize| -> Vec<f64> {
        let r = grid.resolution[d];
        let dm = &bx.dims()[d];
        (0..r)
            .map(|i| dm.lower + dm.width() * i as f64 / (r - 1) as f64)
            .collect()
    };
    let x_values = axis(dx);
    let y_values = axis(dy);

    let mut queries = Vec::with_capacity(x_values.len() * y_values.len());
    for &yv in &y_values {
        for &xv in &x_values {
            let mut raw = vec![0.0; 3];
            raw[dim] = value;
            raw[dx] = xv;
            raw[dy] = yv;
            queries.push(bx.normalize(&raw));
        }
    }
    let preds = model.predict_batch(&queries);
    let probs = preds
        .chunks(x_values.len())
        .map(|row| row.iter().map(|p| p.prob_collision).collect())
        .collect();

    let overlay = if band > 0.0 {
        data.iter()
            .filter(|s| (s.params.as_array()[dim] - value).abs() <= band + 1e-12)
            .copied()
            .collect()
    } else {
        Vec::new()
    };

    Ok(ConfidenceSlice {
        fixed_dim: dim,
        fixed_value: value,
        free_dims: (dx, dy),
        x_values,
        y_values,
        probs,
        band,
        overlay,
    })
}

/// Marching-squares iso-lines of `values[row][col]` at `level`, in
/// fractional `(col, row)` grid coordinates, chained into polylines.
pub fn contour_polylines(values: &[Vec<f64>], level: f64) -> Vec<Vec<(f64, f64)>> {
    let rows = values.len();
    if rows < 2 {
        return Vec::new();
    }
    let cols = values[0].len();
    // Edge ids: horizontal edge (r, c)-(r, c+1) and vertical edge (r, c)-(r+1, c).
    #[derive(Clone, Copy, PartialEq, Eq, Hash)]
    enum Edge {
        H(usize, usize),
        V(usize, usize),
    }
    let above = |r: usize, c: usize| values[r][c] >= level;
    let point = |e: Edge| -> (f64, f64) {
        match e {
            Edge::H(r, c) => {
                let (a, b) = (values[r][c], values[r][c + 1]);
                (c as f64 + frac(a, b, level), r as f64)
            }
            Edge::V(r, c) => {
                let (a, b) = (values[r][c], values[r + 1][c]);
                (c as f64, r as f64 + frac(a, b, level))
            }
        }
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let code = (above(r, c) as u8)
                | (above(r, c + 1) as u8) << 1
                | (above(r + 1, c + 1) as u8) << 2
                | (above(r + 1, c) as u8) << 3;
            let (bottom, right, top, left) = (
                Edge::H(r, c),
                Edge::V(r, c + 1),
                Edge::H(r + 1, c),
                Edge::V(r, c),
            );
            let center_above = 0.25
                * (values[r][c] + values[r][c + 1] + values[r + 1][c] + values[r + 1][c + 1])
                >= level;
            match code {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if center_above {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if center_above {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // Chain segments that share an edge crossing.
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(i);
        by_edge.entry(*b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = std::collections::VecDeque::from([a, b]);
        for forward in [true, false] {
            loop {
                let end = if forward { *chain.back().unwrap() } else { *chain.front().unwrap() };
                let next = by_edge[&end].iter().copied().find(|&s| !used[s]);
                let Some(s) = next else { break };
                used[s] = true;
                let (x, y) = segments[s];
                let other = if x == end { y } else { x };
                if forward {
                    chain.push_back(other);
                } else {
                    chain.push_front(other);
                }
            }
        }
        lines.push(chain.into_iter().map(point).collect());
    }
    lines
}

fn frac(a: f64, b: f64, level: f64) -> f64 {
    if a == b {
        0.5
    } else {
        ((level - a) / (b - a)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpc::KernelParams;
    use crate::sampling::ParameterBox;
    use crate::scenario::{Outcome, ScenarioParams};

    fn data() -> Vec<LabeledSample> {
        [15.9, 16.0, 17.0, 17.5, 18.0, 19.0, 19.1]
            .iter()
            .map(|&a| LabeledSample {
                params: ScenarioParams::new(50.0, 10.0, a),
                outcome: Outcome::Collision,
            })
            .collect()
    }

    fn prior() -> (GpcModel, GridSpec) {
        let bx = ParameterBox::scenario_default();
        (
            GpcModel::prior(bx.clone(), KernelParams::isotropic(1.0, 0.3, 3)),
            GridSpec::uniform(bx, 9).unwrap(),
        )
    }

    #[test]
    fn overlay_bands_match_figure_ranges() {
        let (model, grid) = prior();
        let wide = confidence_slice(&model, &grid, 2, 17.5, &data(), 1.5).unwrap();
        assert_eq!(wide.overlay_range(), (16.0, 19.0));
        let angles: Vec<f64> = wide.overlay.iter().map(|s| s.params.aperture_angle).collect();
        assert_eq!(angles, vec![16.0, 17.0, 17.5, 18.0, 19.0]);

        let narrow = confidence_slice(&model, &grid, 2, 17.5, &data(), 0.5).unwrap();
        assert_eq!(narrow.overlay_range(), (17.0, 18.0));
        assert_eq!(narrow.overlay.len(), 3);

        let none = confidence_slice(&model, &grid, 2, 17.5, &data(), 0.0).unwrap();
        assert!(none.overlay.is_empty());
    }

    #[test]
    fn slice_shape_and_validation() {
        let (model, grid) = prior();
        let s = confidence_slice(&model, &grid, 2, 17.5, &[], 1.5).unwrap();
        assert_eq!(s.free_dims, (0, 1));
        assert_eq!(s.probs.len(), 9);
        assert!(s.probs.iter().all(|r| r.len() == 9));
        assert!(s.probs.iter().flatten().all(|p| (p - 0.5).abs() < 1e-12));
        assert!(confidence_slice(&model, &grid, 2, 30.0, &[], 1.5).is_err());
        assert!(confidence_slice(&model, &grid, 3, 17.5, &[], 1.5).is_err());
    }

    #[test]
    fn contour_of_linear_ramp_is_straight() {
        let values: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..5).map(|c| c as f64 / 4.0).collect())
            .collect();
        let lines = contour_polylines(&values, 0.6);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 5);
        for &(x, _) in &lines[0] {
            assert!((x - 2.4).abs() < 1e-12);
        }
    }

    #[test]
    fn contour_empty_when_level_not_crossed() {
        let values = vec![vec![0.1; 4]; 4];
        assert!(contour_polylines(&values, 0.5).is_empty());
    }
}
