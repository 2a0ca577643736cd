//! Latin Hypercube designs improved toward the minimax (coverage) criterion.
//!
//! The start design places one jittered sample in each of `n` equal strata per
//! dimension, with independent random stratum permutations per column. The
//! design is then refined by swapping two entries of a random column, which
//! keeps every column a permutation of the strata, and keeping the swap only
//! if the largest distance from a reference-grid point to its nearest sample
//! shrinks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParameterBox, SampleSet, SamplingError};

/// Reference grid points per dimension used to evaluate the minimax criterion.
pub const REFERENCE_GRID_SIDE: usize = 17;

const MAX_REFERENCE_POINTS: usize = 2_000_000;

/// Regular grid over the unit cube, `REFERENCE_GRID_SIDE` points per axis.
#[derive(Debug, Clone)]
pub struct MinimaxReference {
    ndim: usize,
    coords: Vec<f64>,
}

impl MinimaxReference {
    pub fn new(ndim: usize) -> Result<Self, SamplingError> {
        let count = (REFERENCE_GRID_SIDE as u64)
            .checked_pow(ndim as u32)
            .filter(|&c| c <= MAX_REFERENCE_POINTS as u64)
            .ok_or_else(|| {
                SamplingError::InvalidDesign(format!(
                    "minimax reference grid too large for {ndim} dimensions"
                ))
            })? as usize;
        let step = 1.0 / (REFERENCE_GRID_SIDE - 1) as f64;
        let mut coords = Vec::with_capacity(count * ndim);
        for flat in 0..count {
            let mut rest = flat;
            for _ in 0..ndim {
                coords.push((rest % REFERENCE_GRID_SIDE) as f64 * step);
                rest /= REFERENCE_GRID_SIDE;
            }
        }
        Ok(Self { ndim, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.ndim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn point(&self, g: usize) -> &[f64] {
        &self.coords[g * self.ndim..(g + 1) * self.ndim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest distance from a reference-grid point to its nearest design point,
/// computed in normalized coordinates of `bx`.
pub fn minimax_criterion(bx: &ParameterBox, points: &[Vec<f64>]) -> Result<f64, SamplingError> {
    if points.is_empty() {
        return Err(SamplingError::InvalidDesign("empty design".into()));
    }
    let reference = MinimaxReference::new(bx.ndim())?;
    let unit: Vec<Vec<f64>> = points.iter().map(|p| bx.normalize(p)).collect();
    let worst = (0..reference.len())
        .map(|g| {
            let gp = reference.point(g);
            unit.iter()
                .map(|u| sq_dist(gp, u))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(worst.sqrt())
}

/// Nearest-sample bookkeeping for incremental criterion updates.
struct Coverage<'a> {
    reference: &'a MinimaxReference,
    nearest: Vec<usize>,
    dist2: Vec<f64>,
}

impl<'a> Coverage<'a> {
    fn new(reference: &'a MinimaxReference, design: &Design) -> Self {
        let mut nearest = vec![0; reference.len()];
        let mut dist2 = vec![0.0; reference.len()];
        for g in 0..reference.len() {
            let (i, d) = design.closest(reference.point(g));
            nearest[g] = i;
            dist2[g] = d;
        }
        Self {
            reference,
            nearest,
            dist2,
        }
    }

    fn worst(&self) -> f64 {
        self.dist2.iter().copied().fold(0.0, f64::max)
    }

    /// Refreshes after rows `a` and `b` of `design` moved.
    fn update(&mut self, design: &Design, a: usize, b: usize) {
        for g in 0..self.reference.len() {
            let gp = self.reference.point(g);
            if self.nearest[g] == a || self.nearest[g] == b {
                let (i, d) = design.closest(gp);
                self.nearest[g] = i;
                self.dist2[g] = d;
            } else {
                for row in [a, b] {
                    let d = sq_dist(gp, design.row(row));
                    if d < self.dist2[g] {
                        self.dist2[g] = d;
                        self.nearest[g] = row;
                    }
                }
            }
        }
    }
}

/// Row-major `n × d` matrix of unit-cube coordinates.
struct Design {
    n: usize,
    d: usize,
    x: Vec<f64>,
}

impl Design {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn closest(&self, p: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.n {
            let d = sq_dist(p, self.row(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn swap(&mut self, col: usize, a: usize, b: usize) {
        self.x.swap(a * self.d + col, b * self.d + col);
    }
}

/// Stratified design with `n` points, then `minimax_iters` candidate swaps.
pub fn latin_hypercube(
    bx: &ParameterBox,
    n: usize,
    seed: u64,
    minimax_iters: usize,
) -> Result<SampleSet, SamplingError> {
    if n < 2 {
        return Err(SamplingError::InvalidDesign(format!(
            "latin hypercube needs n >= 2, got {n}"
        )));
    }
    let d = bx.ndim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = vec![0.0; n * d];
    let mut strata: Vec<usize> = (0..n).collect();
    for col in 0..d {
        strata.shuffle(&mut rng);
        for (row, &s) in strata.iter().enumerate() {
            // stay strictly inside [s/n, (s+1)/n) so the stratum is unambiguous
            let jitter: f64 = rng.gen();
            x[row * d + col] = ((s as f64 + jitter) / n as f64).min((s + 1) as f64 / n as f64 - f64::EPSILON);
        }
    }
    let mut design = Design { n, d, x };

    if minimax_iters > 0 {
        let reference = MinimaxReference::new(d)?;
        let mut coverage = Coverage::new(&reference, &design);
        let mut worst = coverage.worst();
        let mut saved_nearest = coverage.nearest.clone();
        let mut saved_dist2 = coverage.dist2.clone();
        for _ in 0..minimax_iters {
            let col = rng.gen_range(0..d);
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            saved_nearest.copy_from_slice(&coverage.nearest);
            saved_dist2.copy_from_slice(&coverage.dist2);
            design.swap(col, a, b);
            coverage.update(&design, a, b);
            let candidate = coverage.worst();
            if candidate < worst {
                worst = candidate;
            } else {
                design.swap(col, a, b);
                coverage.nearest.copy_from_slice(&saved_nearest);
                coverage.dist2.copy_from_slice(&saved_dist2);
            }
        }
    }

    let points = (0..n).map(|i| bx.denormalize(design.row(i))).collect();
    Ok(SampleSet {
        points,
        provenance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stratum_indices(bx: &ParameterBox, set: &SampleSet, col: usize) -> Vec<usize> {
        let n = set.len();
        let mut idx: Vec<usize> = set
            .points
            .iter()
            .map(|p| {
                let u = bx.normalize(p)[col];
                ((u * n as f64).floor() as usize).min(n - 1)
            })
            .collect();
        idx.sort_unstable();
        idx
    }

    #[test]
    fn one_dimensional_quartiles() {
        let bx = ParameterBox::from_bounds(&[(0.0, 1.0)]).unwrap();
        let set = latin_hypercube(&bx, 4, 11, 100).unwrap();
        let mut xs: Vec<f64> = set.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for (k, x) in xs.iter().enumerate() {
            assert!(*x >= k as f64 * 0.25 && *x < (k + 1) as f64 * 0.25, "{xs:?}");
        }
    }

    #[test]
    fn scenario_box_stratification() {
        let bx = ParameterBox::scenario_default();
        let set = latin_hypercube(&bx, 100, 5, 2_000).unwrap();
        for col in 0..3 {
            assert_eq!(stratum_indices(&bx, &set, col), (0..100).collect::<Vec<_>>());
        }
        assert!(set.points.iter().all(|p| bx.contains(p)));
    }

    #[test]
    fn optimization_never_worsens_criterion() {
        let bx = ParameterBox::scenario_default();
        for seed in 0..3 {
            let start = latin_hypercube(&bx, 30, seed, 0).unwrap();
            let tuned = latin_hypercube(&bx, 30, seed, 3_000).unwrap();
            let before = minimax_criterion(&bx, &start.points).unwrap();
            let after = minimax_criterion(&bx, &tuned.points).unwrap();
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }

    #[test]
    fn incremental_coverage_matches_full_recompute() {
        let bx = ParameterBox::scenario_default();
        let set = latin_hypercube(&bx, 25, 9, 500).unwrap();
        let reference = MinimaxReference::new(3).unwrap();
        let unit: Vec<f64> = set.points.iter().flat_map(|p| bx.normalize(p)).collect();
        let mut design = Design { n: 25, d: 3, x: unit };
        let mut cov = Coverage::new(&reference, &design);
        design.swap(1, 3, 17);
        cov.update(&design, 3, 17);
        let fresh = Coverage::new(&reference, &design);
        assert_eq!(cov.dist2, fresh.dist2);
    }

    #[test]
    fn rejects_single_point() {
        let bx = ParameterBox::scenario_default();
        assert!(latin_hypercube(&bx, 1, 0, 10).is_err());
    }
}
