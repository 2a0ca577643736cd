//! Small wrappers over faer used by the Laplace solver. Everything runs
//! single-threaded so results do not depend on the thread count.

use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Col, Mat, Parallelism, Side};

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub(crate) fn cholesky_lower(a: &Mat<f64>) -> Option<Mat<f64>> {
    a.cholesky(Side::Lower).ok().map(|c| c.compute_l())
}

/// Solves `L x = b` in place.
pub(crate) fn solve_lower(l: &Mat<f64>, b: &mut Mat<f64>) {
    solve_lower_triangular_in_place(l.as_ref(), b.as_mut(), Parallelism::None);
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn solve_lower_transpose(l: &Mat<f64>, b: &mut Mat<f64>) {
    solve_upper_triangular_in_place(l.transpose(), b.as_mut(), Parallelism::None);
}

pub(crate) fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub(crate) fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.read(i, 0)).collect()
}

/// `A x` for a square matrix and a plain vector.
pub(crate) fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let xc = Col::<f64>::from_fn(x.len(), |i| x[i]);
    let y = a * &xc;
    (0..y.nrows()).map(|i| y.read(i)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
