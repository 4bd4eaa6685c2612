//! Dense Hermitian eigensolvers.
//!
//! faer's solver loses accuracy when matrix entries are far from unit size
//! (Hamiltonians in rad/s reach 1e14), so the input is normalized by its
//! largest entry first and the eigenvalues are scaled back.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn max_abs<T>(m: &Mat<T>, abs: impl Fn(&T) -> f64) -> f64 {
    let mut s: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s = s.max(abs(&m[(i, j)]));
        }
    }
    s
}

/// Ascending eigenvalues and column eigenvectors of a real symmetric matrix.
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = m.nrows();
    let scale = max_abs(m, |x| x.abs());
    if scale == 0.0 {
        return Ok((vec![0.0; n], Mat::identity(n, n)));
    }
    let scaled = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)] / scale);
    let eig = scaled
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vals = eig.S().column_vector().iter().map(|x| x * scale).collect();
    Ok((vals, eig.U().to_owned()))
}

/// Ascending eigenvalues and column eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &Mat<Complex64>) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let n = m.nrows();
    let scale = max_abs(m, |x| x.norm());
    if scale == 0.0 {
        return Ok((vec![0.0; n], Mat::identity(n, n)));
    }
    let scaled = Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)] / scale);
    let eig = scaled
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let vals = eig.S().column_vector().iter().map(|x| x.re * scale).collect();
    Ok((vals, eig.U().to_owned()))
}


/// Caps the worker threads used by the dense kernels; 1 runs them serially.
pub fn set_threads(n: usize) {
    let par = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
    faer::set_global_parallelism(par);
}
