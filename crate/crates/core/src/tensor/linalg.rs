//! Spectral tests and linear frame inversion.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Default absolute tolerance for equality and Hermiticity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used by [`frame_solve`] and [`span_rank`].
pub const SVD_CUTOFF: f64 = 1e-10;

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    m.require_square()?;
    if m.rows() == 0 {
        return Ok(Vec::new());
    }
    let h = m.hermitian_part().to_nalgebra();
    let eig = h.symmetric_eigen();
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

/// True iff `m` is Hermitian within `tol` and no eigenvalue is below `-tol`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    m.require_square()?;
    if !m.is_hermitian(tol) {
        return Ok(false);
    }
    Ok(min_eigenvalue(m)? >= -tol)
}

/// Result of a least-squares frame inversion.
#[derive(Debug, Clone)]
pub struct FrameSolution {
    pub solution: ComplexMatrix,
    /// Number of singular values above the cutoff.
    pub rank: usize,
    /// Dimension of the operator space, d².
    pub required_rank: usize,
    /// Euclidean norm of `tr(frame_k X) - coefficients_k` over k.
    pub residual: f64,
    /// Ratio of the largest to the smallest retained singular value.
    pub condition_number: f64,
}

impl FrameSolution {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.required_rank
    }
}

/// Rows are `vec(F_kᵀ)` so that `row_k · vec(X) = tr(F_k X)` for row-major `vec`.
fn design_matrix(frame: &[ComplexMatrix]) -> Result<(DMatrix<Complex64>, usize)> {
    let first = frame.first().ok_or(Error::EmptyFrame)?;
    let d = first.require_square()?;
    let mut a = DMatrix::<Complex64>::zeros(frame.len(), d * d);
    for (k, f) in frame.iter().enumerate() {
        if f.rows() != d || f.cols() != d {
            return Err(Error::Dimension(format!(
                "frame element {k} is {}x{}, expected {d}x{d}",
                f.rows(),
                f.cols()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                a[(k, j * d + i)] = f[(i, j)];
            }
        }
    }
    Ok((a, d))
}

/// Least-squares solution of `tr(frame_k · X) = coefficients_k`.
///
/// Uses the SVD pseudoinverse of the design matrix with singular values below
/// `SVD_CUTOFF · σ_max` discarded, so rank deficiency shows up in `rank`.
pub fn frame_solve(frame: &[ComplexMatrix], coefficients: &[f64]) -> Result<FrameSolution> {
    if frame.len() != coefficients.len() {
        return Err(Error::Dimension(format!(
            "{} frame operators but {} coefficients",
            frame.len(),
            coefficients.len()
        )));
    }
    let (a, d) = design_matrix(frame)?;
    let rhs = nalgebra::DVector::from_iterator(coefficients.len(), coefficients.iter().map(|&x| Complex64::new(x, 0.0)));
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?;
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cutoff = SVD_CUTOFF * smax;

    let ut_b = u.adjoint() * &rhs;
    let mut x = nalgebra::DVector::<Complex64>::zeros(d * d);
    let mut rank = 0;
    let mut smin = f64::INFINITY;
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff && sk > 0.0 {
            rank += 1;
            smin = smin.min(sk);
            let coef = ut_b[k] / sk;
            // x += coef * (row k of V^T)^dagger
            for (xi, vik) in x.iter_mut().zip(v_t.row(k).iter()) {
                *xi += coef * vik.conj();
            }
        }
    }
    let residual = (&a * &x - &rhs).norm();
    let solution = ComplexMatrix::from_fn(d, d, |i, j| x[i * d + j]);
    Ok(FrameSolution {
        solution,
        rank,
        required_rank: d * d,
        residual,
        condition_number: if rank == 0 { f64::INFINITY } else { smax / smin },
    })
}

/// Dimension of the linear span of `ops` (rank of their Gram matrix).
pub fn span_rank(ops: &[ComplexMatrix]) -> Result<usize> {
    let (a, _) = design_matrix(ops)?;
    let s = a.singular_values();
    let smax = s.iter().copied().fold(0.0, f64::max);
    Ok(s.iter().filter(|&&x| x > SVD_CUTOFF * smax && x > 0.0).count())
}

/// Forward map of [`frame_solve`]: `tr(frame_k · X)` for every k (real parts).
pub fn frame_coefficients(frame: &[ComplexMatrix], x: &ComplexMatrix) -> Vec<f64> {
    frame.iter().map(|f| f.trace_product(x).re).collect()
}
