//! Dense complex linear algebra used across the simulator.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex64`. The kernels here
//! wrap the decompositions with the tolerance contracts the rest of the crate
//! relies on: sorted singular values truncated at a numerical rank, Hermitian
//! eigendecompositions with a symmetry check, and orthonormal null-space bases.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, DdamError, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative threshold (against the largest singular value) below which a
/// singular value counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Allowed deviation from Hermitian symmetry, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `exp(j * phase)`.
pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Builds a matrix from row-major entries, rejecting NaN/Inf.
pub fn matrix_from_rows(rows: usize, cols: usize, entries: &[C64]) -> Result<ComplexMatrix> {
    if entries.len() != rows * cols {
        return Err(contract(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = ComplexMatrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(contract("matrix has non-finite entries"))
    }
}

pub fn frobenius_sq(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reduced SVD truncated to the numerical rank: `A ≈ U diag(s) V^H`.
#[derive(Clone, Debug)]
pub struct ReducedSvd {
    pub u: ComplexMatrix,
    /// Descending, strictly above `rank_tol * s_max`.
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl ReducedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

pub fn svd_reduced(a: &ComplexMatrix) -> Result<ReducedSvd> {
    svd_reduced_with_tol(a, DEFAULT_RANK_TOL)
}

pub fn svd_reduced_with_tol(a: &ComplexMatrix, rank_tol: f64) -> Result<ReducedSvd> {
    if a.is_empty() {
        return Err(contract("svd of an empty matrix"));
    }
    ensure_finite(a)?;
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| DdamError::Numerical(format!("svd did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let rank = (0..s.len()).take_while(|&k| s_max > 0.0 && s[k] > rank_tol * s_max).count();
    let (u, v) = (svd.U(), svd.V());
    Ok(ReducedSvd {
        u: ComplexMatrix::from_fn(a.nrows(), rank, |i, j| u[(i, j)]),
        singular_values: s[..rank].to_vec(),
        v: ComplexMatrix::from_fn(a.ncols(), rank, |i, j| v[(i, j)]),
    })
}

fn to_faer(a: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

/// Eigendecomposition of a Hermitian matrix. The input is symmetrized as
/// `(A + A^H) / 2` after checking it is Hermitian to within [`HERMITIAN_TOL`].
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<HermitianEigen> {
    if !a.is_square() || a.is_empty() {
        return Err(contract(format!(
            "eig_hermitian needs a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a)?;
    let skew = max_abs(&(a - a.adjoint()));
    if skew > HERMITIAN_TOL * max_abs(a).max(1.0) {
        return Err(contract(format!("matrix is not Hermitian (skew {skew:e})")));
    }
    let sym = to_faer(&hermitian_part(a));
    let eig = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| DdamError::Numerical(format!("eigendecomposition did not converge: {e:?}")))?;
    // faer sorts ascending
    let n = a.nrows();
    let (s, u) = (eig.S().column_vector(), eig.U());
    let values: Vec<f64> = (0..n).rev().map(|k| s[k].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(HermitianEigen { eigenvalues: values, eigenvectors: vectors })
}

pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Unit-norm eigenvector of the largest eigenvalue.
pub fn principal_eigenvector(a: &ComplexMatrix) -> Result<(f64, ComplexVector)> {
    let eig = eig_hermitian(a)?;
    Ok((eig.eigenvalues[0], eig.eigenvectors.column(0).into_owned()))
}

/// Orthonormal basis `B` of the orthogonal complement of `range(A)`, so that
/// `A^H B = 0` and `B^H B = I`. `A` is `n x c`; the basis has
/// `n - rank(A)` columns and may be empty.
pub fn null_space_basis(a: &ComplexMatrix, rank_tol: f64) -> Result<ComplexMatrix> {
    let n = a.nrows();
    if n == 0 {
        return Err(contract("null_space_basis of a matrix with no rows"));
    }
    if a.ncols() == 0 {
        return Ok(ComplexMatrix::identity(n, n));
    }
    let svd = svd_reduced_with_tol(a, rank_tol)?;
    Ok(orthonormal_complement(&svd.u))
}

/// Given orthonormal columns `Q0` (`n x r`), returns `n x (n - r)` orthonormal
/// columns spanning the complement, via Householder reflections of `Q0`.
pub fn orthonormal_complement(q0: &ComplexMatrix) -> ComplexMatrix {
    let n = q0.nrows();
    let r = q0.ncols();
    let mut work = q0.clone();
    let mut reflectors: Vec<ComplexVector> = Vec::with_capacity(r);

    for k in 0..r {
        let x = work.view((k, k), (n - k, 1)).column(0).into_owned();
        let norm = x.norm();
        let mut v = x.clone();
        if norm > 0.0 {
            let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { C64::new(1.0, 0.0) };
            v[0] += phase * norm;
        }
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v.unscale_mut(vnorm);
        }
        // apply H = I - 2 v v^H to the trailing block
        for j in k..r {
            let mut col = work.view_mut((k, j), (n - k, 1));
            let proj = v.dotc(&col.column(0).into_owned());
            col.column_mut(0).axpy(C64::new(-2.0, 0.0) * proj, &v, C64::new(1.0, 0.0));
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{r-1}; the trailing n - r columns of Q span the complement.
    let mut basis = ComplexMatrix::zeros(n, n - r);
    for j in 0..(n - r) {
        basis[(r + j, j)] = C64::new(1.0, 0.0);
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..(n - r) {
            let mut col = basis.view_mut((k, j), (n - k, 1));
            let proj = v.dotc(&col.column(0).into_owned());
            col.column_mut(0).axpy(C64::new(-2.0, 0.0) * proj, v, C64::new(1.0, 0.0));
        }
    }
    basis
}

/// Natural-log determinant of a Hermitian positive definite matrix.
pub fn ln_det_hpd(a: &ComplexMatrix) -> Result<f64> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| contract("matrix is not positive definite"))?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum())
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let chol = Cholesky::new(hermitian_part(a))
        .ok_or_else(|| contract("matrix is not positive definite"))?;
    Ok(chol.solve(b))
}

pub fn inverse_hpd(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.nrows();
    solve_hpd(a, &ComplexMatrix::identity(n, n))
}

/// Serializable matrix: dimensions plus row-major `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&ComplexMatrix> for MatrixRecord {
    fn from(m: &ComplexMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        MatrixRecord { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl TryFrom<&MatrixRecord> for ComplexMatrix {
    type Error = DdamError;

    fn try_from(rec: &MatrixRecord) -> Result<Self> {
        let entries: Vec<C64> = rec.data.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        matrix_from_rows(rec.rows, rec.cols, &entries)
    }
}
