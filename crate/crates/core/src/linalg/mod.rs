//! Dense symmetric linear algebra on top of `nalgebra`.
//!
//! Eigenvalues are always reported in descending order. Cholesky factors and
//! eigendecompositions of Gram matrices are cached on [`Gram`].

mod gram;
mod lobpcg;

pub use gram::{EigenBasis, Gram, Spectrum};
pub use lobpcg::{lobpcg_top, TopEigen};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("Gram matrix is not numerically positive definite")]
    SingularGram,
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    #[error("matrix must be square and symmetric ({0})")]
    NotSymmetric(String),
    #[error("columns are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("matrix has deficient column rank")]
    RankDeficient,
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymEigen, LinalgError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEigen { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 + 200 * n)
        .ok_or(LinalgError::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    sym_eigen(&s).map(|e| e.values[e.values.len() - 1]).unwrap_or(f64::NAN)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let e = sym_eigen(&s)?;
    Ok(e.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// `max_ij |(ZᵀZ − I)_ij|`.
pub fn orthonormality_error(z: &DMatrix<f64>) -> f64 {
    let g = z.transpose() * z;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis for the column span of `z` (thin QR). Fails when a column
/// is numerically dependent on the others.
pub fn orthonormal_basis(z: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let (rows, cols) = z.shape();
    if cols > rows {
        return Err(LinalgError::RankDeficient);
    }
    let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let qr = z.clone().qr();
    let r = qr.r();
    for k in 0..cols {
        if !(r[(k, k)].abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(LinalgError::RankDeficient);
        }
    }
    Ok(qr.q())
}

/// Extend an orthonormal block `base` by the components of `candidates`
/// orthogonal to it, using two passes of classical Gram–Schmidt. Columns that
/// lose more than `drop_rtol` of their norm in projection are dropped.
pub(crate) fn orthonormal_extension(
    base: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    drop_rtol: f64,
) -> DMatrix<f64> {
    let m = candidates.nrows();
    let mut v = candidates.clone();
    if base.ncols() > 0 {
        for _ in 0..2 {
            let proj = base.transpose() * &v;
            v -= base * proj;
        }
    }
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(v.ncols());
    for j in 0..v.ncols() {
        let original = candidates.column(j).norm();
        if original == 0.0 {
            continue;
        }
        let mut col: DVector<f64> = v.column(j).into_owned();
        for _ in 0..2 {
            for q in &kept {
                let d = q.dot(&col);
                col.axpy(-d, q, 1.0);
            }
        }
        let norm = col.norm();
        if norm > drop_rtol * original && norm > 0.0 {
            kept.push(col / norm);
        }
    }
    let mut out = DMatrix::zeros(m, kept.len());
    for (j, q) in kept.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}
