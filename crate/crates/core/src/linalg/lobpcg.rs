//! Locally optimal block preconditioned conjugate gradient (LOBPCG) for the
//! largest eigenpairs of a symmetric operator.

use nalgebra::{DMatrix, DVector};

use super::{orthonormal_extension, sym_eigen, symmetrize, LinalgError};

/// Result of [`lobpcg_top`]: the `want` largest Ritz pairs, values descending.
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// Residual norms of the returned pairs.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Ritz values of the whole block, descending.
    pub block_values: Vec<f64>,
    /// Full block from the last iteration, suitable as a warm start.
    pub block: DMatrix<f64>,
}

/// Largest `want` eigenpairs of the symmetric operator `apply`.
///
/// `x0` is the starting block (its column count is the block size and must be
/// at least `want`); `precond` holds a diagonal preconditioner applied to the
/// residuals. Iteration stops once every wanted residual norm is below
/// `tol * scale`.
pub fn lobpcg_top<A>(
    apply: A,
    precond: &DVector<f64>,
    x0: &DMatrix<f64>,
    want: usize,
    tol: f64,
    scale: f64,
    max_iter: usize,
) -> Result<TopEigen, LinalgError>
where
    A: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let block = x0.ncols();
    assert!(want >= 1 && block >= want, "block size must cover the wanted pairs");
    let mut x = orthonormal_extension(&DMatrix::zeros(x0.nrows(), 0), x0, 1e-12);
    if x.ncols() < want {
        return Err(LinalgError::RankDeficient);
    }
    let mut ax = apply(&x);
    let (mut values, rot) = rayleigh_ritz(&x, &ax, x.ncols())?;
    x = &x * &rot;
    ax = &ax * &rot;

    let threshold = tol * scale;
    let mut p: Option<DMatrix<f64>> = None;
    let mut iterations = 0;
    loop {
        let mut residual = &ax - &x * DMatrix::from_diagonal(&DVector::from_column_slice(&values));
        let norms: Vec<f64> = residual.column_iter().map(|c| c.norm()).collect();
        let converged = norms.iter().take(want).all(|&r| r <= threshold);
        if converged || iterations >= max_iter {
            return Ok(TopEigen {
                values: values[..want].to_vec(),
                vectors: x.columns(0, want).into_owned(),
                residuals: norms[..want].to_vec(),
                iterations,
                converged,
                block_values: values,
                block: x,
            });
        }
        iterations += 1;

        for (i, mut row) in residual.row_iter_mut().enumerate() {
            row *= precond[i];
        }
        let candidates = match &p {
            Some(p) => {
                let mut c = DMatrix::zeros(x.nrows(), residual.ncols() + p.ncols());
                c.columns_mut(0, residual.ncols()).copy_from(&residual);
                c.columns_mut(residual.ncols(), p.ncols()).copy_from(p);
                c
            }
            None => residual,
        };
        let extra = orthonormal_extension(&x, &candidates, 1e-10);
        if extra.ncols() == 0 {
            // Krylov space exhausted: the block is invariant.
            return Ok(TopEigen {
                values: values[..want].to_vec(),
                vectors: x.columns(0, want).into_owned(),
                residuals: norms[..want].to_vec(),
                iterations,
                converged: norms.iter().take(want).all(|&r| r <= threshold.max(1e-14 * scale)),
                block_values: values,
                block: x,
            });
        }
        let a_extra = apply(&extra);

        let nx = x.ncols();
        let total = nx + extra.ncols();
        let mut basis = DMatrix::zeros(x.nrows(), total);
        basis.columns_mut(0, nx).copy_from(&x);
        basis.columns_mut(nx, extra.ncols()).copy_from(&extra);
        let mut a_basis = DMatrix::zeros(x.nrows(), total);
        a_basis.columns_mut(0, nx).copy_from(&ax);
        a_basis.columns_mut(nx, extra.ncols()).copy_from(&a_extra);

        let (new_values, coeffs) = rayleigh_ritz(&basis, &a_basis, nx)?;
        values = new_values;
        x = &basis * &coeffs;
        ax = &a_basis * &coeffs;
        p = Some(&extra * coeffs.rows(nx, extra.ncols()));
    }
}

/// Rayleigh–Ritz on an orthonormal `basis`: returns the top `keep` Ritz values
/// and the coefficient matrix mapping the basis onto the Ritz vectors.
fn rayleigh_ritz(
    basis: &DMatrix<f64>,
    a_basis: &DMatrix<f64>,
    keep: usize,
) -> Result<(Vec<f64>, DMatrix<f64>), LinalgError> {
    let mut h = basis.transpose() * a_basis;
    symmetrize(&mut h);
    let eig = sym_eigen(&h)?;
    let values = eig.values.iter().take(keep).copied().collect();
    Ok((values, eig.vectors.columns(0, keep).into_owned()))
}
