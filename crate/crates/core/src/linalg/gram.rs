use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{sym_eigen, LinalgError};

/// Smallest accepted squared Cholesky pivot, relative to the largest diagonal entry.
const PIVOT_RTOL: f64 = 1e-14;

/// A symmetric positive definite Gram matrix `K` with its Cholesky factor.
///
/// `K⁻¹` is only ever applied through the factor (or through the cached
/// eigendecomposition on the large-scale path); it is never stored.
#[derive(Debug)]
pub struct Gram {
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    diagonal: bool,
    ridge: f64,
    spectrum: OnceLock<Result<Spectrum, LinalgError>>,
}

/// Orthonormal eigenbasis of a Gram matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub basis: EigenBasis,
}

/// Eigenvectors, stored as a permutation when the Gram matrix is diagonal.
#[derive(Debug, Clone)]
pub enum EigenBasis {
    /// Eigenvector `j` is the standard basis vector `e_{perm[j]}`.
    Permutation(Vec<usize>),
    Dense(DMatrix<f64>),
}

impl Gram {
    pub fn new(k: DMatrix<f64>) -> Result<Self, LinalgError> {
        Self::build(k, false)
    }

    /// Like [`Gram::new`], but on factorization failure retries with
    /// `K + εI`, `ε = 1e-12 · trace(K) / m`.
    pub fn with_ridge_fallback(k: DMatrix<f64>) -> Result<Self, LinalgError> {
        Self::build(k, true)
    }

    fn build(k: DMatrix<f64>, ridge_fallback: bool) -> Result<Self, LinalgError> {
        let m = k.nrows();
        if k.ncols() != m || m == 0 {
            return Err(LinalgError::NotSymmetric(format!("shape {}x{}", m, k.ncols())));
        }
        let scale = k.amax();
        for j in 0..m {
            for i in (j + 1)..m {
                if (k[(i, j)] - k[(j, i)]).abs() > 1e-12 * scale {
                    return Err(LinalgError::NotSymmetric(format!("entry ({i},{j})")));
                }
            }
        }
        let diagonal = (0..m).all(|j| (0..m).all(|i| i == j || k[(i, j)] == 0.0));
        match factorize(&k) {
            Some(factor) => Ok(Self::assemble(k, factor, diagonal, 0.0)),
            None if ridge_fallback => {
                let ridge = 1e-12 * k.trace() / m as f64;
                let shifted = &k + DMatrix::identity(m, m) * ridge;
                let factor = factorize(&shifted).ok_or(LinalgError::SingularGram)?;
                Ok(Self::assemble(shifted, factor, diagonal, ridge))
            }
            None => Err(LinalgError::SingularGram),
        }
    }

    fn assemble(matrix: DMatrix<f64>, factor: Cholesky<f64, Dyn>, diagonal: bool, ridge: f64) -> Self {
        Self { matrix, factor, diagonal, ridge, spectrum: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Ridge added by the fallback path (0 when the plain factorization succeeded).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `K⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        if self.diagonal {
            let mut out = b.clone();
            for (i, mut row) in out.row_iter_mut().enumerate() {
                row /= self.matrix[(i, i)];
            }
            return out;
        }
        self.factor.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        if self.diagonal {
            return DVector::from_fn(b.len(), |i, _| b[i] / self.matrix[(i, i)]);
        }
        self.factor.solve(b)
    }

    /// `zᵀ K⁻¹ z`, the squared K-norm.
    pub fn inv_quad_form(&self, z: &DVector<f64>) -> f64 {
        z.dot(&self.solve_vec(z))
    }

    /// `K⁻¹` assembled by solving against the identity, then symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut inv = self.solve(&DMatrix::identity(m, m));
        super::symmetrize(&mut inv);
        inv
    }

    /// Eigendecomposition of `K`, computed on first use.
    pub fn spectrum(&self) -> Result<&Spectrum, LinalgError> {
        self.spectrum
            .get_or_init(|| self.compute_spectrum())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_spectrum(&self) -> Result<Spectrum, LinalgError> {
        let m = self.dim();
        if self.diagonal {
            let mut perm: Vec<usize> = (0..m).collect();
            perm.sort_by(|&a, &b| self.matrix[(b, b)].total_cmp(&self.matrix[(a, a)]));
            let values = DVector::from_iterator(m, perm.iter().map(|&i| self.matrix[(i, i)]));
            return Ok(Spectrum { values, basis: EigenBasis::Permutation(perm) });
        }
        let eig = sym_eigen(&self.matrix)?;
        if eig.values[m - 1] <= 0.0 {
            return Err(LinalgError::SingularGram);
        }
        Ok(Spectrum { values: eig.values, basis: EigenBasis::Dense(eig.vectors) })
    }

    /// `trace(K⁻¹)`.
    pub fn trace_inverse(&self) -> Result<f64, LinalgError> {
        if self.diagonal {
            return Ok((0..self.dim()).map(|i| 1.0 / self.matrix[(i, i)]).sum());
        }
        Ok(self.spectrum()?.values.iter().map(|v| 1.0 / v).sum())
    }

    /// The symmetric inverse square root `K^(-1/2)`.
    pub fn inv_sqrt(&self) -> Result<DMatrix<f64>, LinalgError> {
        let spec = self.spectrum()?;
        let scaled = DVector::from_iterator(spec.values.len(), spec.values.iter().map(|v| v.powf(-0.5)));
        Ok(spec.reconstruct(&scaled))
    }
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coordinates in the eigenbasis, `Uᵀ X`.
    pub fn to_coords(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            EigenBasis::Permutation(perm) => DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(perm[i], j)]),
            EigenBasis::Dense(u) => u.transpose() * x,
        }
    }

    /// Back from eigenbasis coordinates, `U C`.
    pub fn from_coords(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            EigenBasis::Permutation(perm) => {
                let mut out = DMatrix::zeros(c.nrows(), c.ncols());
                for (i, &p) in perm.iter().enumerate() {
                    out.set_row(p, &c.row(i));
                }
                out
            }
            EigenBasis::Dense(u) => u * c,
        }
    }

    /// `Uᵀ S U` for a symmetric `S`.
    pub fn rotate_symmetric(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = match &self.basis {
            EigenBasis::Permutation(perm) => DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(perm[i], perm[j])]),
            EigenBasis::Dense(u) => {
                let su = s * u;
                u.transpose() * su
            }
        };
        super::symmetrize(&mut out);
        out
    }

    /// `Y U` for a data matrix whose columns live in the original coordinates.
    pub fn rotate_rows(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            EigenBasis::Permutation(perm) => DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, perm[j])]),
            EigenBasis::Dense(u) => y * u,
        }
    }

    /// `U diag(d) Uᵀ`.
    pub fn reconstruct(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let m = self.dim();
        match &self.basis {
            EigenBasis::Permutation(perm) => {
                let mut out = DMatrix::zeros(m, m);
                for (i, &p) in perm.iter().enumerate() {
                    out[(p, p)] = d[i];
                }
                out
            }
            EigenBasis::Dense(u) => {
                let mut scaled = u.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                let mut out = scaled * u.transpose();
                super::symmetrize(&mut out);
                out
            }
        }
    }
}

fn factorize(k: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let max_diag = (0..k.nrows()).map(|i| k[(i, i)]).fold(0.0f64, f64::max);
    if !(max_diag > 0.0) || k.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let factor = Cholesky::new(k.clone())?;
    let l = factor.l_dirty();
    let min_pivot = (0..k.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_RTOL * max_diag).then_some(factor)
}
