//! Concrete representations of elements of the kernel's Hilbert space.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::kernels::Kernel;

/// `f = Σ_k √μ_k α_k ψ_k` with `‖f‖²_H = Σ α_k²` and `‖f‖²_{L²} = Σ μ_k α_k²`.
///
/// `alpha[0]` multiplies the first eigenfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenExpansion {
    pub alpha: Vec<f64>,
}

impl EigenExpansion {
    pub fn new(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }

    /// The eigenfunction `ψ_k` itself (`k >= 1`).
    pub fn eigenfunction(kernel: &dyn Kernel, k: usize) -> Self {
        let mut alpha = vec![0.0; k];
        alpha[k - 1] = kernel.eigenvalue(k).powf(-0.5);
        Self { alpha }
    }

    pub fn hilbert_norm_sq(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    /// Coefficients on `ψ_k` in `L²`: `c_k = √μ_k α_k`.
    pub fn l2_coeffs(&self, kernel: &dyn Kernel) -> Vec<f64> {
        self.alpha.iter().enumerate().map(|(i, a)| kernel.eigenvalue(i + 1).sqrt() * a).collect()
    }

    pub fn l2_inner(&self, other: &Self, kernel: &dyn Kernel) -> f64 {
        self.alpha
            .iter()
            .zip(&other.alpha)
            .enumerate()
            .map(|(i, (a, b))| kernel.eigenvalue(i + 1) * a * b)
            .sum()
    }

    pub fn evaluate(&self, kernel: &dyn Kernel, t: f64) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| kernel.eigenvalue(i + 1).sqrt() * a * kernel.eigenfunction(i + 1, t))
            .sum()
    }
}

/// A function given only through point evaluation.
#[derive(Clone)]
pub struct Pointwise(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for Pointwise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Pointwise(..)")
    }
}

#[derive(Debug, Clone)]
pub enum Function {
    Eigen(EigenExpansion),
    /// `f = Σ_j w_j K(·, p_j)`.
    Sections { points: Vec<f64>, weights: Vec<f64> },
    Pointwise(Pointwise),
}

impl Function {
    pub fn pointwise<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Function::Pointwise(Pointwise(Arc::new(f)))
    }

    pub fn evaluate(&self, kernel: &dyn Kernel, t: f64) -> f64 {
        match self {
            Function::Eigen(e) => e.evaluate(kernel, t),
            Function::Sections { points, weights } => {
                points.iter().zip(weights).map(|(p, w)| w * kernel.evaluate(t, *p)).sum()
            }
            Function::Pointwise(f) => (f.0)(t),
        }
    }

    /// `‖f‖²_H`, unavailable for point-evaluation-only functions.
    pub fn hilbert_norm_sq(&self, kernel: &dyn Kernel) -> Option<f64> {
        match self {
            Function::Eigen(e) => Some(e.hilbert_norm_sq()),
            Function::Sections { points, weights } => {
                let mut acc = 0.0;
                for (i, (pi, wi)) in points.iter().zip(weights).enumerate() {
                    for (pj, wj) in points[i..].iter().zip(&weights[i..]).skip(1) {
                        acc += 2.0 * wi * wj * kernel.evaluate(*pi, *pj);
                    }
                    acc += wi * wi * kernel.evaluate(*pi, *pi);
                }
                Some(acc)
            }
            Function::Pointwise(_) => None,
        }
    }
}

/// A finite family of functions, each a combination of kernel sections
/// `K(·, p_i)` and eigenfunctions `ψ_k`:
/// `f_j = Σ_i S_ij K(·, p_i) + Σ_k E_kj ψ_k`.
#[derive(Debug, Clone)]
pub struct FunctionBasis {
    pub points: Vec<f64>,
    /// `points.len() × dim`.
    pub section_coeffs: DMatrix<f64>,
    /// `L²` coefficients on `ψ_1, ψ_2, …`, one column per function.
    pub eigen_coeffs: DMatrix<f64>,
}

impl FunctionBasis {
    pub fn dim(&self) -> usize {
        self.section_coeffs.ncols().max(self.eigen_coeffs.ncols())
    }

    pub fn from_sections(points: Vec<f64>, coeffs: DMatrix<f64>) -> Self {
        let r = coeffs.ncols();
        Self { points, section_coeffs: coeffs, eigen_coeffs: DMatrix::zeros(0, r) }
    }

    pub fn from_eigen_coeffs(coeffs: DMatrix<f64>) -> Self {
        let r = coeffs.ncols();
        Self { points: Vec::new(), section_coeffs: DMatrix::zeros(0, r), eigen_coeffs: coeffs }
    }

    /// Basis spanned by eigen-expanded components.
    pub fn from_expansions(components: &[EigenExpansion], kernel: &dyn Kernel) -> Self {
        let len = components.iter().map(|c| c.alpha.len()).max().unwrap_or(0);
        let mut coeffs = DMatrix::zeros(len, components.len());
        for (j, c) in components.iter().enumerate() {
            for (k, v) in c.l2_coeffs(kernel).into_iter().enumerate() {
                coeffs[(k, j)] = v;
            }
        }
        Self::from_eigen_coeffs(coeffs)
    }

    /// Values of every basis function at `t`.
    pub fn evaluate(&self, kernel: &dyn Kernel, t: f64) -> Vec<f64> {
        let r = self.dim();
        let mut out = vec![0.0; r];
        for (i, p) in self.points.iter().enumerate() {
            let kv = kernel.evaluate(t, *p);
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.section_coeffs[(i, j)] * kv;
            }
        }
        for k in 0..self.eigen_coeffs.nrows() {
            let psi = kernel.eigenfunction(k + 1, t);
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.eigen_coeffs[(k, j)] * psi;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::sobolev1_kernel;

    #[test]
    fn eigenfunction_norms() {
        let k = sobolev1_kernel();
        let psi1 = EigenExpansion::eigenfunction(&k, 1);
        assert!((psi1.hilbert_norm_sq().sqrt() - std::f64::consts::PI / 2.0).abs() < 1e-14);
        assert!((psi1.l2_inner(&psi1, &k) - 1.0).abs() < 1e-14);
        for t in [0.1, 0.5, 0.9] {
            assert!((psi1.evaluate(&k, t) - k.eigenfunction(1, t)).abs() < 1e-14);
        }
    }

    #[test]
    fn section_norm_is_kernel_quadratic_form() {
        let k = sobolev1_kernel();
        let f = Function::Sections { points: vec![0.5, 1.0], weights: vec![1.0, -1.0] };
        // K = [[.5,.5],[.5,1]]: wᵀKw = .5 - 1 + 1 = .5
        assert!((f.hilbert_norm_sq(&k).unwrap() - 0.5).abs() < 1e-15);
        assert!(Function::pointwise(|t| t).hilbert_norm_sq(&k).is_none());
    }

    #[test]
    fn basis_evaluation_matches_functions() {
        let k = sobolev1_kernel();
        let comps = vec![EigenExpansion::eigenfunction(&k, 2), EigenExpansion::new(vec![1.0, 0.0, 2.0])];
        let b = FunctionBasis::from_expansions(&comps, &k);
        for t in [0.2, 0.7] {
            let v = b.evaluate(&k, t);
            assert!((v[0] - comps[0].evaluate(&k, t)).abs() < 1e-14);
            assert!((v[1] - comps[1].evaluate(&k, t)).abs() < 1e-14);
        }
    }
}
