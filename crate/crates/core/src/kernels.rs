//! Reproducing kernels on `[0, 1]` with known Mercer eigenpairs.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::adaptive_simpson;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("argument {0} lies outside the kernel domain [0, 1]")]
    Domain(f64),
}

/// A positive semidefinite kernel on `[0, 1]` whose integral operator has an
/// explicitly known eigendecomposition.
///
/// Eigenvalues are indexed from 1 and must be nonincreasing; eigenfunctions
/// are orthonormal in `L²[0, 1]`.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn evaluate(&self, s: f64, t: f64) -> f64;

    /// Mercer eigenvalue `μ_k`, `k >= 1`.
    fn eigenvalue(&self, k: usize) -> f64;

    /// Mercer eigenfunction `ψ_k(t)`, `k >= 1`.
    fn eigenfunction(&self, k: usize, t: f64) -> f64;

    /// Polynomial decay exponent: `μ_k <= c k^(-2 alpha)`.
    fn decay_alpha(&self) -> f64;

    /// The constant `c` of the decay bound.
    fn decay_constant(&self) -> f64;

    /// `∫₀¹ K(u, s) K(u, t) du`.
    fn l2_inner_sections(&self, s: f64, t: f64) -> f64 {
        let f = |u: f64| self.evaluate(u, s) * self.evaluate(u, t);
        adaptive_simpson(&f, 0.0, 1.0, 1e-10, &[s, t])
    }

    /// `∫₀¹ K(u, t) ψ_k(u) du`, which equals `μ_k ψ_k(t)` by the eigen-equation.
    fn section_eigen_inner(&self, t: f64, k: usize) -> f64 {
        self.eigenvalue(k) * self.eigenfunction(k, t)
    }

    /// Whether the representer of evaluation at `t` is the zero function.
    fn vanishes_at(&self, t: f64) -> bool {
        self.evaluate(t, t) == 0.0
    }
}

/// First-order Sobolev kernel `min(s, t)`: functions with `f(0) = 0` and
/// square-integrable derivative, `<f, g>_H = ∫ f' g'`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sobolev1;

pub fn sobolev1_kernel() -> Sobolev1 {
    Sobolev1
}

impl Kernel for Sobolev1 {
    fn name(&self) -> &'static str {
        "sobolev1"
    }

    fn evaluate(&self, s: f64, t: f64) -> f64 {
        s.min(t)
    }

    fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k >= 1, "eigen-indices start at 1");
        let w = (2 * k - 1) as f64 * PI / 2.0;
        1.0 / (w * w)
    }

    fn eigenfunction(&self, k: usize, t: f64) -> f64 {
        assert!(k >= 1, "eigen-indices start at 1");
        let w = (2 * k - 1) as f64 * PI / 2.0;
        SQRT_2 * (w * t).sin()
    }

    fn decay_alpha(&self) -> f64 {
        1.0
    }

    fn decay_constant(&self) -> f64 {
        4.0 / (PI * PI)
    }

    fn l2_inner_sections(&self, s: f64, t: f64) -> f64 {
        let (a, b) = if s <= t { (s, t) } else { (t, s) };
        a * b - a * b * b / 2.0 - a * a * a / 6.0
    }
}

/// Checked form of [`Kernel::l2_inner_sections`].
pub fn kernel_l2_inner_sections(kern: &dyn Kernel, s: f64, t: f64) -> Result<f64, KernelError> {
    for x in [s, t] {
        if !(0.0..=1.0).contains(&x) {
            return Err(KernelError::Domain(x));
        }
    }
    Ok(kern.l2_inner_sections(s, t))
}

/// Kernel selector used by JSON configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    Sobolev1,
}

impl KernelSpec {
    pub fn build(self) -> std::sync::Arc<dyn Kernel> {
        match self {
            KernelSpec::Sobolev1 => std::sync::Arc::new(Sobolev1),
        }
    }
}
