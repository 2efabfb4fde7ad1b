//! Sampling operators `Φ: H → ℝᵐ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::{EigenExpansion, Function, FunctionBasis};
use crate::kernels::{Kernel, KernelError, KernelSpec};
use crate::linalg::{min_eigenvalue, sym_spectral_norm, Gram, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid sampling points: {0}")]
    InvalidPoints(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("function cannot be sampled by this operator: {0}")]
    RepresentationMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingVariant {
    /// Point evaluations `f(t_j)/√m` at increasing points in `(0, 1]`.
    TimeSampling { points: Vec<f64> },
    /// `L²` coefficients on the first `m` kernel eigenfunctions.
    BasisTruncation,
}

/// Result of [`SamplingOperator::nullspace_width_nm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "value")]
pub enum NullspaceWidth {
    Exact(f64),
    Unavailable,
}

/// A concrete sampling operator with its Gram matrices.
///
/// `K_ij = ⟨φ_i, φ_j⟩_H` (held with its Cholesky factor) and
/// `Θ_ij = ⟨φ_i, φ_j⟩_{L²}`. Representers are `φ_j = K(·, t_j)/√m` for time
/// sampling and `φ_j = μ_j ψ_j` for truncation.
#[derive(Debug)]
pub struct SamplingOperator {
    kernel: Arc<dyn Kernel>,
    variant: SamplingVariant,
    m: usize,
    sigma_scale: f64,
    gram: Gram,
    theta: DMatrix<f64>,
}

pub fn make_time_sampling(kernel: Arc<dyn Kernel>, points: Vec<f64>) -> Result<SamplingOperator, SamplingError> {
    SamplingOperator::time_sampling(kernel, points, false)
}

pub fn make_basis_truncation(kernel: Arc<dyn Kernel>, m: usize) -> Result<SamplingOperator, SamplingError> {
    SamplingOperator::basis_truncation(kernel, m)
}

/// `t_j = j/m`, `j = 1..=m`.
pub fn uniform_points(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64 / m as f64).collect()
}

impl SamplingOperator {
    /// Time sampling at `points`. With `ridge_fallback` a numerically singular
    /// `K` is replaced by `K + εI` instead of failing.
    pub fn time_sampling(
        kernel: Arc<dyn Kernel>,
        points: Vec<f64>,
        ridge_fallback: bool,
    ) -> Result<Self, SamplingError> {
        let m = points.len();
        if m == 0 {
            return Err(SamplingError::InvalidPoints("no points".into()));
        }
        for (j, &t) in points.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(SamplingError::InvalidPoints(format!("point {t} outside (0, 1]")));
            }
            if j > 0 && t <= points[j - 1] {
                return Err(SamplingError::InvalidPoints(format!(
                    "points must be strictly increasing ({} then {t})",
                    points[j - 1]
                )));
            }
            if kernel.vanishes_at(t) {
                return Err(SamplingError::InvalidPoints(format!("representer at {t} is zero")));
            }
        }
        let scale = 1.0 / m as f64;
        let k = DMatrix::from_fn(m, m, |i, j| kernel.evaluate(points[i], points[j]) * scale);
        let mut theta = DMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                let v = kernel.l2_inner_sections(points[i], points[j]) * scale;
                theta[(i, j)] = v;
                theta[(j, i)] = v;
            }
        }
        let gram = if ridge_fallback { Gram::with_ridge_fallback(k)? } else { Gram::new(k)? };
        Ok(Self {
            kernel,
            variant: SamplingVariant::TimeSampling { points },
            m,
            sigma_scale: scale.sqrt(),
            gram,
            theta,
        })
    }

    pub fn basis_truncation(kernel: Arc<dyn Kernel>, m: usize) -> Result<Self, SamplingError> {
        if m == 0 {
            return Err(SamplingError::InvalidParameter("m must be at least 1".into()));
        }
        let mu = DVector::from_fn(m, |k, _| kernel.eigenvalue(k + 1));
        let theta = DMatrix::from_diagonal(&mu.map(|v| v * v));
        let gram = Gram::new(DMatrix::from_diagonal(&mu))?;
        Ok(Self { kernel, variant: SamplingVariant::BasisTruncation, m, sigma_scale: 1.0, gram, theta })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn variant(&self) -> &SamplingVariant {
        &self.variant
    }

    pub fn is_truncation(&self) -> bool {
        matches!(self.variant, SamplingVariant::BasisTruncation)
    }

    pub fn points(&self) -> Option<&[f64]> {
        match &self.variant {
            SamplingVariant::TimeSampling { points } => Some(points),
            SamplingVariant::BasisTruncation => None,
        }
    }

    /// Factor converting the base noise level `σ₀` into `σ_m`.
    pub fn sigma_scale(&self) -> f64 {
        self.sigma_scale
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn k(&self) -> &DMatrix<f64> {
        self.gram.matrix()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// `Φf`.
    pub fn apply(&self, f: &Function) -> Result<DVector<f64>, SamplingError> {
        match (&self.variant, f) {
            (SamplingVariant::TimeSampling { points }, _) => {
                let scale = self.sigma_scale;
                Ok(DVector::from_iterator(
                    self.m,
                    points.iter().map(|&t| f.evaluate(self.kernel.as_ref(), t) * scale),
                ))
            }
            (SamplingVariant::BasisTruncation, Function::Eigen(e)) => Ok(self.apply_expansion(e)),
            (SamplingVariant::BasisTruncation, Function::Sections { points, weights }) => {
                Ok(DVector::from_fn(self.m, |k, _| {
                    points
                        .iter()
                        .zip(weights)
                        .map(|(p, w)| w * self.kernel.section_eigen_inner(*p, k + 1))
                        .sum()
                }))
            }
            (SamplingVariant::BasisTruncation, Function::Pointwise(_)) => Err(
                SamplingError::RepresentationMismatch("truncation needs eigenbasis coefficients".into()),
            ),
        }
    }

    /// `Φf` for an eigen-expanded `f`; valid for both variants.
    pub fn apply_expansion(&self, f: &EigenExpansion) -> DVector<f64> {
        match &self.variant {
            SamplingVariant::TimeSampling { points } => DVector::from_iterator(
                self.m,
                points.iter().map(|&t| f.evaluate(self.kernel.as_ref(), t) * self.sigma_scale),
            ),
            SamplingVariant::BasisTruncation => {
                let coeffs = f.l2_coeffs(self.kernel.as_ref());
                DVector::from_fn(self.m, |k, _| coeffs.get(k).copied().unwrap_or(0.0))
            }
        }
    }

    /// `Φ*a = Σ_j a_j φ_j`.
    pub fn adjoint(&self, a: &DVector<f64>) -> Function {
        assert_eq!(a.len(), self.m, "coefficient length must equal m");
        match &self.variant {
            SamplingVariant::TimeSampling { points } => Function::Sections {
                points: points.clone(),
                weights: a.iter().map(|v| v * self.sigma_scale).collect(),
            },
            SamplingVariant::BasisTruncation => Function::Eigen(EigenExpansion::new(
                a.iter().enumerate().map(|(k, v)| v * self.kernel.eigenvalue(k + 1).sqrt()).collect(),
            )),
        }
    }

    /// Coefficients `K⁻¹z` of the minimum-norm interpolant over the representers.
    pub fn interpolation_coeffs(&self, z: &DVector<f64>) -> DVector<f64> {
        self.gram.solve_vec(z)
    }

    /// `Φ*K⁻¹z`, the smallest-`H`-norm function with `Φg = z`.
    pub fn min_norm_interpolant(&self, z: &DVector<f64>) -> Function {
        self.adjoint(&self.interpolation_coeffs(z))
    }

    /// `‖Φ*a‖²_H = aᵀKa`.
    pub fn representer_hilbert_norm_sq(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(self.k() * a))
    }

    /// `‖Φ*a‖²_Φ = ‖ΦΦ*a‖² = ‖Ka‖²`.
    pub fn representer_phi_norm_sq(&self, a: &DVector<f64>) -> f64 {
        (self.k() * a).norm_squared()
    }

    /// `‖Φ*a‖²_{L²} = aᵀΘa`.
    pub fn representer_l2_norm_sq(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(&self.theta * a))
    }

    /// Function basis spanned by `Φ*A` for a coefficient matrix `A` (`m × r`).
    pub fn representer_basis(&self, a: &DMatrix<f64>) -> FunctionBasis {
        match &self.variant {
            SamplingVariant::TimeSampling { points } => FunctionBasis::from_sections(points.clone(), a * self.sigma_scale),
            SamplingVariant::BasisTruncation => {
                // L² coefficient of φ_k on ψ_k is μ_k.
                let mut coeffs = a.clone();
                for (k, mut row) in coeffs.row_iter_mut().enumerate() {
                    row *= self.kernel.eigenvalue(k + 1);
                }
                FunctionBasis::from_eigen_coeffs(coeffs)
            }
        }
    }

    /// `D_m = ‖K − K^(−1/2) Θ K^(−1/2)‖₂`.
    pub fn defect_dm(&self) -> Result<f64, SamplingError> {
        let isq = self.gram.inv_sqrt()?;
        let inner = &isq * &self.theta * &isq;
        Ok(sym_spectral_norm(&(self.k() - inner))?)
    }

    pub fn nullspace_width_nm(&self) -> NullspaceWidth {
        match self.variant {
            SamplingVariant::BasisTruncation => NullspaceWidth::Exact(self.kernel.eigenvalue(self.m + 1)),
            SamplingVariant::TimeSampling { .. } => NullspaceWidth::Unavailable,
        }
    }

    /// Smallest eigenvalue of `c₀K² − Θ`.
    pub fn b1_margin(&self, c0: f64) -> f64 {
        let k = self.k();
        min_eigenvalue(&((k * k) * c0 - &self.theta))
    }

    /// Condition (B1): `Θ ⪯ c₀K²`, up to `1e-10`.
    pub fn condition_b1(&self, c0: f64) -> bool {
        self.b1_margin(c0) >= -1e-10
    }

    /// Diagnostic `Ψ_ij = ⟨ψ_i, ψ_j⟩_Φ = (Φψ_i)ᵀ(Φψ_j)` for `i, j ≤ count`.
    pub fn psi_matrix(&self, count: usize) -> DMatrix<f64> {
        let mut samples = DMatrix::zeros(self.m, count);
        for k in 0..count {
            let psi = EigenExpansion::eigenfunction(self.kernel.as_ref(), k + 1);
            samples.set_column(k, &self.apply_expansion(&psi));
        }
        samples.transpose() * samples
    }
}

/// `C_m = max_ij |⟨z_i, z_j⟩ − δ_ij|` over the columns of `zstar`.
pub fn orthonormality_defect_cm(zstar: &DMatrix<f64>) -> f64 {
    crate::linalg::orthonormality_error(zstar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Time,
    Truncation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLayout {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsSpec {
    Layout(PointLayout),
    Explicit(Vec<f64>),
}

impl Default for PointsSpec {
    fn default() -> Self {
        PointsSpec::Layout(PointLayout::Uniform)
    }
}

/// JSON description of an operator, e.g.
/// `{"variant": "time", "m": 64, "points": "uniform", "kernel": "sobolev1"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub variant: VariantKind,
    pub m: usize,
    #[serde(default)]
    pub points: PointsSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub ridge_fallback: bool,
}

impl OperatorSpec {
    pub fn time(m: usize) -> Self {
        Self { variant: VariantKind::Time, m, points: PointsSpec::default(), kernel: KernelSpec::default(), ridge_fallback: false }
    }

    pub fn truncation(m: usize) -> Self {
        Self { variant: VariantKind::Truncation, ..Self::time(m) }
    }

    /// The same spec at a different `m` (explicit point lists are kept as is).
    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn build(&self) -> Result<SamplingOperator, SamplingError> {
        let kernel = self.kernel.build();
        match self.variant {
            VariantKind::Truncation => SamplingOperator::basis_truncation(kernel, self.m),
            VariantKind::Time => {
                let points = match &self.points {
                    PointsSpec::Layout(PointLayout::Uniform) => uniform_points(self.m),
                    PointsSpec::Explicit(p) => {
                        if p.len() != self.m {
                            return Err(SamplingError::InvalidPoints(format!(
                                "{} points given for m = {}",
                                p.len(),
                                self.m
                            )));
                        }
                        p.clone()
                    }
                };
                SamplingOperator::time_sampling(kernel, points, self.ridge_fallback)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::sobolev1_kernel;
    use crate::linalg::{sym_eigen, symmetrize};
    use crate::quadrature::simpson;
    use crate::rng::NormalStream;
    use std::f64::consts::PI;

    fn sob() -> Arc<dyn Kernel> {
        Arc::new(sobolev1_kernel())
    }

    fn time(m: usize) -> SamplingOperator {
        make_time_sampling(sob(), uniform_points(m)).unwrap()
    }

    fn random_vec(m: usize, s: &mut NormalStream) -> DVector<f64> {
        DVector::from_fn(m, |_, _| s.next_normal())
    }

    #[test]
    fn two_point_gram() {
        let op = make_time_sampling(sob(), vec![0.5, 1.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.25, 0.5]);
        assert!((op.k() - want).amax() < 1e-15);
        assert!((op.sigma_scale() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_gram_is_scaled_min() {
        let m = 7;
        let op = time(m);
        for i in 0..m {
            for j in 0..m {
                let want = (i.min(j) + 1) as f64 / (m * m) as f64;
                assert!((op.k()[(i, j)] - want).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn invalid_points_are_rejected() {
        for pts in [vec![0.2, 0.2], vec![0.5, 0.3], vec![0.0, 0.5], vec![0.5, 1.5], vec![]] {
            assert!(matches!(make_time_sampling(sob(), pts), Err(SamplingError::InvalidPoints(_))));
        }
    }

    #[test]
    fn nearly_coincident_points_are_singular() {
        let pts = vec![0.5, 0.5 + 1e-15];
        assert_eq!(
            make_time_sampling(sob(), pts.clone()).unwrap_err(),
            SamplingError::Linalg(LinalgError::SingularGram)
        );
        let op = SamplingOperator::time_sampling(sob(), pts, true).unwrap();
        assert!(op.gram().ridge() > 0.0);
    }

    #[test]
    fn truncation_matrices() {
        let op = make_basis_truncation(sob(), 3).unwrap();
        for (k, c) in [1.0, 3.0, 5.0].iter().enumerate() {
            let mu = (c * PI / 2.0).powi(-2);
            assert!((op.k()[(k, k)] - mu).abs() < 1e-16);
        }
        assert_eq!(op.theta(), &(op.k() * op.k()));
        assert_eq!(op.sigma_scale(), 1.0);
        let one = make_basis_truncation(sob(), 1).unwrap();
        assert_eq!(one.k().shape(), (1, 1));
        assert!(make_basis_truncation(sob(), 0).is_err());
    }

    #[test]
    fn time_sampling_of_eigenfunction() {
        let k = sobolev1_kernel();
        let op = time(4);
        let z = op.apply(&Function::Eigen(EigenExpansion::eigenfunction(&k, 1))).unwrap();
        let mu1 = k.eigenvalue(1);
        for j in 0..4 {
            let t = (j + 1) as f64 / 4.0;
            let want = 2f64.sqrt() * (t / mu1.sqrt()).sin() / 2.0;
            assert!((z[j] - want).abs() < 1e-14);
        }
        let pz = op.apply(&Function::pointwise(move |t| 2f64.sqrt() * (t / mu1.sqrt()).sin())).unwrap();
        assert!((pz - z).amax() < 1e-14);
    }

    #[test]
    fn truncation_of_eigenfunctions() {
        let k = sobolev1_kernel();
        let op = make_basis_truncation(sob(), 3).unwrap();
        let e2 = op.apply(&Function::Eigen(EigenExpansion::eigenfunction(&k, 2))).unwrap();
        assert!((e2 - DVector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-14);
        let e4 = op.apply(&Function::Eigen(EigenExpansion::eigenfunction(&k, 4))).unwrap();
        assert_eq!(e4.amax(), 0.0);
        assert!(matches!(
            op.apply(&Function::pointwise(|t| t)),
            Err(SamplingError::RepresentationMismatch(_))
        ));
    }

    #[test]
    fn truncation_of_sections_uses_eigen_equation() {
        // ⟨ψ_k, K(·,p)⟩_{L²} by quadrature.
        let k = sobolev1_kernel();
        let op = make_basis_truncation(sob(), 4).unwrap();
        let f = Function::Sections { points: vec![0.3, 0.8], weights: vec![1.5, -0.5] };
        let z = op.apply(&f).unwrap();
        for j in 0..4 {
            let q = simpson(|u| k.eigenfunction(j + 1, u) * f.evaluate(&k, u), 0.0, 1.0, 4000);
            assert!((z[j] - q).abs() < 1e-9, "{j}: {} vs {q}", z[j]);
        }
    }

    #[test]
    fn interpolation_and_norm_identities() {
        let mut s = NormalStream::new(11, 0);
        for op in [time(20), time(64), make_basis_truncation(sob(), 20).unwrap()] {
            let kern = op.kernel().clone();
            for _ in 0..100 {
                let z = random_vec(op.m(), &mut s);
                let g = op.min_norm_interpolant(&z);
                let back = op.apply(&g).unwrap();
                assert!((&back - &z).amax() < 1e-8 * z.amax().max(1.0));
                let h = g.hilbert_norm_sq(kern.as_ref()).unwrap();
                let want = op.gram().inv_quad_form(&z);
                assert!((h - want).abs() < 1e-8 * want.max(1.0), "{h} vs {want}");
            }
            let zero = op.min_norm_interpolant(&DVector::zeros(op.m()));
            assert_eq!(zero.hilbert_norm_sq(kern.as_ref()).unwrap(), 0.0);
        }
    }

    #[test]
    fn adjoint_identity() {
        let mut s = NormalStream::new(5, 2);
        for op in [time(16), make_basis_truncation(sob(), 16).unwrap()] {
            for _ in 0..20 {
                let a = random_vec(op.m(), &mut s);
                let b = random_vec(op.m(), &mut s);
                // f = Φ*b, so ⟨Φf, a⟩ = bᵀKa and ⟨f, Φ*a⟩_H = bᵀKa through K.
                let phi_f = op.apply(&op.adjoint(&b)).unwrap();
                let lhs = phi_f.dot(&a);
                let rhs = b.dot(&(op.k() * &a));
                assert!((lhs - rhs).abs() < 1e-8 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sampled_norm_is_bounded_by_hilbert_norm() {
        let mut s = NormalStream::new(3, 1);
        let kern = sobolev1_kernel();
        for op in [time(12), make_basis_truncation(sob(), 6).unwrap()] {
            for _ in 0..50 {
                let alpha: Vec<f64> = (0..15).map(|_| s.next_normal()).collect();
                let f = EigenExpansion::new(alpha);
                let z = op.apply_expansion(&f);
                assert!(op.gram().inv_quad_form(&z) <= f.hilbert_norm_sq() + 1e-8);
            }
            let _ = &kern;
        }
    }

    #[test]
    fn theta_is_psd_and_matches_quadrature() {
        let op = time(10);
        assert!(min_eigenvalue(op.theta()) >= -1e-10);
        let k = sobolev1_kernel();
        let pts = op.points().unwrap().to_vec();
        for i in [0, 4, 9] {
            for j in [1, 6, 9] {
                let q = simpson(|u| k.evaluate(u, pts[i]) * k.evaluate(u, pts[j]), 0.0, 1.0, 10_000) / 10.0;
                assert!((op.theta()[(i, j)] - q).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn defect_vanishes_for_truncation() {
        for m in [1, 5, 40] {
            let op = make_basis_truncation(sob(), m).unwrap();
            assert!(op.defect_dm().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn defect_single_point() {
        let op = make_time_sampling(sob(), vec![1.0]).unwrap();
        assert!((op.defect_dm().unwrap() - 2.0 / 3.0).abs() < 1e-10);
    }

    /// `max |aᵀK²a − aᵀΘa|` over `aᵀKa = 1`, as a generalized eigenproblem.
    fn defect_oracle(op: &SamplingOperator) -> f64 {
        let m = op.m();
        let chol = op.k().clone().cholesky().unwrap();
        let l = chol.l();
        let linv = l.clone().try_inverse().unwrap();
        let mut g = &linv * (op.k() * op.k() - op.theta()) * linv.transpose();
        symmetrize(&mut g);
        let e = sym_eigen(&g).unwrap();
        let exact = e.values[0].abs().max(e.values[m - 1].abs());

        // Random search never exceeds it and gets close.
        let mut s = NormalStream::new(m as u64, 9);
        let mut best = 0.0f64;
        for _ in 0..2000 {
            let a = random_vec(m, &mut s);
            let h = op.representer_hilbert_norm_sq(&a);
            let gap = (op.representer_phi_norm_sq(&a) - op.representer_l2_norm_sq(&a)).abs() / h;
            best = best.max(gap);
        }
        assert!(best <= exact * (1.0 + 1e-9));
        assert!(best >= 0.5 * exact);
        exact
    }

    #[test]
    fn defect_matches_direct_optimization() {
        for m in [3, 8, 16] {
            let op = time(m);
            let dm = op.defect_dm().unwrap();
            assert!(dm >= 0.0);
            assert!((dm - defect_oracle(&op)).abs() < 1e-8 * dm.max(1e-3));
        }
    }

    #[test]
    fn defect_decays_like_inverse_square() {
        let ms = [8.0f64, 16.0, 32.0, 64.0];
        let logs: Vec<(f64, f64)> = ms
            .iter()
            .map(|&m| (m.ln(), time(m as usize).defect_dm().unwrap().powi(2).ln()))
            .collect();
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((-2.6..=-1.4).contains(&slope), "slope {slope}");
    }

    #[test]
    fn nullspace_width() {
        for (m, c) in [(10, 21.0), (1, 3.0)] {
            let op = make_basis_truncation(sob(), m).unwrap();
            let NullspaceWidth::Exact(w) = op.nullspace_width_nm() else { panic!("truncation width is exact") };
            assert!((w - (c * PI / 2.0).powi(-2)).abs() < 1e-16);
        }
        assert_eq!(time(4).nullspace_width_nm(), NullspaceWidth::Unavailable);
    }

    #[test]
    fn orthonormality_defect() {
        assert_eq!(orthonormality_defect_cm(&DMatrix::identity(4, 2)), 0.0);
        let z = DMatrix::from_row_slice(2, 1, &[1.1, 0.0]);
        assert!((orthonormality_defect_cm(&z) - 0.21).abs() < 1e-14);

        let k = sobolev1_kernel();
        let op = make_basis_truncation(sob(), 3).unwrap();
        let mut zstar = DMatrix::zeros(3, 2);
        for j in 0..2 {
            let f = EigenExpansion::eigenfunction(&k, j + 1);
            zstar.set_column(j, &op.apply_expansion(&f));
        }
        let gram = zstar.transpose() * &zstar;
        let direct = (gram - DMatrix::<f64>::identity(2, 2)).amax();
        assert!((orthonormality_defect_cm(&zstar) - direct).abs() < 1e-15);
    }

    #[test]
    fn condition_b1() {
        let op = make_basis_truncation(sob(), 8).unwrap();
        assert!(op.condition_b1(1.0));
        assert!(!op.condition_b1(0.5));
        assert!(time(32).condition_b1(1.0));
    }

    #[test]
    fn psi_matrix_is_identity_under_truncation() {
        let op = make_basis_truncation(sob(), 6).unwrap();
        let psi = op.psi_matrix(4);
        assert!((psi - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        let t = time(32).psi_matrix(3);
        assert!(min_eigenvalue(&t) >= -1e-10);
    }

    #[test]
    fn spec_round_trip() {
        let spec: OperatorSpec =
            serde_json::from_str(r#"{"variant":"time","m":4,"points":"uniform","kernel":"sobolev1"}"#).unwrap();
        assert_eq!(spec, OperatorSpec::time(4));
        let op = spec.build().unwrap();
        assert_eq!(op.points().unwrap(), &[0.25, 0.5, 0.75, 1.0]);
        let spec: OperatorSpec = serde_json::from_str(r#"{"variant":"time","m":2,"points":[0.5,1.0]}"#).unwrap();
        assert_eq!(spec.build().unwrap().m(), 2);
        let spec: OperatorSpec = serde_json::from_str(r#"{"variant":"truncation","m":3}"#).unwrap();
        assert!(spec.build().unwrap().is_truncation());
        assert!(serde_json::from_str::<OperatorSpec>(r#"{"variant":"time","m":2,"pts":1}"#).is_err());
        let bad: OperatorSpec = serde_json::from_str(r#"{"variant":"time","m":3,"points":[0.5,1.0]}"#).unwrap();
        assert!(matches!(bad.build(), Err(SamplingError::InvalidPoints(_))));
    }
}
