//! Subspace distances in `ℝᵐ` and in `L²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::function::FunctionBasis;
use crate::kernels::Kernel;
use crate::linalg::{orthonormality_error, sym_eigen, symmetrize, LinalgError};
use crate::quadrature::simpson;
use crate::sampling::SamplingOperator;

/// Largest accepted condition number of an `L²` Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("columns are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("L2 Gram matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditionedGram(f64),
    #[error("quadrature check failed: max deviation {0:.3e}")]
    QuadratureMismatch(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_orthonormal(z: &DMatrix<f64>) -> Result<(), MetricsError> {
    let err = orthonormality_error(z);
    if err > ORTHONORMAL_TOL || !err.is_finite() {
        return Err(MetricsError::NotOrthonormal(err));
    }
    Ok(())
}

fn check_rows(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<(), MetricsError> {
    if z1.nrows() != z2.nrows() {
        return Err(MetricsError::Shape(format!("{} vs {} rows", z1.nrows(), z2.nrows())));
    }
    Ok(())
}

/// `‖Z₁Z₁ᵀ − Z₂Z₂ᵀ‖²_HS` for orthonormal `Z₁`, `Z₂`.
pub fn subspace_distance_discrete_sq(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64, MetricsError> {
    check_rows(z1, z2)?;
    check_orthonormal(z1)?;
    check_orthonormal(z2)?;
    // ‖P₁ − P₂‖² = ‖(I − P₂)Z₁‖² + ‖(I − P₁)Z₂‖², which avoids cancellation near zero.
    let cross = z1.transpose() * z2;
    let r1 = z1 - z2 * cross.transpose();
    let r2 = z2 - z1 * &cross;
    let mut sq: Vec<f64> = r1.iter().chain(r2.iter()).map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    Ok(sq.iter().sum())
}

pub fn subspace_distance_discrete(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64, MetricsError> {
    subspace_distance_discrete_sq(z1, z2).map(f64::sqrt)
}

/// Principal angles between `colsp(Z₁)` and `colsp(Z₂)`, ascending.
pub fn principal_angles(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<Vec<f64>, MetricsError> {
    check_rows(z1, z2)?;
    if z1.ncols() != z2.ncols() {
        return Err(MetricsError::Shape(format!("{} vs {} columns", z1.ncols(), z2.ncols())));
    }
    check_orthonormal(z1)?;
    check_orthonormal(z2)?;
    let cross = z1.transpose() * z2;
    let sv = cross.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// `L²` inner products between [`FunctionBasis`] members.
///
/// Section/section and section/eigenfunction products use the kernel's closed
/// forms; eigenfunction coefficients are already `L²` coordinates.
#[derive(Clone)]
pub struct L2GramContext {
    kernel: Arc<dyn Kernel>,
    /// Points with their section Gram `⟨K(·,p_i), K(·,p_j)⟩_{L²}`.
    cached: Option<(Vec<f64>, DMatrix<f64>)>,
    pub panels: usize,
    pub tolerance: f64,
}

impl L2GramContext {
    pub fn new(kernel: Arc<dyn Kernel>) -> Self {
        Self { kernel, cached: None, panels: 10_000, tolerance: 1e-6 }
    }

    /// Context reusing the operator's `Θ` for its own sampling points.
    pub fn for_operator(op: &SamplingOperator) -> Self {
        let mut ctx = Self::new(op.kernel().clone());
        if let Some(points) = op.points() {
            let s2 = op.sigma_scale() * op.sigma_scale();
            ctx.cached = Some((points.to_vec(), op.theta() / s2));
        }
        ctx
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    fn section_gram(&self, p: &[f64], q: &[f64]) -> DMatrix<f64> {
        if let Some((pts, l)) = &self.cached {
            if pts.as_slice() == p && pts.as_slice() == q {
                return l.clone();
            }
        }
        DMatrix::from_fn(p.len(), q.len(), |i, j| self.kernel.l2_inner_sections(p[i], q[j]))
    }

    fn section_eigen(&self, p: &[f64], count: usize) -> DMatrix<f64> {
        DMatrix::from_fn(p.len(), count, |i, k| self.kernel.section_eigen_inner(p[i], k + 1))
    }

    /// `G_ij = ⟨a_i, b_j⟩_{L²}`.
    pub fn gram(&self, a: &FunctionBasis, b: &FunctionBasis) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(a.dim(), b.dim());
        let (sa, sb) = (&a.section_coeffs, &b.section_coeffs);
        let (ea, eb) = (&a.eigen_coeffs, &b.eigen_coeffs);
        if !a.points.is_empty() && !b.points.is_empty() {
            g += sa.transpose() * self.section_gram(&a.points, &b.points) * sb;
        }
        if !a.points.is_empty() && eb.nrows() > 0 {
            g += sa.transpose() * self.section_eigen(&a.points, eb.nrows()) * eb;
        }
        if ea.nrows() > 0 && !b.points.is_empty() {
            g += ea.transpose() * self.section_eigen(&b.points, ea.nrows()).transpose() * sb;
        }
        let common = ea.nrows().min(eb.nrows());
        if common > 0 {
            g += ea.rows(0, common).transpose() * eb.rows(0, common);
        }
        g
    }

    /// The same Gram by composite Simpson quadrature on point evaluations.
    pub fn quadrature_gram(&self, a: &FunctionBasis, b: &FunctionBasis) -> DMatrix<f64> {
        let k = self.kernel.as_ref();
        let h = 1.0 / self.panels as f64;
        let mut g = DMatrix::zeros(a.dim(), b.dim());
        // Simpson on each panel separately keeps the nodes shared by all entries.
        for p in 0..self.panels {
            let (x0, x1) = (p as f64 * h, (p + 1) as f64 * h);
            for (t, w) in [(x0, h / 6.0), (0.5 * (x0 + x1), 4.0 * h / 6.0), (x1, h / 6.0)] {
                let va = a.evaluate(k, t);
                let vb = b.evaluate(k, t);
                for i in 0..va.len() {
                    for j in 0..vb.len() {
                        g[(i, j)] += w * va[i] * vb[j];
                    }
                }
            }
        }
        g
    }

    /// Compares the closed-form products `⟨K(·,t), ψ_k⟩` and
    /// `⟨K(·,s), K(·,t)⟩` on the given points with quadrature.
    pub fn validate(&self, points: &[f64], max_k: usize) -> Result<f64, MetricsError> {
        let k = self.kernel.as_ref();
        let mut worst = 0.0f64;
        for &t in points {
            for j in 1..=max_k {
                let exact = k.section_eigen_inner(t, j);
                let quad = simpson(|x| k.evaluate(x, t) * k.eigenfunction(j, x), 0.0, t, self.panels)
                    + simpson(|x| k.evaluate(x, t) * k.eigenfunction(j, x), t, 1.0, self.panels);
                worst = worst.max((exact - quad).abs());
            }
            for &s in points {
                let (lo, hi) = (s.min(t), s.max(t));
                let f = |x: f64| k.evaluate(x, s) * k.evaluate(x, t);
                let quad = simpson(f, 0.0, lo, self.panels) + simpson(f, lo, hi, self.panels) + simpson(f, hi, 1.0, self.panels);
                worst = worst.max((k.l2_inner_sections(s, t) - quad).abs());
            }
        }
        if worst > self.tolerance {
            return Err(MetricsError::QuadratureMismatch(worst));
        }
        Ok(worst)
    }
}

/// Upper Cholesky-style whitening `W` with `Wᵀ G W = I`, guarded by the condition number.
fn whitening(g: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let mut g = g.clone();
    symmetrize(&mut g);
    let eig = sym_eigen(&g)?;
    let (max, min) = (eig.values[0], eig.values[eig.values.len() - 1]);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(MetricsError::IllConditionedGram(condition));
    }
    let chol = g.cholesky().ok_or(MetricsError::IllConditionedGram(condition))?;
    let l = chol.l();
    let n = l.nrows();
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(MetricsError::IllConditionedGram(condition))?;
    Ok(inv.transpose())
}

/// Squared distance between the `L²` orthogonal projections onto the spans of `f1` and `f2`.
pub fn function_subspace_distance_sq(
    f1: &FunctionBasis,
    f2: &FunctionBasis,
    ctx: &L2GramContext,
) -> Result<f64, MetricsError> {
    if f1.dim() == 0 || f2.dim() == 0 {
        return Err(MetricsError::Shape("empty basis".into()));
    }
    let w1 = whitening(&ctx.gram(f1, f1))?;
    let w2 = whitening(&ctx.gram(f2, f2))?;
    let m = w1.transpose() * ctx.gram(f1, f2) * w2;
    Ok((f1.dim() as f64 + f2.dim() as f64 - 2.0 * m.norm_squared()).max(0.0))
}

pub fn function_subspace_distance(
    f1: &FunctionBasis,
    f2: &FunctionBasis,
    ctx: &L2GramContext,
) -> Result<f64, MetricsError> {
    function_subspace_distance_sq(f1, f2, ctx).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::EigenExpansion;
    use crate::kernels::sobolev1_kernel;
    use crate::linalg::orthonormal_basis;
    use crate::rng::NormalStream;
    use crate::sampling::make_time_sampling;
    use proptest::prelude::*;

    fn gaussian(rows: usize, cols: usize, s: &mut NormalStream) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| s.next_normal())
    }

    fn stiefel(m: usize, r: usize, s: &mut NormalStream) -> DMatrix<f64> {
        orthonormal_basis(&gaussian(m, r, s)).unwrap()
    }

    fn unit(m: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, 1, |k, _| if k == i { 1.0 } else { 0.0 })
    }

    fn kernel() -> Arc<dyn Kernel> {
        Arc::new(sobolev1_kernel())
    }

    #[test]
    fn discrete_trivial_cases() {
        let mut s = NormalStream::new(1, 0);
        let z = stiefel(7, 3, &mut s);
        assert!(subspace_distance_discrete(&z, &z).unwrap() < 1e-7);
        let u = stiefel(3, 3, &mut s);
        assert!(subspace_distance_discrete_sq(&z, &(&z * u)).unwrap() < 1e-14);
        let d = subspace_distance_discrete(&unit(4, 0), &unit(4, 1)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let a = principal_angles(&unit(4, 0), &unit(4, 1)).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(principal_angles(&z, &z).unwrap().iter().all(|t| *t < 1e-7));
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(subspace_distance_discrete(&bad, &unit(3, 0)), Err(MetricsError::NotOrthonormal(_))));
        assert!(matches!(subspace_distance_discrete(&unit(3, 0), &unit(4, 0)), Err(MetricsError::Shape(_))));
        let two = DMatrix::identity(3, 2);
        assert!(matches!(principal_angles(&two, &unit(3, 0)), Err(MetricsError::Shape(_))));
    }

    proptest! {
        #[test]
        fn angles_match_distance(seed in 0u64..1_000_000, m in 2usize..=32, r in 1usize..=4) {
            let r = r.min(m);
            let mut s = NormalStream::new(seed, 0);
            let z1 = stiefel(m, r, &mut s);
            let z2 = stiefel(m, r, &mut s);
            let d2 = subspace_distance_discrete_sq(&z1, &z2).unwrap();
            let angles = principal_angles(&z1, &z2).unwrap();
            let via_angles: f64 = angles.iter().map(|t| 2.0 * t.sin().powi(2)).sum();
            prop_assert!((d2 - via_angles).abs() <= 1e-10);
            prop_assert!(angles.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(angles.iter().all(|t| (0.0..=std::f64::consts::FRAC_PI_2).contains(t)));
        }

        #[test]
        fn discrete_symmetry_and_range(seed in 0u64..1_000_000, m in 3usize..=20, r1 in 1usize..=3, r2 in 1usize..=3) {
            let mut s = NormalStream::new(seed, 1);
            let z1 = stiefel(m, r1, &mut s);
            let z2 = stiefel(m, r2, &mut s);
            let a = subspace_distance_discrete(&z1, &z2).unwrap();
            let b = subspace_distance_discrete(&z2, &z1).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0 && a <= ((r1 + r2) as f64).sqrt() + 1e-12);
            let dense = (&z1 * z1.transpose() - &z2 * z2.transpose()).norm();
            prop_assert!((a - dense).abs() < 1e-10);
        }

        #[test]
        fn function_triangle_inequality(seed in 0u64..1_000_000) {
            let ctx = L2GramContext::new(kernel());
            let mut s = NormalStream::new(seed, 2);
            let points = [0.13, 0.4, 0.77, 1.0];
            let basis = |s: &mut NormalStream| {
                let mut b = FunctionBasis::from_sections(points.to_vec(), gaussian(4, 2, s));
                b.eigen_coeffs = gaussian(6, 2, s);
                b
            };
            let (a, b, c) = (basis(&mut s), basis(&mut s), basis(&mut s));
            let ab = function_subspace_distance(&a, &b, &ctx).unwrap();
            let bc = function_subspace_distance(&b, &c, &ctx).unwrap();
            let ac = function_subspace_distance(&a, &c, &ctx).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((ab - function_subspace_distance(&b, &a, &ctx).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        }
    }

    #[test]
    fn discrete_triangle_inequality() {
        let mut s = NormalStream::new(3, 0);
        for _ in 0..100 {
            let (a, b, c) = (stiefel(9, 2, &mut s), stiefel(9, 2, &mut s), stiefel(9, 2, &mut s));
            let ab = subspace_distance_discrete(&a, &b).unwrap();
            let bc = subspace_distance_discrete(&b, &c).unwrap();
            let ac = subspace_distance_discrete(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn eigenfunction_spans() {
        let k = kernel();
        let ctx = L2GramContext::new(k.clone());
        let psi = |j: usize| FunctionBasis::from_expansions(&[EigenExpansion::eigenfunction(k.as_ref(), j)], k.as_ref());
        let d = function_subspace_distance(&psi(1), &psi(2), &ctx).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-14);
        let first3: Vec<_> = (1..=3).map(|j| EigenExpansion::eigenfunction(k.as_ref(), j)).collect();
        let b = FunctionBasis::from_expansions(&first3, k.as_ref());
        assert!(function_subspace_distance(&b, &b, &ctx).unwrap() < 1e-7);
    }

    #[test]
    fn cross_gram_matches_quadrature() {
        let k = kernel();
        let ctx = L2GramContext::new(k.clone());
        let mut s = NormalStream::new(11, 0);
        let points: Vec<f64> = (0..6).map(|_| s.next_open01()).collect();
        assert!(ctx.validate(&points, 10).unwrap() <= 1e-6);

        let mut a = FunctionBasis::from_sections(points.clone(), gaussian(6, 2, &mut s));
        a.eigen_coeffs = gaussian(10, 2, &mut s);
        let b = FunctionBasis::from_eigen_coeffs(gaussian(10, 3, &mut s));
        for (x, y) in [(&a, &a), (&a, &b), (&b, &a)] {
            let diff = (ctx.gram(x, y) - ctx.quadrature_gram(x, y)).amax();
            assert!(diff <= 1e-6, "{diff}");
        }
    }

    #[test]
    fn representations_agree() {
        // Sections K(·,t_j) expanded in ψ_k: L² coefficients μ_k ψ_k(t_j).
        let k = kernel();
        let op = make_time_sampling(k.clone(), vec![0.2, 0.45, 0.6, 0.9]).unwrap();
        let ctx = L2GramContext::for_operator(&op);
        let points = op.points().unwrap();
        // Leading L²-orthonormal combinations of the sections.
        let l = DMatrix::from_fn(4, 4, |i, j| k.l2_inner_sections(points[i], points[j]));
        let eig = sym_eigen(&l).unwrap();
        let a = DMatrix::from_fn(4, 2, |i, j| eig.vectors[(i, j)] / eig.values[j].sqrt() / op.sigma_scale());
        let sections = op.representer_basis(&a);
        let terms = 20_000;
        let c = DMatrix::from_fn(terms, 4, |kk, j| k.eigenvalue(kk + 1) * k.eigenfunction(kk + 1, points[j]));
        let eigen = FunctionBasis::from_eigen_coeffs(c * &sections.section_coeffs);
        let d = function_subspace_distance(&sections, &eigen, &ctx).unwrap();
        assert!(d <= 1e-6, "{d}");
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let k = kernel();
        let ctx = L2GramContext::new(k.clone());
        let col = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let twice = DMatrix::from_fn(3, 2, |i, _| col[(i, 0)]);
        let b = FunctionBasis::from_eigen_coeffs(twice);
        let single = FunctionBasis::from_eigen_coeffs(col);
        assert!(matches!(function_subspace_distance(&b, &single, &ctx), Err(MetricsError::IllConditionedGram(_))));
    }

    #[test]
    fn cached_theta_matches_closed_form() {
        let k = kernel();
        let pts = vec![0.25, 0.5, 0.75, 1.0];
        let op = make_time_sampling(k.clone(), pts.clone()).unwrap();
        let cached = L2GramContext::for_operator(&op);
        let fresh = L2GramContext::new(k);
        let b = FunctionBasis::from_sections(pts, DMatrix::identity(4, 2));
        assert!((cached.gram(&b, &b) - fresh.gram(&b, &b)).amax() < 1e-15);
    }
}
