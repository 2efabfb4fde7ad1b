//! The regularized PCA estimator `max ⟨Σ̂ − βK⁻¹, ZZᵀ⟩` over orthonormal `Z`,
//! with `β` tuned to the trace-smoothness constraint `⟨K⁻¹, ZZᵀ⟩ <= 2rρ²`.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::FunctionBasis;
use crate::linalg::{lobpcg_top, sym_eigen, symmetrize, Gram, LinalgError, Spectrum};
use crate::sampling::SamplingOperator;

/// Problems up to this size are always solved by a dense eigendecomposition.
pub const DENSE_MAX: usize = 160;

const DEGENERATE_GAP: f64 = 1e-10;
/// LOBPCG residual tolerance, relative to `‖Σ̂‖_F`.
const ITERATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    #[error("no feasible beta below {beta_max:.3e}")]
    BracketFailure { beta_max: f64 },
    #[error(transparent)]
    Linalg(LinalgError),
}

impl From<LinalgError> for EstimatorError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::EigenFailure => EstimatorError::EigenFailure,
            other => EstimatorError::Linalg(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// `m × r`, orthonormal columns.
    pub zhat: DMatrix<f64>,
    pub beta: f64,
    /// `⟨K⁻¹, ẐẐᵀ⟩`.
    pub trace_smoothness: f64,
    /// `⟨Σ̂, ẐẐᵀ⟩`.
    pub objective: f64,
    /// `λ_r − λ_{r+1}` of `Σ̂ − βK⁻¹` (infinite when `r = m`).
    pub eigengap: f64,
    pub degenerate_gap: bool,
    /// Set when the constraint value was seen to increase with `β` during the search.
    pub non_monotone: bool,
    /// Number of `β` values evaluated.
    pub evaluations: usize,
}

impl SubspaceEstimate {
    pub fn r(&self) -> usize {
        self.zhat.ncols()
    }
}

/// `(1/n) YᵀY`, symmetrized.
pub fn sample_covariance(y: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(y.nrows() >= 1, "need at least one observation");
    let mut s = y.transpose() * y;
    s /= y.nrows() as f64;
    symmetrize(&mut s);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Dense up to [`DENSE_MAX`], iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    /// Stop bisecting once `β_hi / β_lo` falls below this.
    pub bracket_ratio: f64,
    pub max_bisections: usize,
    /// Relative slack on the constraint.
    pub slack: f64,
    /// `β₀ = trace(Σ̂)/trace(K⁻¹) · beta0_factor`.
    pub beta0_factor: f64,
    /// Give up once `β > bracket_cap · β₀`.
    pub bracket_cap: f64,
    /// Factor by which the upper end grows while bracketing.
    pub bracket_growth: f64,
    pub solver: SolverChoice,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            bracket_ratio: 1.000_001,
            max_bisections: 60,
            slack: 1e-6,
            beta0_factor: 1e-6,
            bracket_cap: 1e12,
            bracket_growth: 1e3,
            solver: SolverChoice::Auto,
        }
    }
}

/// Top-`r` solution at one `β`, before it is mapped back to the original
/// coordinates.
#[derive(Debug, Clone)]
struct Candidate {
    beta: f64,
    vectors: DMatrix<f64>,
    trace: f64,
    objective: f64,
    eigengap: f64,
}

enum Path<'a> {
    Dense {
        kinv: DMatrix<f64>,
    },
    /// Everything expressed in the eigenbasis of `K`, where `K⁻¹` is diagonal.
    Iterative {
        spectrum: &'a Spectrum,
        rotated: DMatrix<f64>,
        kinv_diag: DVector<f64>,
        shift: f64,
        scale: f64,
        warm: RefCell<Option<DMatrix<f64>>>,
    },
}

/// `Σ̂` and `K` prepared for repeated solves at different `β`.
pub struct RegularizedProblem<'a> {
    sigma: &'a DMatrix<f64>,
    gram: &'a Gram,
    r: usize,
    path: Path<'a>,
}

impl<'a> RegularizedProblem<'a> {
    pub fn new(sigma: &'a DMatrix<f64>, gram: &'a Gram, r: usize, solver: SolverChoice) -> Result<Self, EstimatorError> {
        let m = gram.dim();
        if sigma.shape() != (m, m) {
            return Err(EstimatorError::Dimension(format!("Sigma is {:?}, K is {m}x{m}", sigma.shape())));
        }
        if r == 0 || r > m {
            return Err(EstimatorError::Dimension(format!("r = {r} with m = {m}")));
        }
        let iterative = match solver {
            SolverChoice::Auto => m > DENSE_MAX && r + 3 <= m / 2,
            SolverChoice::Dense => false,
            SolverChoice::Iterative => r + 1 < m,
        };
        let path = if iterative {
            let spectrum = gram.spectrum()?;
            let rotated = spectrum.rotate_symmetric(sigma);
            let kinv_diag = spectrum.values.map(|v| 1.0 / v);
            let diag_max = rotated.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
            let scale = rotated.norm().max(f64::MIN_POSITIVE);
            Path::Iterative {
                spectrum,
                rotated,
                kinv_diag,
                shift: diag_max.max(1e-12 * scale),
                scale,
                warm: RefCell::new(None),
            }
        } else {
            Path::Dense { kinv: gram.inverse() }
        };
        Ok(Self { sigma, gram, r, path })
    }

    pub fn m(&self) -> usize {
        self.gram.dim()
    }

    pub fn is_iterative(&self) -> bool {
        matches!(self.path, Path::Iterative { .. })
    }

    /// Top-`r` eigenvectors of `Σ̂ − βK⁻¹`.
    pub fn solve(&self, beta: f64) -> Result<SubspaceEstimate, EstimatorError> {
        let c = self.candidate(beta)?;
        Ok(self.finish(c, false, 1))
    }

    fn candidate(&self, beta: f64) -> Result<Candidate, EstimatorError> {
        let r = self.r;
        match &self.path {
            Path::Dense { kinv } => {
                let mut mat = self.sigma - kinv * beta;
                symmetrize(&mut mat);
                let eig = sym_eigen(&mat)?;
                let vectors = eig.vectors.columns(0, r).into_owned();
                let eigengap = gap(eig.values.as_slice(), r);
                let kv = kinv * &vectors;
                let sv = self.sigma * &vectors;
                Ok(Candidate {
                    beta,
                    trace: vectors.dot(&kv),
                    objective: vectors.dot(&sv),
                    vectors,
                    eigengap,
                })
            }
            Path::Iterative { rotated, kinv_diag, shift, scale, warm, .. } => {
                let m = self.m();
                let block = (r + 8).min(m);
                let x0 = warm.borrow().clone().unwrap_or_else(|| DMatrix::identity(m, block));
                let apply = |x: &DMatrix<f64>| {
                    let mut out = rotated * x;
                    for j in 0..x.ncols() {
                        for i in 0..m {
                            out[(i, j)] -= beta * kinv_diag[i] * x[(i, j)];
                        }
                    }
                    out
                };
                let precond = kinv_diag.map(|d| 1.0 / (beta * d + shift));
                let top = lobpcg_top(apply, &precond, &x0, r, ITERATIVE_TOL, *scale, 600)?;
                let (values, vectors, block) = if top.converged {
                    (top.block_values, top.vectors, top.block)
                } else {
                    let mut mat = rotated.clone();
                    for i in 0..m {
                        mat[(i, i)] -= beta * kinv_diag[i];
                    }
                    let eig = sym_eigen(&mat)?;
                    let vals = eig.values.iter().take(r + 1).copied().collect();
                    (vals, eig.vectors.columns(0, r).into_owned(), eig.vectors.columns(0, block).into_owned())
                };
                *warm.borrow_mut() = Some(block);
                let mut trace = 0.0;
                for j in 0..r {
                    for i in 0..m {
                        trace += vectors[(i, j)].powi(2) * kinv_diag[i];
                    }
                }
                let sv = rotated * &vectors;
                Ok(Candidate { beta, trace, objective: vectors.dot(&sv), eigengap: gap(&values, r), vectors })
            }
        }
    }

    fn finish(&self, c: Candidate, non_monotone: bool, evaluations: usize) -> SubspaceEstimate {
        let zhat = match &self.path {
            Path::Dense { .. } => c.vectors,
            Path::Iterative { spectrum, .. } => spectrum.from_coords(&c.vectors),
        };
        let trace_smoothness = zhat.dot(&self.gram.solve(&zhat));
        SubspaceEstimate {
            zhat,
            beta: c.beta,
            trace_smoothness,
            objective: c.objective,
            eigengap: c.eigengap,
            degenerate_gap: c.eigengap <= DEGENERATE_GAP,
            non_monotone,
            evaluations,
        }
    }

    /// Smallest `β` (up to the bracket ratio) whose solution satisfies
    /// `⟨K⁻¹, ẐẐᵀ⟩ <= 2rρ²(1 + slack)`. Among all feasible solutions seen the
    /// one with the largest objective is returned.
    pub fn solve_constrained(&self, rho: f64, opts: &SearchOptions) -> Result<SubspaceEstimate, EstimatorError> {
        let cap = 2.0 * self.r as f64 * rho * rho * (1.0 + opts.slack);
        let mut seen: Vec<(f64, f64)> = Vec::new();
        let mut best: Option<Candidate> = None;
        let mut consider = |c: Candidate, seen: &mut Vec<(f64, f64)>| -> bool {
            seen.push((c.beta, c.trace));
            let feasible = c.trace <= cap;
            let better = |b: &Candidate| {
                let tol = 1e-12 * b.objective.abs().max(1e-300);
                c.objective > b.objective + tol || (c.objective >= b.objective - tol && c.beta < b.beta)
            };
            if feasible && best.as_ref().is_none_or(better) {
                best = Some(c);
            }
            feasible
        };

        if consider(self.candidate(0.0)?, &mut seen) {
            let c = best.take().expect("feasible candidate recorded");
            return Ok(self.finish(c, false, 1));
        }

        let trace_kinv = self.gram.trace_inverse()?;
        let trace_sigma = self.sigma.trace();
        let beta0 = if trace_sigma > 0.0 {
            trace_sigma / trace_kinv * opts.beta0_factor
        } else {
            opts.beta0_factor / trace_kinv
        };
        let beta_max = beta0 * opts.bracket_cap;

        let mut lo = 0.0;
        let mut hi = beta0;
        loop {
            if consider(self.candidate(hi)?, &mut seen) {
                break;
            }
            if hi >= beta_max {
                return Err(EstimatorError::BracketFailure { beta_max });
            }
            lo = hi;
            hi = (hi * opts.bracket_growth).min(beta_max);
        }
        let mut steps = 0;
        while lo > 0.0 && hi / lo > opts.bracket_ratio && steps < opts.max_bisections {
            let mid = (lo * hi).sqrt();
            if consider(self.candidate(mid)?, &mut seen) {
                hi = mid;
            } else {
                lo = mid;
            }
            steps += 1;
        }

        let evaluations = seen.len();
        seen.sort_by(|a, b| a.0.total_cmp(&b.0));
        let non_monotone = seen.windows(2).any(|w| w[1].1 > w[0].1 * (1.0 + 1e-9) + 1e-12);
        let c = best.expect("bracket ends at a feasible beta");
        Ok(self.finish(c, non_monotone, evaluations))
    }
}

fn gap(values: &[f64], r: usize) -> f64 {
    if values.len() > r {
        values[r - 1] - values[r]
    } else {
        f64::INFINITY
    }
}

/// Top-`r` eigenvectors of `Σ̂ − βK⁻¹`.
pub fn regularized_pca(sigma: &DMatrix<f64>, gram: &Gram, beta: f64, r: usize) -> Result<SubspaceEstimate, EstimatorError> {
    RegularizedProblem::new(sigma, gram, r, SolverChoice::Auto)?.solve(beta)
}

pub fn solve_constrained(
    sigma: &DMatrix<f64>,
    gram: &Gram,
    r: usize,
    rho: f64,
    opts: &SearchOptions,
) -> Result<SubspaceEstimate, EstimatorError> {
    if !(rho > 0.0) {
        return Err(EstimatorError::Dimension(format!("rho = {rho} must be positive")));
    }
    RegularizedProblem::new(sigma, gram, r, opts.solver)?.solve_constrained(rho, opts)
}

/// `Σ_{j>r} max(λ_j, 0)` of `Σ̂ − βK⁻¹` for `r = 1..=r_max`.
pub fn elbow_scan(sigma: &DMatrix<f64>, gram: &Gram, beta: f64, r_max: usize) -> Result<Vec<f64>, EstimatorError> {
    let m = gram.dim();
    if sigma.shape() != (m, m) || r_max > m {
        return Err(EstimatorError::Dimension(format!("r_max = {r_max}, m = {m}")));
    }
    let mut mat = sigma - gram.inverse() * beta;
    symmetrize(&mut mat);
    let eig = sym_eigen(&mat)?;
    let clipped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    Ok((1..=r_max).map(|r| clipped[r..].iter().sum()).collect())
}

/// `f̂_j = Σ_i A_ij φ_i`.
#[derive(Debug, Clone)]
pub struct FunctionSubspace {
    pub coeffs: DMatrix<f64>,
    pub operator: Arc<SamplingOperator>,
}

impl FunctionSubspace {
    pub fn r(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `ΦF̂ = KA`.
    pub fn sampled(&self) -> DMatrix<f64> {
        self.operator.k() * &self.coeffs
    }

    /// `‖f̂_j‖²_H = a_jᵀ K a_j`.
    pub fn hilbert_norms_sq(&self) -> Vec<f64> {
        let ka = self.sampled();
        (0..self.r()).map(|j| self.coeffs.column(j).dot(&ka.column(j))).collect()
    }

    /// Whether `AᵀKA` is numerically nonsingular.
    pub fn is_full_rank(&self) -> bool {
        let mut g = self.coeffs.transpose() * self.sampled();
        symmetrize(&mut g);
        Gram::new(g).is_ok()
    }

    pub fn basis(&self) -> FunctionBasis {
        self.operator.representer_basis(&self.coeffs)
    }

    /// `grid.len() × r` matrix of function values.
    pub fn evaluate_grid(&self, grid: &[f64]) -> DMatrix<f64> {
        let basis = self.basis();
        let kernel = self.operator.kernel().as_ref();
        let mut out = DMatrix::zeros(grid.len(), self.r());
        for (i, &t) in grid.iter().enumerate() {
            for (j, v) in basis.evaluate(kernel, t).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// `A = K⁻¹Z` for any `m × r` matrix `Z`.
pub fn reconstruct_from_samples(z: &DMatrix<f64>, op: &Arc<SamplingOperator>) -> Result<FunctionSubspace, EstimatorError> {
    if z.nrows() != op.m() {
        return Err(EstimatorError::Dimension(format!("{} rows for m = {}", z.nrows(), op.m())));
    }
    Ok(FunctionSubspace { coeffs: op.gram().solve(z), operator: op.clone() })
}

/// `f̂_j = Φ*K⁻¹ẑ_j`.
pub fn reconstruct_functions(est: &SubspaceEstimate, op: &Arc<SamplingOperator>) -> Result<FunctionSubspace, EstimatorError> {
    reconstruct_from_samples(&est.zhat, op)
}
