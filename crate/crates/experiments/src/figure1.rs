//! The four-component demonstration: one dataset, several fixed `β`, curves on a fine grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sfpca_core::estimator::{reconstruct_functions, regularized_pca, sample_covariance};
use sfpca_core::function::FunctionBasis;
use sfpca_core::kernels::sobolev1_kernel;
use sfpca_core::metrics::{function_subspace_distance_sq, L2GramContext};
use sfpca_core::model::{default_components, generate_dataset, SpikedModel};
use sfpca_core::sampling::{make_time_sampling, uniform_points};

use crate::ExperimentError;

pub const BETAS: [f64; 4] = [0.0, 0.0052, 0.0075, 0.83];
pub const SIGNALS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
pub const N: usize = 75;
pub const M: usize = 100;
pub const GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBlock {
    pub beta: f64,
    /// `curves[j][i]` is `f̂_j` at `grid[i]`, sign-aligned with `f*_j`.
    pub curves: Vec<Vec<f64>>,
    /// `‖f̂_j − f*_j‖_{L²}` after sign alignment.
    pub component_l2_errors: Vec<f64>,
    pub subspace_dist2: f64,
    /// `‖f̂_j‖_H`.
    pub hilbert_norms: Vec<f64>,
    pub mean_hilbert_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Result {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub signals: Vec<f64>,
    pub sigma0: f64,
    pub grid: Vec<f64>,
    /// `truth[j][i]` is `f*_j` at `grid[i]`.
    pub truth: Vec<Vec<f64>>,
    pub blocks: Vec<BetaBlock>,
}

pub fn run_figure1_demo(seed: u64) -> Result<Figure1Result, ExperimentError> {
    let kernel: Arc<dyn sfpca_core::kernels::Kernel> = Arc::new(sobolev1_kernel());
    let r = SIGNALS.len();
    let indices: Vec<usize> = (1..=r).collect();
    let components = default_components(kernel.as_ref(), &indices)?;
    let rho = components.iter().map(|c| c.hilbert_norm_sq().sqrt()).fold(0.0, f64::max);
    let model = SpikedModel::new(kernel.as_ref(), SIGNALS.to_vec(), components, rho, 1.0)?;
    let op = Arc::new(make_time_sampling(kernel.clone(), uniform_points(M))?);
    let data = generate_dataset(&model, &op, N, seed);
    let sigma = sample_covariance(&data.y);

    let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / (GRID - 1) as f64).collect();
    let truth_basis = FunctionBasis::from_expansions(&model.components, kernel.as_ref());
    let truth: Vec<Vec<f64>> = model
        .components
        .iter()
        .map(|c| grid.iter().map(|t| c.evaluate(kernel.as_ref(), *t)).collect())
        .collect();
    let l2 = L2GramContext::for_operator(&op);

    let mut blocks = Vec::with_capacity(BETAS.len());
    for &beta in &BETAS {
        let est = regularized_pca(&sigma, op.gram(), beta, r)?;
        let fs = reconstruct_functions(&est, &op)?;
        let basis = fs.basis();
        let subspace_dist2 = function_subspace_distance_sq(&basis, &truth_basis, &l2)?;
        let self_gram = l2.gram(&basis, &basis);
        let cross = l2.gram(&basis, &truth_basis);
        let values = fs.evaluate_grid(&grid);
        let mut curves = Vec::with_capacity(r);
        let mut component_l2_errors = Vec::with_capacity(r);
        for j in 0..r {
            let sign = if cross[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            // ‖f*_j‖ = 1
            let err2 = self_gram[(j, j)] - 2.0 * sign * cross[(j, j)] + 1.0;
            component_l2_errors.push(err2.max(0.0).sqrt());
            curves.push((0..GRID).map(|i| sign * values[(i, j)]).collect());
        }
        let hilbert_norms: Vec<f64> = fs.hilbert_norms_sq().iter().map(|v| v.max(0.0).sqrt()).collect();
        let mean_hilbert_norm = hilbert_norms.iter().sum::<f64>() / r as f64;
        blocks.push(BetaBlock { beta, curves, component_l2_errors, subspace_dist2, hilbert_norms, mean_hilbert_norm });
    }

    Ok(Figure1Result { seed, n: N, m: M, signals: SIGNALS.to_vec(), sigma0: 1.0, grid, truth, blocks })
}
