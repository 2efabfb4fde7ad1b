//! Monte Carlo rate experiments over `(n, m, β)` grids.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sfpca_core::estimator::{reconstruct_functions, regularized_pca, solve_constrained, sample_covariance, SearchOptions};
use sfpca_core::function::FunctionBasis;
use sfpca_core::linalg::orthonormal_basis;
use sfpca_core::metrics::{function_subspace_distance_sq, subspace_distance_discrete_sq, L2GramContext};
use sfpca_core::model::{generate_dataset, SpikedModel};
use sfpca_core::sampling::SamplingOperator;
use sfpca_core::theory::{minimax_lower_bounds, predicted_rates, RatePrediction};
use thiserror::Error;

use crate::config::{BetaChoice, CellSpec, Driver, ExperimentConfig, OutputKind};
use crate::ExperimentError;

/// A cell is flagged once this fraction of its trials failed.
pub const FAILURE_FLAG_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive finite values")]
    NonPositive,
    #[error("all x values are equal")]
    DegenerateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Sum of squared residuals in log space.
    pub residual_ss: f64,
}

/// Ordinary least squares of `log y` on `log x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LogLogFit, FitError> {
    let k = xs.len().min(ys.len());
    if k < 3 {
        return Err(FitError::TooFewPoints(k));
    }
    if xs[..k].iter().chain(&ys[..k]).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(FitError::NonPositive);
    }
    let lx: Vec<f64> = xs[..k].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys[..k].iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k as f64;
    let my = ly.iter().sum::<f64>() / k as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(FitError::DegenerateFit);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - residual_ss / syy } else { 1.0 };
    Ok(LogLogFit { slope, intercept, r2, residual_ss })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialOutcome {
    pub dist2: Option<f64>,
    pub function_dist2: Option<f64>,
    pub beta: Option<f64>,
    pub non_monotone: bool,
    pub degenerate_gap: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub m: usize,
    /// The fixed `β`, or the mean selected `β` under the constrained policy.
    pub beta: Option<f64>,
    pub constrained: bool,
    pub mean_dist2: Option<f64>,
    pub stderr: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_function_dist2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<RatePrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<RatePrediction>,
    pub non_monotone: usize,
    pub degenerate_gaps: usize,
    /// Distinct error messages, first occurrence order.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub driver: Driver,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residual_ss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub exponent: f64,
    /// Per-cell predicted discrete rates (unit constants), in cell order.
    pub discrete: Vec<f64>,
    pub function: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionSummary>,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
}

impl ExperimentResult {
    pub fn any_flagged(&self) -> bool {
        self.cells.iter().any(|c| c.flagged)
    }
}

fn mean_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(se))
}

/// Per-cell state shared by its trials.
struct CellContext<'a> {
    model: &'a SpikedModel,
    op: Arc<SamplingOperator>,
    q_star: Result<DMatrix<f64>, String>,
    truth: FunctionBasis,
    l2: L2GramContext,
    want_function: bool,
    opts: SearchOptions,
}

impl CellContext<'_> {
    fn run_trial(&self, n: usize, seed: u64, beta: BetaChoice) -> TrialOutcome {
        let data = generate_dataset(self.model, &self.op, n, seed);
        let sigma = sample_covariance(&data.y);
        let r = self.model.r();
        let est = match beta {
            BetaChoice::Fixed(b) => regularized_pca(&sigma, self.op.gram(), b, r),
            BetaChoice::Constrained(rho) => {
                solve_constrained(&sigma, self.op.gram(), r, rho.unwrap_or(self.model.rho), &self.opts)
            }
        };
        let est = match est {
            Ok(e) => e,
            Err(e) => return TrialOutcome { error: Some(e.to_string()), ..Default::default() },
        };
        let mut out = TrialOutcome {
            beta: Some(est.beta),
            non_monotone: est.non_monotone,
            degenerate_gap: est.degenerate_gap,
            ..Default::default()
        };
        if let Ok(q) = &self.q_star {
            match subspace_distance_discrete_sq(&est.zhat, q) {
                Ok(d) => out.dist2 = Some(d),
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        if self.want_function {
            let d = reconstruct_functions(&est, &self.op)
                .map_err(|e| e.to_string())
                .and_then(|f| function_subspace_distance_sq(&f.basis(), &self.truth, &self.l2).map_err(|e| e.to_string()));
            match d {
                Ok(d) => out.function_dist2 = Some(d),
                Err(e) => out.error = Some(e),
            }
        }
        out
    }
}

fn failed_cell(cfg: &ExperimentConfig, cell: &CellSpec, message: String) -> CellResult {
    CellResult {
        n: cell.n,
        m: cell.m(),
        beta: match cell.beta {
            BetaChoice::Fixed(b) => Some(b),
            BetaChoice::Constrained(_) => None,
        },
        constrained: matches!(cell.beta, BetaChoice::Constrained(_)),
        mean_dist2: None,
        stderr: None,
        trials: cfg.trials,
        failures: cfg.trials,
        flagged: true,
        mean_function_dist2: None,
        function_stderr: None,
        dm: None,
        prediction: None,
        lower_bound: None,
        non_monotone: 0,
        degenerate_gaps: 0,
        errors: vec![message],
    }
}

/// Seed of trial `t` in cell `c`.
pub fn trial_seed(base_seed: u64, cell_index: usize, trials: usize, trial: usize) -> u64 {
    base_seed.wrapping_add((cell_index * trials + trial) as u64)
}

fn run_cell(cfg: &ExperimentConfig, model: &SpikedModel, cell: &CellSpec) -> CellResult {
    let op = match cell.operator.build() {
        Ok(op) => Arc::new(op),
        Err(e) => return failed_cell(cfg, cell, e.to_string()),
    };
    let kernel = op.kernel().clone();
    let q_star = orthonormal_basis(&model.zstar(&op)).map_err(|e| format!("Z* has no orthonormal basis: {e}"));
    let ctx = CellContext {
        model,
        truth: FunctionBasis::from_expansions(&model.components, kernel.as_ref()),
        l2: L2GramContext::for_operator(&op),
        op: op.clone(),
        q_star,
        want_function: cfg.wants(OutputKind::FunctionDist2),
        opts: SearchOptions::default(),
    };

    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| ctx.run_trial(cell.n, trial_seed(cfg.base_seed, cell.index, cfg.trials, t), cell.beta))
        .collect();

    let dists: Vec<f64> = outcomes.iter().filter_map(|o| o.dist2).collect();
    let fdists: Vec<f64> = outcomes.iter().filter_map(|o| o.function_dist2).collect();
    let betas: Vec<f64> = outcomes.iter().filter_map(|o| o.beta).collect();
    let failures = outcomes.iter().filter(|o| o.error.is_some()).count();
    let mut errors: Vec<String> = Vec::new();
    for e in outcomes.iter().filter_map(|o| o.error.clone()) {
        if !errors.contains(&e) {
            errors.push(e);
        }
    }
    if let Err(e) = &ctx.q_star {
        errors.push(e.clone());
    }
    let (mean_dist2, stderr) = mean_stderr(&dists);
    let (mean_function_dist2, function_stderr) = mean_stderr(&fdists);
    let (beta, constrained) = match cell.beta {
        BetaChoice::Fixed(b) => (Some(b), false),
        BetaChoice::Constrained(_) => (mean_stderr(&betas).0, true),
    };

    let alpha = kernel.decay_alpha();
    let (prediction, lower_bound) = if cfg.wants(OutputKind::Predictions) {
        let kind = cell.operator.variant;
        (
            Some(predicted_rates(kind, alpha, model.r(), model.rho, model.sigma0, cell.m(), cell.n, &cfg.constants)),
            Some(minimax_lower_bounds(kind, alpha, model.sigma0, cell.m(), cell.n, &cfg.constants)),
        )
    } else {
        (None, None)
    };
    let dm = if cfg.wants(OutputKind::Dm) { op.defect_dm().ok() } else { None };

    CellResult {
        n: cell.n,
        m: cell.m(),
        beta,
        constrained,
        mean_dist2,
        stderr,
        trials: cfg.trials,
        failures,
        flagged: failures as f64 >= FAILURE_FLAG_FRACTION * cfg.trials as f64,
        mean_function_dist2,
        function_stderr,
        dm,
        prediction,
        lower_bound,
        non_monotone: outcomes.iter().filter(|o| o.non_monotone).count(),
        degenerate_gaps: outcomes.iter().filter(|o| o.degenerate_gap).count(),
        errors,
    }
}

/// Run every cell of `cfg`.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let cells = cfg.cells();
    run_cells(cfg, &cells)
}

/// Run an explicit list of cells. A cell whose operator cannot be built is
/// recorded as fully failed; the remaining cells are unaffected.
pub fn run_cells(cfg: &ExperimentConfig, cells: &[CellSpec]) -> Result<ExperimentResult, ExperimentError> {
    let kernel = cfg.operator.kernel.build();
    let model = cfg.model.build(&kernel)?;
    let results: Vec<CellResult> = cells.iter().map(|c| run_cell(cfg, &model, c)).collect();

    let driver = cfg.driver();
    let (xs, ys): (Vec<f64>, Vec<f64>) = results
        .iter()
        .filter_map(|c| c.mean_dist2.map(|y| (driver.value(c.n, c.m), y)))
        .unzip();
    let (fit, fit_error) = match fit_loglog_slope(&xs, &ys) {
        Ok(f) => (
            Some(FitSummary { driver, slope: f.slope, intercept: f.intercept, r2: f.r2, residual_ss: f.residual_ss }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let prediction = cfg.wants(OutputKind::Predictions).then(|| PredictionSummary {
        exponent: results
            .iter()
            .find_map(|c| c.prediction.as_ref().map(|p| p.exponent))
            .unwrap_or(f64::NAN),
        discrete: results.iter().filter_map(|c| c.prediction.as_ref().map(|p| p.discrete)).collect(),
        function: results.iter().filter_map(|c| c.prediction.as_ref().map(|p| p.function)).collect(),
    });
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(ExperimentResult { config: cfg.clone(), cells: results, fit, fit_error, prediction, timestamp })
}
