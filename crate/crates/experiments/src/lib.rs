//! Monte Carlo experiments for sampled functional PCA: rate grids, the
//! four-component demonstration, the invariant suite and output writers.

pub mod config;
pub mod figure1;
pub mod harness;
pub mod invariants;
pub mod output;

use thiserror::Error;

use sfpca_core::estimator::EstimatorError;
use sfpca_core::metrics::MetricsError;
use sfpca_core::model::ModelError;
use sfpca_core::sampling::SamplingError;

pub use config::{BetaPolicy, ExperimentConfig, MGrid, OutputKind};
pub use figure1::{run_figure1_demo, Figure1Result};
pub use harness::{fit_loglog_slope, run_cells, run_rate_experiment, ExperimentResult, FitError, LogLogFit};
pub use invariants::{run_invariant_suite, InvariantCheck};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}
