//! Experiment configuration as read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sfpca_core::model::ModelSpec;
use sfpca_core::sampling::{OperatorSpec, VariantKind};
use sfpca_core::theory::TheoryConstants;

use crate::ExperimentError;

/// How `m` is chosen for each `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MGrid {
    /// Every listed `m` is paired with every `n`.
    Values(Vec<usize>),
    /// `m = round(scale · n^gamma)`.
    Coupled {
        gamma: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaPolicy {
    Fixed(f64),
    /// Smallest `β` meeting the smoothness budget; `rho` defaults to the model's.
    Constrained {
        #[serde(default)]
        rho: Option<f64>,
    },
    Grid(Vec<f64>),
}

impl Default for BetaPolicy {
    fn default() -> Self {
        BetaPolicy::Constrained { rho: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    DiscreteDist2,
    FunctionDist2,
    Dm,
    Predictions,
}

/// Variable on the horizontal axis of the rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    Mn,
    N,
    M,
}

impl Driver {
    pub fn value(self, n: usize, m: usize) -> f64 {
        match self {
            Driver::Mn => (m * n) as f64,
            Driver::N => n as f64,
            Driver::M => m as f64,
        }
    }
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::DiscreteDist2, OutputKind::Predictions]
}

fn default_trials() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Template operator; its `m` is replaced per cell.
    pub operator: OperatorSpec,
    pub n_grid: Vec<usize>,
    pub m_grid: MGrid,
    #[serde(default)]
    pub beta: BetaPolicy,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    /// Defaults to `mn` for time sampling and `n` for truncation.
    #[serde(default)]
    pub fit_against: Option<Driver>,
    #[serde(default)]
    pub constants: TheoryConstants,
}

/// Fixed `β` or the constrained search for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Fixed(f64),
    Constrained(Option<f64>),
}

/// One `(n, m, β)` grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub index: usize,
    pub n: usize,
    pub operator: OperatorSpec,
    pub beta: BetaChoice,
}

impl CellSpec {
    pub fn m(&self) -> usize {
        self.operator.m
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid must be nonempty and positive".into());
        }
        match &self.m_grid {
            MGrid::Values(v) if v.is_empty() || v.contains(&0) => return bad("m_grid values must be nonempty and positive".into()),
            MGrid::Coupled { gamma, scale } if !(*gamma > 0.0 && *gamma <= 3.0) || !(*scale > 0.0) => {
                return bad(format!("coupling exponent {gamma} outside (0, 3] or scale {scale} not positive"));
            }
            _ => {}
        }
        match &self.beta {
            BetaPolicy::Fixed(b) if !(*b >= 0.0) => return bad(format!("fixed beta {b} must be nonnegative")),
            BetaPolicy::Grid(g) if g.is_empty() || g.iter().any(|b| !(*b >= 0.0)) => {
                return bad("beta grid must be nonempty and nonnegative".into());
            }
            BetaPolicy::Constrained { rho: Some(r) } if !(*r > 0.0) => return bad(format!("rho {r} must be positive")),
            _ => {}
        }
        Ok(())
    }

    pub fn ms_for(&self, n: usize) -> Vec<usize> {
        match &self.m_grid {
            MGrid::Values(v) => v.clone(),
            MGrid::Coupled { gamma, scale } => vec![((scale * (n as f64).powf(*gamma)).round() as usize).max(1)],
        }
    }

    pub fn driver(&self) -> Driver {
        self.fit_against.unwrap_or(match self.operator.variant {
            VariantKind::Time => Driver::Mn,
            VariantKind::Truncation => Driver::N,
        })
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }

    /// Cells in order: `n` outermost, then `m`, then `β`.
    pub fn cells(&self) -> Vec<CellSpec> {
        let betas: Vec<BetaChoice> = match &self.beta {
            BetaPolicy::Fixed(b) => vec![BetaChoice::Fixed(*b)],
            BetaPolicy::Constrained { rho } => vec![BetaChoice::Constrained(*rho)],
            BetaPolicy::Grid(g) => g.iter().map(|b| BetaChoice::Fixed(*b)).collect(),
        };
        let mut cells = Vec::new();
        for &n in &self.n_grid {
            for m in self.ms_for(n) {
                for beta in &betas {
                    cells.push(CellSpec { index: cells.len(), n, operator: self.operator.with_m(m), beta: *beta });
                }
            }
        }
        cells
    }
}
