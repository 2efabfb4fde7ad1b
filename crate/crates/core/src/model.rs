//! Spiked functional model and synthetic data.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::EigenExpansion;
use crate::kernels::Kernel;
use crate::rng::NormalStream;
use crate::sampling::{orthonormality_defect_cm, SamplingOperator, VariantKind};
use crate::theory::growth_function;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("component indices must be distinct and positive")]
    BadIndices,
}

/// `x = Σ_j s_j β_j f*_j` with `β_j ~ N(0, 1)` and `L²`-orthonormal `f*_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    pub signals: Vec<f64>,
    pub components: Vec<EigenExpansion>,
    pub rho: f64,
    pub sigma0: f64,
}

impl SpikedModel {
    pub fn new(
        kernel: &dyn Kernel,
        signals: Vec<f64>,
        components: Vec<EigenExpansion>,
        rho: f64,
        sigma0: f64,
    ) -> Result<Self, ModelError> {
        let r = signals.len();
        if r == 0 || components.len() != r {
            return Err(ModelError::Invalid(format!("{r} signals for {} components", components.len())));
        }
        if signals.iter().any(|s| !(*s > 0.0 && s.is_finite())) || signals.windows(2).any(|w| w[1] > w[0]) {
            return Err(ModelError::Invalid("signals must be positive and nonincreasing".into()));
        }
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(ModelError::Invalid(format!("sigma0 = {sigma0}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ModelError::Invalid(format!("rho = {rho}")));
        }
        for (i, fi) in components.iter().enumerate() {
            for (j, fj) in components.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                let g = fi.l2_inner(fj, kernel);
                if (g - target).abs() > 1e-8 {
                    return Err(ModelError::Invalid(format!("components not L²-orthonormal: <f{i}, f{j}> = {g}")));
                }
            }
            let h = fi.hilbert_norm_sq().sqrt();
            if h > rho * (1.0 + 1e-12) {
                return Err(ModelError::Invalid(format!("component {i} has H-norm {h} > rho = {rho}")));
            }
        }
        Ok(Self { signals, components, rho, sigma0 })
    }

    pub fn r(&self) -> usize {
        self.signals.len()
    }

    /// `max_j ‖f*_j‖_H`.
    pub fn max_hilbert_norm(&self) -> f64 {
        max_hilbert_norm(&self.components)
    }

    /// `Z* = [Φf*_1 … Φf*_r]`.
    pub fn zstar(&self, op: &SamplingOperator) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(op.m(), self.r());
        for (j, f) in self.components.iter().enumerate() {
            z.set_column(j, &op.apply_expansion(f));
        }
        z
    }
}

fn max_hilbert_norm(components: &[EigenExpansion]) -> f64 {
    components.iter().map(|c| c.hilbert_norm_sq().sqrt()).fold(0.0, f64::max)
}

/// Components `f*_j = ψ_{indices[j]}`.
pub fn default_components(kernel: &dyn Kernel, indices: &[usize]) -> Result<Vec<EigenExpansion>, ModelError> {
    for (i, &k) in indices.iter().enumerate() {
        if k == 0 || indices[..i].contains(&k) {
            return Err(ModelError::BadIndices);
        }
    }
    Ok(indices.iter().map(|&k| EigenExpansion::eigenfunction(kernel, k)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub variant: VariantKind,
    pub m: usize,
}

impl From<&SamplingOperator> for OperatorDescriptor {
    fn from(op: &SamplingOperator) -> Self {
        let variant = if op.is_truncation() { VariantKind::Truncation } else { VariantKind::Time };
        Self { variant, m: op.m() }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n × m` observations.
    pub y: DMatrix<f64>,
    /// `n × r` latent scores.
    pub b: DMatrix<f64>,
    pub seed: u64,
    pub operator: OperatorDescriptor,
    pub sigma_m: f64,
    pub zstar: DMatrix<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.nrows()
    }
}

/// Draw `Y = B S Z*ᵀ + σ_m W`.
///
/// `B` and `W` are filled row by row from streams 0 and 1 of the generator
/// keyed by `seed`.
pub fn generate_dataset(model: &SpikedModel, op: &SamplingOperator, n: usize, seed: u64) -> Dataset {
    let (m, r) = (op.m(), model.r());
    let zstar = model.zstar(op);
    let sigma_m = model.sigma0 * op.sigma_scale();

    let mut b = DMatrix::zeros(n, r);
    let mut stream = NormalStream::new(seed, 0);
    for i in 0..n {
        for j in 0..r {
            b[(i, j)] = stream.next_normal();
        }
    }
    let mut zs = zstar.clone();
    for (j, mut col) in zs.column_iter_mut().enumerate() {
        col *= model.signals[j];
    }
    let mut y = &b * zs.transpose();

    if sigma_m > 0.0 {
        let mut stream = NormalStream::new(seed, 1);
        let mut row = vec![0.0; m];
        for i in 0..n {
            stream.fill_normal(&mut row);
            for (j, w) in row.iter().enumerate() {
                y[(i, j)] += sigma_m * w;
            }
        }
    }
    Dataset { y, b, seed, operator: op.into(), sigma_m, zstar }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `s_r² / s_1² >= 1/2`.
    pub a1_signal_ratio: bool,
    /// `σ₀² <= κ s_1²`.
    pub a1_noise: bool,
    pub cm: f64,
    /// `C_m(f*) <= 1/(2r)`.
    pub a2: bool,
    /// `sup_t (σ_m/√n) G(t)/t` over the log grid.
    pub a3_sup: f64,
    pub a3: bool,
    /// `r <= min(m/2, n/4, κ√n/σ_m)`.
    pub a4: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a1_signal_ratio && self.a1_noise && self.a2 && self.a3 && self.a4
    }
}

/// Evaluate conditions (A1)–(A4). Never fails; violated conditions are reported.
pub fn check_assumptions(model: &SpikedModel, op: &SamplingOperator, n: usize, kappa: f64) -> AssumptionReport {
    let r = model.r();
    let s1 = model.signals[0];
    let sr = model.signals[r - 1];
    let sigma_m = model.sigma0 * op.sigma_scale();

    let cm = orthonormality_defect_cm(&model.zstar(op));

    let mu_hats: Vec<f64> = match op.gram().spectrum() {
        Ok(spec) => spec.values.iter().copied().collect(),
        Err(_) => Vec::new(),
    };
    let prefactor = sigma_m / (n as f64).sqrt();
    let points = 241;
    let a3_sup = (0..points)
        .map(|i| {
            let t = 10f64.powf(-6.0 + 9.0 * i as f64 / (points - 1) as f64);
            prefactor * growth_function(&mu_hats, r, model.rho, t) / t
        })
        .fold(0.0, f64::max);

    let rf = r as f64;
    let noise_cap = if sigma_m > 0.0 { kappa * (n as f64).sqrt() / sigma_m } else { f64::INFINITY };
    AssumptionReport {
        a1_signal_ratio: sr * sr / (s1 * s1) >= 0.5,
        a1_noise: model.sigma0 * model.sigma0 <= kappa * s1 * s1,
        cm,
        a2: cm <= 1.0 / (2.0 * rf),
        a3_sup,
        a3: !mu_hats.is_empty() && a3_sup <= kappa.sqrt(),
        a4: rf <= (op.m() as f64 / 2.0).min(n as f64 / 4.0).min(noise_cap),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Auto(AutoTag),
    Value(f64),
}

impl Default for RhoSpec {
    fn default() -> Self {
        RhoSpec::Auto(AutoTag::Auto)
    }
}

/// JSON description of a model, e.g.
/// `{"r": 1, "signals": [1.0], "component_indices": [1], "rho": "auto", "sigma0": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub r: usize,
    pub signals: Vec<f64>,
    pub component_indices: Vec<usize>,
    #[serde(default)]
    pub rho: RhoSpec,
    pub sigma0: f64,
}

impl ModelSpec {
    pub fn build(&self, kernel: &Arc<dyn Kernel>) -> Result<SpikedModel, ModelError> {
        if self.signals.len() != self.r || self.component_indices.len() != self.r {
            return Err(ModelError::Invalid(format!(
                "r = {} but {} signals and {} component indices",
                self.r,
                self.signals.len(),
                self.component_indices.len()
            )));
        }
        let components = default_components(kernel.as_ref(), &self.component_indices)?;
        let rho = match self.rho {
            RhoSpec::Auto(_) => max_hilbert_norm(&components),
            RhoSpec::Value(v) => v,
        };
        SpikedModel::new(kernel.as_ref(), self.signals.clone(), components, rho, self.sigma0)
    }
}
