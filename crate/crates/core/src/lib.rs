//! Regularized principal component analysis for functional data observed
//! through a sampling operator on a reproducing kernel Hilbert space.

pub mod function;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod metrics;
pub mod model;
pub mod theory;
pub mod estimator;
