//! Simulation benchmark comparing multi-response estimators (PCR, PLS1,
//! PLS2, predictor envelope, simultaneous envelope) on data with a
//! controlled relevant predictor subspace.
//!
//! The numerical core (`simulation`, `estimators`, `metrics`) is generic
//! over [`Real`] and runs in `f32` or `f64`; `analysis` and `harness` work in
//! `f64`. The aliases below fix the scalar for the common case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{fit_method, CoefficientPath as GenericCoefficientPath, FitConfig, FitStatus, MethodId};
pub use scalar::Real;
pub use simulation::{design_grid, SimDesign};

/// Double-precision aliases.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type PopulationModel = simulation::PopulationModel<f64>;
pub type Dataset = simulation::Dataset<f64>;
pub type CoefficientPath = estimators::CoefficientPath<f64>;
pub type Moments = estimators::Moments<f64>;

/// Single-precision aliases.
pub type PopulationModelF32 = simulation::PopulationModel<f32>;
pub type DatasetF32 = simulation::Dataset<f32>;
pub type CoefficientPathF32 = estimators::CoefficientPath<f32>;
