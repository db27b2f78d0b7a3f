//! Numerical laboratory for task reachability under SGD-as-diffusion.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod complexity;
pub mod diffusion;
pub mod error;
pub mod landscape;
pub mod linalg;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Quadratic64 = landscape::Quadratic<f64>;
pub type DoubleWell64 = landscape::DoubleWell1D<f64>;
pub type Channel64 = landscape::Channel2D<f64>;
pub type Potential64 = landscape::BuiltinPotential<f64>;
pub type Dataset64 = tasks::Dataset<f64>;
pub type Task64 = tasks::Task<f64>;
pub type Path64 = diffusion::Path<f64>;
pub type DiffusionParams64 = diffusion::DiffusionParams<f64>;
pub type EscapeStats64 = diffusion::EscapeStats<f64>;
pub type ActionBreakdown64 = action::ActionBreakdown<f64>;
pub type CriticalPath64 = action::CriticalPath<f64>;
pub type ComplexityReport64 = complexity::ComplexityReport<f64>;
pub type DistanceMatrix64 = complexity::DistanceMatrix<f64>;
pub type RateFit64 = rates::RateFit<f64>;
