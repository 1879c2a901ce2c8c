//! Galerkin boundary elements, heat-kernel smoothing and the smoothed
//! Nash-Hormander iteration for the nonlinear Molodensky problem.

pub mod bem;
pub mod bem2d;
pub mod error;
pub mod experiments;
pub mod field;
pub mod iteration;
pub mod kernels;
pub mod mesh;
pub mod quadrature;
pub mod smoothing;

pub use error::{Error, Result};
