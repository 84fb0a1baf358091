//! Two-level spectral Galerkin simulator for quasi-static
//! thermo-visco-elasticity with flow laws of generalized Orlicz growth, plus
//! a standalone solver for the heat equation with integrable data.
//!
//! Start from [`scenario::Scenario`] and [`study::run_point`], or from the
//! runnable programs in `examples/`.

pub mod constitutive;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod lifting;
pub mod linalg;
pub mod mesh;
pub mod orlicz;
pub mod output;
pub mod renormheat;
pub mod scenario;
pub mod study;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::SymTensor3;
