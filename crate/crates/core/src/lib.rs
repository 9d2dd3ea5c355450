//! Threshold spectral analysis for H = Δ² + V on ℝ³ with radial potentials.
//!
//! Operators are discretized per angular-momentum sector in a symmetric
//! Nyström basis; see [`quadrature`] for conventions.

pub mod birman_schwinger;
pub mod classifier;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod potential_lab;
pub mod propagator;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64;
