//! Schmidt-mode numerics for degenerate type-I parametric down-conversion and
//! SU(1,1) interferometers pumped by Laguerre-Gaussian beams.

pub mod analytic;
pub mod cache;
pub mod error;
pub mod export;
pub mod setup;
pub mod grid;
pub mod interferometer;
pub mod kernels;
pub mod linalg;
pub mod metrology;
pub mod schmidt;
pub mod specfun;

pub use error::{Error, Result};
