//! Numerical lab for the porous medium and fast diffusion equations: finite-difference
//! solutions, pressure transforms, forward-backward SDE path simulation, martingale
//! diagnostics and explicit gradient bounds.

pub mod checks;
pub mod config;
pub mod error;
pub mod estimates;
pub mod exact;
pub mod fbsde;
pub mod grid;
pub mod martingale;
pub mod report;
pub mod spline;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
