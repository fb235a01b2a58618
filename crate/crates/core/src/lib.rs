//! Gaussian moment dynamics of driven optomechanical systems and the
//! entanglement measures derived from them.

pub mod analytic;
pub mod checks;
pub mod config;
pub mod error;
pub mod figures;
pub mod integrate;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod montecarlo;
pub mod params;
pub mod precision;
pub mod real;
pub mod rk;
pub mod scenario;
pub mod state;
pub mod sweep;
pub mod wide;

pub use error::{Error, Result};
