//! 0-calculus operators on the hyperbolic ball and the gauge-fixed
//! Yang–Mills boundary value problem.

pub mod cli;
pub mod config;
pub mod error;
pub mod fields;
pub mod gauge;
pub mod geometry;
pub mod harmonics;
pub mod indicial;
pub mod lie;
pub mod quadrature;
pub mod solver;
pub mod spectral;
pub mod zerodiff;

pub use error::{Error, Result};
