//! Incremental LMS over a ring of sensor nodes.
//!
//! A ring of N nodes cooperatively estimates an unknown length-M weight
//! vector: the running estimate circulates around the ring and every node
//! applies one LMS gradient update per iteration using its own noisy
//! observation. This crate provides
//!
//! - a Monte Carlo simulator producing empirical MSD/EMSE learning curves,
//! - a theory engine evaluating the closed-form transient recursion and the
//!   steady-state value of the same weighted-error-energy analysis, and
//! - an experiment runner that compares the two and reproduces the standard
//!   white/correlated-input scenario grid.
//!
//! All numerics are generic over the [`Scalar`] floating-point type; the
//! aliases at the crate root fix the default double-precision build used by
//! the CLI and the experiment runner.

pub mod error;
pub mod experiments;
pub mod matlib;
pub mod network;
pub mod scalar;
pub mod simulator;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::{power_db, Scalar};

/// Double-precision matrix, the default build.
pub type Matrix64 = matlib::Matrix<f64>;
/// Single-precision matrix.
pub type Matrix32 = matlib::Matrix<f32>;
/// Double-precision network configuration.
pub type NetworkConfig64 = network::NetworkConfig<f64>;
/// Double-precision theory chain.
pub type TheoryChain64 = theory::TheoryChain<f64>;
/// Double-precision learning curve.
pub type LearningCurve64 = theory::LearningCurve<f64>;
/// Double-precision simulation result.
pub type SimResult64 = simulator::SimResult<f64>;
