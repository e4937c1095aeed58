//! Online bilevel optimization with a time-smoothed window of hypergradient
//! estimates.
//!
//! The crate provides the SOBOW, OAGD and OGD optimizers, hypergradient
//! estimators built on a fixed-step or conjugate-gradient linear solver,
//! seedable time-varying problem streams, regret metrics, and an experiment
//! runner driven by TOML configuration.

// Negated comparisons like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod hypergrad;
pub mod linear_solver;
pub mod metrics;
pub mod optimizers;
pub mod oracle;
pub mod problems;
pub mod runner;
pub mod types;

pub use config::{validate_config, OptimizerConfig, ValidationResult};
pub use error::{OboError, Result};
pub use oracle::{check_oracle, RegularityConstants, RoundOracle};
pub use types::{Matrix, Vector};
