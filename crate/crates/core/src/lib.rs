//! Monte Carlo simulation of rate-splitting with multi-branch
//! Tomlinson-Harashima precoding in cell-free MIMO downlinks.
//!
//! The pipeline per network snapshot: draw geometry and fading
//! ([`scenario`], [`channel`]), build a precoder from the imperfect estimate
//! ([`precoding`], [`multibranch`]), and average rates over true channels
//! consistent with that estimate ([`metrics`]). [`montecarlo`] runs the grid
//! and [`output`] stores the tables.

// Negated comparisons double as NaN rejection; index loops mirror the algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod config;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod multibranch;
pub mod output;
pub mod precoding;
pub mod scenario;

pub use config::{parse_config, ConfigError};
pub use montecarlo::{run_experiment, ExperimentConfig, ExperimentOutput, ResultRow, Scheme};
