//! Experiment harness behind the `smle` binary.
//!
//! Replicated simulation studies on a line of sites (estimate tables, timing
//! and consistency curves), a three-stage fit of a synthetic global grid,
//! and thin simulate/fit wrappers for user data. Every experiment is a pure
//! function of its configuration: replicate seeds are derived from the base
//! seed, and results are merged in replicate order whatever the thread count.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;
pub mod plot;
pub mod replicates;

pub use config::{ExperimentConfig, GridConfig, MseConfig, TruthConfig};
pub use error::HarnessError;
