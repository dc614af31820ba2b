//! Config-driven experiment runner for bootstrapped deep ensembles.
//!
//! The `bde` binary is a thin shell over this library; the acceptance
//! suite drives the same entry points.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
