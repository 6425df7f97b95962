//! Experiment runner for `ohmic-core`: run configurations, dispatch to the
//! solvers, SVG plots and hashed artifact manifests.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;

pub use config::{Command, RunConfig};
pub use error::CliError;
