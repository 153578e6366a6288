//! Experiment runner for locally stationary homogenization: configuration,
//! file formats, parallel drivers and the command implementations behind the
//! `locstat` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
