//! Experiment runner for `gcopt-core`: configuration files, datasets, the
//! training loop with CSV metrics, binary checkpoints, run comparison and the
//! `gcopt` command line.

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod report;
pub mod runner;

pub use error::{BenchError, Result};
pub use gcopt_core as core;
