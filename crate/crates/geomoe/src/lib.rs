//! File formats, configuration and batch drivers around `geomoe-core`.
//!
//! The `geomoe` binary is a thin layer over [`commands`]; everything it does
//! can also be driven from Rust.

pub mod benchmark;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;

pub use error::{Error, ExitCode, Result};
