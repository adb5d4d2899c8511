//! Command-line front end for metameric hologram optimisation.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
