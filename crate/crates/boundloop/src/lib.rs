//! File formats, configuration, run directories and the command-line
//! interface around `boundloop-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use error::{Error, Result};
