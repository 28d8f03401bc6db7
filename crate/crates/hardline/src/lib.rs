//! Command-line tools, file formats and a parallel block executor for
//! [`hardline_core`].

pub mod battery;
pub mod cli;
pub mod config;
pub mod error;
pub mod executor;
pub mod formats;
pub mod report;

pub use error::CliError;
