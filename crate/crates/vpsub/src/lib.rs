//! Batch front end for `vpsub-core`: parallel sweeps, CSV/JSON tables,
//! alist and record files, config round-trips and the `vpsub` command.

pub mod alist;
pub mod cli;
pub mod config;
pub mod error;
pub mod parallel;
pub mod records;
pub mod table;

pub use error::CliError;
