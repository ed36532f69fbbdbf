//! Command-line layer over `vspin_core`: run configuration, trace
//! ingestion, subcommands and atomic output.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use commands::{run_subcommand, RunOutcome, Subcommand};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::{CliError, CliResult, ErrorKind};
pub use ingest::{ingest_features, ingest_trace, Trace, TraceKind};
