//! Command-line experiments around ALO risk estimation: simulation, risk
//! curves, timing, K-fold bias studies, convergence diagnostics and CSV
//! ingestion.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use commands::run;
pub use config::{RunConfig, KEYS};
pub use error::{CliError, Result};
pub use ingest::{ingest_csv, IngestOptions, Ingested};
