//! Configuration, run orchestration, output files and named fixtures.

mod config;
mod fixtures;
mod output;
mod run;

pub use config::{
    parse_config, parse_config_str, BackendName, ConfigError, DomainName, FrameName, InitialKind, ModelName, RunConfig,
};
pub use fixtures::{fixture_config, fixture_ensemble, FIXTURES};
pub use output::{read_ledger_csv, sha256_hex, Manifest, ManifestEntry};
pub use run::{
    compare_backends, config_hash, picard, simulate, with_workers, BackendComparison, SimulationOutcome,
    SimulationReport,
};

use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::ensemble::EnsembleError;
use crate::flow::FlowError;
use crate::selfconsistent::SelfConsistentError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    SelfConsistent(#[from] SelfConsistentError),
}
