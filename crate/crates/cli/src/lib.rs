//! Front end of the `crep` binary: problem specs, reports and the three
//! subcommands.

pub mod report;
pub mod spec;

use std::path::PathBuf;
use thiserror::Error;

pub use report::{
    analyze, parse_empirical, tucker_table, AnalyzeOptions, ConditionSummary, EmpiricalRequest,
    Report, TuckerOptions, TuckerReport, REPORT_SCHEMA_VERSION,
};
pub use spec::ProblemSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid problem spec: {0}")]
    Spec(String),
    #[error("tensor has multilinear rank {actual:?}, requested {requested:?}")]
    RankMismatch {
        requested: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Core(#[from] crep::CrepError),
}

/// Exit codes: success, usage or I/O error, certificate failure.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const CERTIFICATE_FAILED: i32 = 2;
}
