//! Bounds and confidence intervals for dynamic treatment effects on
//! survivors in randomized experiments with duration outcomes.
//!
//! The pipeline runs `data` (ingestion and risk sets), `estimate`
//! (life-table hazards and survival), `bounds` (identified sets under the
//! assumption regimes), then `infer` (bootstrap covariance, moment selection
//! and critical values). `oracle` checks sharpness against the
//! joint-outcome linear program, and `simulate` provides structural
//! data-generating processes and the coverage harness.

pub mod bounds;
pub mod cli;
pub mod data;
pub mod estimate;
pub mod infer;
pub mod oracle;
pub mod simulate;

pub use bounds::{evaluate, AssumptionRegime, BoundsError, BoundsResult, MtrSign, RegimeTag, UndefinedReason};
pub use data::{parse_compact_csv, Arm, DataError, PanelDataset, UnitRecord};
pub use estimate::{arm_estimates, ArmEstimates, EstimateError};
pub use infer::{CriticalMethod, ConfidenceInterval, InferError};
pub use oracle::OracleError;
pub use simulate::{CoverageReport, Dgp, SimError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Data(_) => "data",
            Error::Estimate(_) => "estimate",
            Error::Bounds(_) => "bounds",
            Error::Infer(_) => "infer",
            Error::Oracle(_) => "oracle",
            Error::Sim(_) => "simulate",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
