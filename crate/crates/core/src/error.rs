use thiserror::Error;

use crate::dataset::{Group, OutcomeKind};
use crate::estimators::Scale;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    /// The analysis request itself is malformed or inconsistent.
    Invalid,
    /// The input data could not be read or failed validation.
    Data,
    /// A numerical fit or solver failed.
    Solver,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("row {row}: column `{column}` has non-numeric value `{value}`")]
    NonNumericCovariate {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: unknown group label `{value}` (expected `trial` or `external`)")]
    UnknownGroupLabel { row: usize, value: String },
    #[error("duplicate covariate name `{0}`")]
    DuplicateCovariate(String),
    #[error("row {row}: {reason}")]
    InvalidRecord { row: usize, reason: String },
    #[error("no {0} records in dataset")]
    MissingGroup(Group),
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("aggregate summary schema violation: {0}")]
    SchemaViolation(String),
    #[error("covariate `{name}` proportion {value} outside [0, 1]")]
    ProportionOutOfRange { name: String, value: f64 },
    #[error("responder count {responders} exceeds sample size {n}")]
    ResponderCountExceedsN { responders: u64, n: u64 },

    #[error("response is constant; nothing to fit")]
    ConstantResponse,
    #[error("design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("need at least {required} observations, got {n}")]
    InsufficientObservations { n: usize, required: usize },
    #[error("separation detected at iteration {iteration}: |coefficient| = {magnitude:.3}")]
    SeparationDetected { iteration: usize, magnitude: f64 },
    #[error("{solver} did not converge in {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
    },
    #[error("fitted propensity score of subject {index} is degenerate ({score})")]
    DegenerateScores { index: usize, score: f64 },

    #[error("invalid estimand: {0}")]
    InvalidEstimand(String),
    #[error("all weights are zero in the {0} group")]
    AllWeightsZero(Group),
    #[error("scale {scale} is not compatible with {outcome} outcomes")]
    ScaleIncompatibleWithOutcome { scale: Scale, outcome: OutcomeKind },
    #[error("ratio contrast has a zero denominator")]
    ZeroDenominator,
    #[error("row {row}: outcome required for this analysis")]
    MissingOutcome { row: usize },
    #[error("weights do not align with dataset ({weights} weights, {records} records)")]
    MisalignedWeights { weights: usize, records: usize },

    #[error("target mean of `{covariate}` lies outside the support of the trial data")]
    TargetOutsideSupport { covariate: String },
    #[error("matching covariates are collinear")]
    CollinearCovariates,
    #[error("MAIC fit did not converge; cannot compare")]
    UnconvergedFit,

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("{failures} of {replicates} bootstrap replicates failed (limit 20%)")]
    TooManyReplicateFailures { failures: usize, replicates: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("estimand mismatch: report is {report}, truth is {truth}")]
    EstimandMismatch { report: String, truth: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            MissingColumn(_)
            | EmptyDataset
            | NonNumericCovariate { .. }
            | MissingValue { .. }
            | UnknownGroupLabel { .. }
            | DuplicateCovariate(_)
            | InvalidRecord { .. }
            | MissingGroup(_)
            | SchemaViolation(_)
            | ProportionOutOfRange { .. }
            | ResponderCountExceedsN { .. }
            | MissingOutcome { .. }
            | Csv(_)
            | Json(_)
            | Io(_) => ErrorFamily::Data,
            ConstantResponse
            | RankDeficientDesign
            | InsufficientObservations { .. }
            | SeparationDetected { .. }
            | NoConvergence { .. }
            | DegenerateScores { .. }
            | AllWeightsZero(_)
            | ZeroDenominator
            | TargetOutsideSupport { .. }
            | CollinearCovariates
            | UnconvergedFit
            | TooManyReplicateFailures { .. } => ErrorFamily::Solver,
            UnknownCovariate(_)
            | InvalidEstimand(_)
            | ScaleIncompatibleWithOutcome { .. }
            | MisalignedWeights { .. }
            | ParameterOutOfRange(_)
            | InvalidConfig(_)
            | EstimandMismatch { .. } => ErrorFamily::Invalid,
        }
    }
}
