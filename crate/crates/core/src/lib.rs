//! Treatment-effect estimation for a single-arm trial compared with external
//! controls.
//!
//! The crate covers the individual-data route (propensity model, balancing
//! weights for a chosen estimand, weighted contrasts and Kaplan-Meier curves),
//! the aggregate-data route (MAIC and STC), static power-prior borrowing,
//! balance and positivity diagnostics, a percentile bootstrap, and a scenario
//! simulator with known true effects.

pub mod analysis;
pub mod balancing;
pub mod borrow;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod linalg;
pub mod maic;
pub mod propensity;
pub mod report;
pub mod simulate;
pub mod special;
pub mod stc;
pub mod toy;

pub use analysis::{MaicAnalysis, StcAnalysis, WeightingAnalysis};
pub use balancing::{balancing_weights, Estimand, EstimandKind, WeightSet};
pub use dataset::{AggregateSummary, CsvSchema, Dataset, Group, OutcomeKind, PatientRecord};
pub use error::{Error, ErrorFamily, Result};
pub use estimators::{Scale, SurvivalCurve};
pub use inference::{bootstrap_ci, BootstrapConfig, Resampling};
pub use propensity::{estimate_propensity, PropensityModel};
pub use report::{ContrastValue, EffectReport};
