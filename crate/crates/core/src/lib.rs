//! Budget-constrained prediction sets for narrowband-interference detection,
//! with per-input miscoverage estimates from backward conformal prediction.
//!
//! A detector emits a softmax over `S + 2` hypotheses (no transmission, WiFi
//! only, interference on one of `S` monitored subcarriers). Each label carries
//! a mitigation cost; [`budgetset::build_set`] keeps the longest
//! probability-ordered prefix that fits a budget `K`, and
//! [`conformal::bcp_alpha`] estimates the probability that the set misses the
//! true label using a calibration set. The estimate satisfies
//! `E[1{miss} / alpha] <= 1` without distributional assumptions.

pub mod budgetset;
pub mod cli;
pub mod conformal;
pub mod domain;
pub mod error;
pub mod harness;
pub mod scenario;
pub mod validate;

pub use budgetset::{build_set, Budget, PredictionSetResult};
pub use conformal::{bcp_alpha, nme_alpha, Method, MiscoverageEstimate, ScoreParams};
pub use domain::{normalize, CalibrationSet, CostModel, Example, Label, LabelKind, LabelSpace, PredictiveDistribution};
pub use error::{BcpError, Result};
