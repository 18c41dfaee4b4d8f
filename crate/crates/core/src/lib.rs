//! Survey-weighted supervised overfitted latent class analysis.
//!
//! Derives latent patterns in multivariate categorical exposures jointly with
//! their association to a binary outcome (probit link), under complex survey
//! designs. Includes the unweighted and two-step comparators, a synthetic
//! population simulator with stratified and cluster designs, and the
//! evaluation metrics used to compare them.

pub mod assign;
pub mod cli;
pub mod data;
pub mod design;
pub mod dist;
pub mod error;
pub mod fit;
pub mod gibbs;
pub mod model;
pub mod postprocess;
pub mod sim;
pub mod wolca;

pub use data::{SurveyDataset, ValidationReport, Violation};
pub use error::{Error, Result};
pub use fit::{fit_model, FitOutput, ModelKind};
pub use model::{
    build_design_row, normalize_weights, CodingSpec, McmcConfig, ModelParams, NormalizedWeights,
    PriorSpec, ThetaArray,
};
