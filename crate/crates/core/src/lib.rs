//! Causal effect estimation from summarized genetic-association data when
//! genetic variants act on the outcome through measured covariates.
//!
//! The central method fits a multivariable inverse-variance weighted model
//! with an L1 penalty on the covariate coefficients only, picks the penalty
//! by cross-validation over variants, and refits on the selected
//! covariates. Comparator estimators, selection-aware interval procedures
//! and a simulation harness live alongside it.

pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod lasso;
pub mod regularize;
pub mod simulate;

pub use data::{SummaryDataset, WeightVector};
pub use error::{Error, Result};
pub use estimators::{CausalEstimate, MethodTag};
pub use regularize::{CvConfig, CvTarget, RegularizationFit};
