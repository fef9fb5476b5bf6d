//! Ratio estimators for quantification under prior probability shift.
//!
//! The crate estimates the prevalence of a label in an unlabeled target
//! population from a labeled training sample and a score function `g`.
//! Under (weak) prior shift the class-conditional law of `g(X)` is the
//! same in both populations, so the unlabeled mean of `g` is a mixture of
//! the labeled class means and the mixing weight is the prevalence.
//!
//! Modules:
//!
//! - [`data`]: datasets, CSV ingestion and score grouping.
//! - [`score`] and [`logistic`]: score functions, including a built-in
//!   ridge-regularized logistic regression.
//! - [`estimators`]: ratio, classify-and-count, EM, multiclass and combined
//!   estimators with asymptotic variances and confidence intervals.
//! - [`rkhs`]: choosing `g` by minimizing the estimated MSE over an RKHS.
//! - [`shift_test`]: Monte Carlo test of the weak prior shift assumption.
//! - [`regression`]: prevalence as a function of a scalar covariate.
//! - [`simulate`]: scenario generators and experiment harness.

// `!(x > bound)` guards are written to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod logistic;
pub mod regression;
pub mod rkhs;
pub mod rng;
pub mod score;
pub mod simulate;

pub use data::{RawDataset, Schema, ScoredDataset, Scores};
pub use error::{Error, Result};
pub use estimators::{CombinedEstimate, SimplexEstimate, ThetaEstimate};
pub use kernel::KernelSpec;
pub use score::ScoreFunction;
