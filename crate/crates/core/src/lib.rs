//! Score-calibrated one-step-ahead predictive distributions for financial
//! risk management.
//!
//! A Gaussian GARCH(1,1) or HAR-GARCH predictive is calibrated by maximising
//! the sample average of a chosen proper scoring rule (log score, censored
//! log score or quantile score). The crate also provides the expanding-window
//! backtest engine, VaR/ES evaluation (coverage tests, equal predictive
//! ability tests, Murphy diagrams) and VIX-futures hedging rules driven by
//! the calibrated predictives.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod models;
pub mod normal;
pub mod optim;
pub mod quadrature;
pub mod scoring;
pub mod simulation;
pub mod trading;

pub use error::{Error, Result};
pub use models::{GarchParams, GaussianPredictive, HarGarchParams, ModelKind, ModelParams};
pub use scoring::{Region, ScoreRule, ScoreSpec, VarEsPair};
