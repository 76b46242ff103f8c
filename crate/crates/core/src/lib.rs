//! In-play football forecasting with a Weibull accelerated-failure-time
//! goal model, market calibration, rival intensity models, forecast
//! evaluation and a betting backtester.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aft;
pub mod api;
pub mod betting;
pub mod calibration;
pub mod covariates;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod optim;
pub mod pipeline;
pub mod rival;
pub mod simulator;
pub mod weibull;

pub use error::{Error, Result};
