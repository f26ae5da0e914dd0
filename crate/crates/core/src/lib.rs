//! Market-trough research toolkit: turning-point labels, indicator and
//! feature engineering, a calibrated nowcasting classifier, a futures
//! backtester, and double machine learning estimators.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod causal;
pub mod dataio;
pub mod error;
pub mod featlab;
pub mod indicators;
pub mod learners;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod stats;
pub mod turnlab;

pub use error::{Error, Result};
pub use series::{DailyFrame, DailySeries};
