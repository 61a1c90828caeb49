//! Seasonal forecasting of warm-day tercile classes at weather stations.
//!
//! The pipeline runs ingestion and quality control ([`ingest`]), reference
//! climatology and tercile labelling ([`climatology`]), feature engineering
//! ([`features`]), a zoo of statistical forecasters with a weighted ensemble
//! ([`forecasters`]), classification metrics ([`evaluation`]) and a rolling
//! monthly-retrain backtest ([`backtest`]).

pub mod backtest;
pub mod calendar;
pub mod climatology;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod forecasters;
pub mod ingest;
pub mod optim;
pub mod stats;
pub mod synthetic;

pub use calendar::{CalDate, DayIndex};
pub use error::{Error, Result};
