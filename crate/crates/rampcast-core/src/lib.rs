//! Core library for forecasting daily primary three-hour net-load ramps.
//!
//! The pipeline goes: ingest (or synthesize) a 5-minute multi-channel time
//! series, label each day with the magnitude and start period of its largest
//! three-hour net-load rise, turn the previous afternoon's measurements into
//! scaled feature windows, train recurrent networks (LSTM, with GRU/SRN and
//! naive-persistence benchmarks) on those windows, and evaluate the forecasts
//! with MSE/MAE/MAPE tables.
//!
//! All randomness flows from a single seed through named substreams, so every
//! stage is bit-reproducible. The `parallel` feature (on by default) runs the
//! data-parallel inner loops on rayon; without it the same code runs
//! sequentially.

pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod neural;
pub mod ramps;
pub mod rng;
pub mod timeseries;
pub mod training;

pub use error::{Error, ErrorClass, Result};
