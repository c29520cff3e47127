//! Multi-horizon forecasting of ICU vital signs.
//!
//! Forecasts 36 five-minute steps (3 hours) of heart rate or mean blood
//! pressure from 72 steps (6 hours) of history with four forecasters behind
//! one [`models::ForecastModel`] trait: a persistence baseline, N-BEATS,
//! N-HiTS and a point-forecast Temporal Fusion Transformer. Trainable models
//! optimize either MSE or the DILATE loss (soft-DTW shape term plus an
//! expected-alignment temporal term) and are scored with MSE and DTW.
//!
//! | module | contents |
//! |---|---|
//! | [`tensor`], [`autograd`], [`optim`], [`gradcheck`] | tensors, reverse-mode graph, Adam, finite differences |
//! | [`data`] | CSV ingestion, preprocessing, windows, splits, synthetic cohorts |
//! | [`models`] | the four forecasters and checkpoints |
//! | [`losses`] | MSE, soft-DTW, DILATE |
//! | [`eval`] | DTW metric, reports, horizon sweep, persistence crossover |
//! | [`experiment`] | configs, training, evaluation, forecasting, results tables |
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod atomic;
pub mod autograd;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Lookback window length (6 hours at 5-minute resolution).
pub const INPUT_LEN: usize = 72;
/// Forecast horizon length (3 hours at 5-minute resolution).
pub const HORIZON: usize = 36;
/// Samples per patient group: lookback plus horizon.
pub const GROUP_LEN: usize = INPUT_LEN + HORIZON;
/// Sampling interval in minutes.
pub const STEP_MINUTES: i64 = 5;
