//! Config-driven experiments: data preparation, training with early
//! stopping, evaluation against persistence, forecasting from a CSV window
//! and results-table rendering.

pub mod commands;
pub mod config;
pub mod table;
pub mod train;

pub use commands::{
    cmd_evaluate, cmd_forecast, cmd_synth, cmd_train, ForecastRow, ForecastSource, MetricsDocument,
    SynthOptions, TrainSummary,
};
pub use config::{DataConfig, DataSource, ExperimentConfig, TrainingConfig};
pub use table::render_results_table;
pub use train::{prepare_data, train_model, EpochLog, PreparedData, TrainOutcome};
