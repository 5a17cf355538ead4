//! Hourly electricity price forecasting from scratch: a seasonal 1D-CNN,
//! a BP/MLP baseline, and the data, training, and evaluation machinery
//! around them.
//!
//! The pipeline, end to end:
//!
//! 1. [`data`] ingests (or synthesizes) an hourly price series, repairs small
//!    gaps, splits 2015-2017 train / Mar 2018-Feb 2019 test, groups hours by
//!    the target's season, and builds normalized 23-hour sliding windows.
//! 2. [`model`] assembles the CNN (conv-ReLU-pool x3, flatten, dense stack)
//!    or the BP baseline from a spec; [`layers`] holds the hand-written
//!    forward/backward passes; [`tensor`] and [`rng`] are the substrate.
//! 3. [`train`] fits one model per season with Adam, mini-batches, a
//!    chronological validation holdout, and early stopping; its
//!    finite-difference gradient checker is the correctness gate for all of
//!    the backprop code.
//! 4. [`eval`] scores models with MAPE/RMSE against the persistence
//!    baseline and renders per-season reports with Average and Pooled rows.
//! 5. [`checkpoint`] and [`config`] serialize models and run settings as
//!    plain, diffable text.
//!
//! Everything is deterministic given a seed: the same data, config, and seed
//! reproduce byte-identical checkpoints.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use data::{
    assign_season, build_seasonal_datasets, generate_synthetic, make_windows, parse_price_csv,
    parse_timestamp, serialize_price_csv, split_train_test, NormStats, PriceRecord, PriceSeries,
    Season, SeasonDataset, SeasonalDatasets, SplitConfig, WindowSample,
};
pub use error::{Error, Result};
pub use eval::{
    build_report, emit_forecast_csv, evaluate_model, mape, persistence_forecast, rmse, MetricsRow,
    Report, SummaryKind, SummaryRow,
};
pub use layers::{Conv1d, Dense, LayerGrads, MaxPool1d};
pub use model::{
    build_bp_mlp, build_paper_cnn, model_forward, model_param_count, CnnSpec, Layer, MlpSpec,
    Model, ModelMeta, ModelSpec,
};
pub use rng::{he_init, Prng};
pub use tensor::{Shape, Tensor};
pub use train::{
    adam_step, grad_check, gradcheck_trial, mse_loss, train, AdamState, ModelKind, TrainConfig,
    TrainHistory,
};
