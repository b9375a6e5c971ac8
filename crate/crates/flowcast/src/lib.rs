//! Traffic-flow forecasting on travel-time-weighted station graphs.
//!
//! The pipeline: ingest (or synthesize) 15-minute station counts, build a
//! weighted adjacency matrix from inter-station travel times and
//! data-availability scores, train a GCN-LSTM-attention forecaster with
//! RMSprop and early stopping, wrap the point forecasts in adaptive conformal
//! prediction intervals, score against classical baselines, and sanity-check
//! the predicted peak demand by running an IDM car-following Monte-Carlo on a
//! synthetic corridor.
//!
//! Modules map onto pipeline stages:
//!
//! - [`data`] — CSV ingestion, normalization, windowing, splits, synthetic corpora
//! - [`graph`] — availability scores, travel times, weighted adjacency
//! - [`neural`] — the forecaster: GCN layer, LSTM, attention, training loop
//! - [`conformal`] — adaptive residual quantile, intervals, PICP/MPIW
//! - [`evalsuite`] — MAE/RMSE and the baseline family (HA, AR, FNN, LSTM)
//! - [`microsim`] — IDM corridor simulator and travel-time Monte-Carlo
//! - [`cli`] — batch front end (`flowcast` binary) emitting CSV and SVG artifacts
//!
//! See the `examples/` directory for one runnable walkthrough per stage.

pub mod chart;
pub mod checkpoint;
pub mod cli;
pub mod conformal;
pub mod data;
pub mod evalsuite;
pub mod graph;
pub mod microsim;
pub mod neural;
mod util;

pub use util::fnv1a64;
