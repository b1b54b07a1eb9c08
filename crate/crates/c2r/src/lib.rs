//! Deterministic cooperative classification and rationalization for
//! out-of-distribution graph classification, with a synthetic biased
//! benchmark generator, a tape-based autodiff engine, and an experiment
//! CLI.

pub mod cli;
pub mod config;
pub mod diffcore;
pub mod graphdata;
pub mod metrics;
pub mod models;
pub mod train;
