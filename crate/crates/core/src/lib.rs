//! Deep deterministic policy gradient stock trading.
//!
//! The crate covers the whole pipeline: price ingestion and synthetic
//! markets ([`marketdata`]), the trading environment ([`env`]), a small
//! dense network library ([`nn`]), the agent and its training loop
//! ([`ddpg`]), comparison strategies ([`baselines`]), backtest metrics
//! ([`metrics`]) and the command line ([`cli`]).

pub mod baselines;
pub mod cli;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod marketdata;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
