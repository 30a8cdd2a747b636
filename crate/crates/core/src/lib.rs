//! Multi-instance learning toolkit.
//!
//! Bags of feature vectors carry one label each. The crate provides the bag data
//! model and min-max scaling ([`bagcore`]), a small dense network engine
//! ([`nn`]), neural and classical MIL estimators that expose per-instance
//! weights ([`estimators`]), bag-level and key-instance metrics ([`metrics`]),
//! deterministic benchmark generators ([`datagen`]), stepwise hyperparameter
//! search ([`hyperopt`]) and genetic consensus selection ([`consensus`]).

pub mod bagcore;
pub mod consensus;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod hyperopt;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use error::{MilError, Result};
