//! Pool-based active-learning data selection.
//!
//! The crate implements hybrid uncertainty and diversity sampling (HUDS) for
//! sentence-level corpus selection together with the usual baselines
//! (random, normalized sequence probability, pure uncertainty, pure
//! diversity and in-domain diversity sampling), a loop simulator that emulates
//! annotation by revealing stored targets, and post-hoc composition analyses.
//!
//! No model is run here. Token log-probabilities and sentence embeddings are
//! read from files produced by an external exporter, or, for embeddings, from
//! a deterministic hashed n-gram fallback.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod embedding;
mod error;
pub mod rng;
pub mod scoring;
pub mod simulator;
pub mod strategies;
pub mod stratify;

pub use error::{Error, Result};
