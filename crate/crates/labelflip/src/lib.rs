//! Label flipping poisoning attacks and a k-NN label sanitization defence
//! for binary linear classifiers, plus the experiment harness used to
//! evaluate them against each other.
//!
//! The crate is organised around the stages of a poisoning study:
//!
//! - [`dataset`]: CSV/IDX ingestion, standardization, seeded splits.
//! - [`linear_model`]: hinge-loss linear classifier trained with SGD.
//! - [`attack`]: the greedy label flipping attack, an exact exhaustive
//!   solver for small instances, and a random-flip baseline.
//! - [`defence`]: k-NN based relabelling of suspicious training points.
//! - [`experiments`]: split/poison/defend sweeps and result aggregation.
//! - [`plot`]: static SVG line charts of the result tables.
//! - [`fetch`]: conversion of the benchmark datasets to a canonical CSV.
//! - [`synth`]: seeded synthetic datasets for tests and demos.
//!
//! Everything is deterministic given the seeds in the various configs;
//! parallel sections are reductions over independent pure computations, so
//! results do not depend on thread count.

pub mod attack;
pub mod dataset;
pub mod defence;
pub mod error;
pub mod experiments;
pub mod fetch;
pub mod linear_model;
pub mod mnist;
pub mod plot;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
