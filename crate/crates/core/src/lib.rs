//! Semantic cache optimization.
//!
//! A semantic cache stores at most `k` query/response pairs and answers a new
//! query either with a fresh LLM call or with the response of the most
//! similar cached query. This crate provides the expected-loss model
//! ([`model`]), exact and approximate solvers for known parameters
//! ([`solvers`]), learners for logged data ([`offline`]) and for online
//! interaction with switching costs ([`online`]), synthetic workloads
//! ([`workload`]) and the experiment harness behind the `semcache` binary
//! ([`cli`]).

pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod offline;
pub mod online;
pub mod solvers;
pub mod workload;

pub use error::{Error, Result};
pub use model::{
    bipartite_loss, decide, distance_to_cache, expected_loss, nearest_cached, Cache, Decision,
    DistanceMatrix, DistanceMetric, LossModel, QueryId, QuerySpace,
};
