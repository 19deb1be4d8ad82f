//! Desk-scale laboratory for studying fake-profile data poisoning of
//! career-prediction models: synthetic trajectory corpora, transition
//! graphs with a reachability ("reality") constraint, surrogate and
//! victim next-company predictors, poison-batch generators, and a
//! seeded, reproducible experiment pipeline measuring Hit Ratio and
//! Improvement Rate.

pub mod attack;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod predict;
pub mod rng;

pub use error::{Error, Result};
