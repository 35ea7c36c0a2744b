//! Embedding-based MT evaluation: YiSi-style lexical similarity, a learned
//! regression head, score ensembles, and correlation against human ratings.

pub mod cli;
pub mod corpus;
pub mod demo;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod head;
pub mod scores;
pub mod yisi;

mod io_util;

pub use error::{Error, Result};

/// Seed used when none is given on the command line or in `MTMB_SEED`.
pub const DEFAULT_SEED: u64 = 42;
