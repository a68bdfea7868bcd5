//! Temporal meta-path guided explainable sequential recommendation.
//!
//! Pipeline: ingest purchase logs into a typed graph ([`hin`]), learn
//! user/item vectors from purchase-graph walks ([`embed`]), sample typed
//! path instances between consecutive purchases ([`metapath`]), embed them
//! ([`path_encoder`]), score next items with path attention and gated item
//! updates ([`model`], [`train`]), then rank ([`eval`]) and explain
//! ([`explain`]).

pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod hin;
pub mod linalg;
pub mod metapath;
pub mod model;
pub mod path_encoder;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
