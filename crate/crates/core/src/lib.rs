//! Document-level embeddings composed from sentence embeddings.
//!
//! The crate turns per-sentence embedding matrices into one vector per
//! document and evaluates the result:
//!
//! - [`corpus`]: documents, word tokenization, excerpt token ranges, collection statistics
//! - [`embed_store`]: the SEMB matrix format, PCA reduction, L2 normalization
//! - [`weighting`]: uniform, half-document and TF-IDF sentence weights
//! - [`pert`]: modified-PERT positional windows (TK-PERT, TF-PERT)
//! - [`learner`]: attention pooling over PERT windows trained with a small classifier
//! - [`align`]: top-K cosine retrieval and one-to-one document alignment
//! - [`metrics`]: accuracy, micro-F1 and bootstrap confidence intervals
//! - [`synthetic`]: seeded synthetic corpora for examples and tests
//! - [`commands`]: the pipeline behind the `docpool` binary
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example <name>`.

pub mod align;
pub mod commands;
pub mod corpus;
pub mod embed_store;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod pert;
pub mod synthetic;
pub mod weighting;

pub use error::{Error, Result};
