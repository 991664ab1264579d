//! Hybrid recommender engine.
//!
//! Collaborative filtering by matrix factorization (`P_u · Q_i`) is fused with
//! a semantic term computed from item text embeddings. Items that never
//! appeared in training can still be scored through their content alone.
//!
//! Module map:
//! - [`dataset`]: ingestion, dense id indices, seeded 70/15/15 splits
//! - [`mf`]: latent-factor model, objectives, SGD trainer
//! - [`semantic`]: text embedding providers and the latent-space projection
//! - [`hybrid`]: fused and cold-start scoring, joint training
//! - [`eval`]: top-K lists, precision/recall/coverage/RMSE, alpha sweep
//! - [`model_file`]: JSON model persistence
//! - [`cli`]: the `rexfuse` command line

pub mod cli;
pub mod dataset;
mod error;
pub mod eval;
pub mod hybrid;
pub mod linalg;
pub mod mf;
pub mod model_file;
pub mod semantic;

pub use error::{Error, Result};
