//! Bi-graph contrastive knowledge tracing.
//!
//! Per-concept exercise influence graphs are built from interaction logs,
//! exercise (node-level) and concept (graph-level) embeddings are pretrained
//! with a joint NT-Xent objective under centrality-adaptive augmentation,
//! and the fused embeddings feed recurrent or key-value-memory heads that
//! predict next-answer correctness.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod dataio;
pub mod digest;
pub mod encoder;
pub mod eval;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod pipeline;
pub mod predict;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use numerics::{Matrix, Tape, Var};
