//! Model-wise double descent on MNIST with width-swept two-layer MLPs, and a
//! set of diagnostics computed from captured hidden activations:
//!
//! - class activation matrices (CAMs) and their pairwise cosine similarity,
//! - a sub-sampled Rademacher "richness" estimate per predicted class,
//! - k-NN isolation of noisy-labelled training points,
//! - weight/activation sparsity and a class-wise activation NDCG.
//!
//! Everything is `f64`, row-major and driven by seeded ChaCha streams, so a
//! sweep configuration fully determines its output files.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod nn;
pub mod report;
pub mod sweep;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
