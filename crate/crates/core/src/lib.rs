//! Hyperdimensional scene hashing and spatial-aware retrieval.
//!
//! The crate maps per-object feature vectors and positions into complex
//! hyperdimensional scene representations, learns a compact bipolar hash
//! that preserves hyperspace cosine similarity, and serves exact Hamming
//! retrieval with spatial-aware evaluation metrics.
//!
//! Modules follow the pipeline order:
//!
//! - [`hdc`] - hypervector types and the core operations
//! - [`spatial`] - positional encoding and scene composition
//! - [`encoder`] - the trainable feature-to-hyperspace encoder
//! - [`hasher`] - the multilinear hyperplane hash and its training losses
//! - [`index`] - bit-packed codes, exact top-K Hamming search, persistence
//! - [`metrics`] - mAP@K and the spatial-aware mAP@K_r
//! - [`pipeline`] - file formats, synthetic data, and end-to-end steps

// Validations use `!(x > 0.0)` so NaN fails them; `x <= 0.0` would let NaN
// slip through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encoder;
pub mod error;
pub mod hasher;
pub mod hdc;
pub mod index;
pub mod mat;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod spatial;

pub use error::{Error, Result};
