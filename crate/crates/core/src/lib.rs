//! Adversarial domain-invariant training (ADIT) and its attentive extension
//! (AADIT), built from scratch on a small dense-network substrate.
//!
//! The pieces, bottom up:
//!
//! - [`linalg`]: row-major dense matrices over an [`Scalar`] (f32 or f64).
//! - [`nn`]: feedforward stacks with manual backprop, softmax cross-entropy,
//!   SGD, and a finite-difference gradient oracle.
//! - [`attention`]: local time-restricted self-attention (dot-product and
//!   additive scoring, optional one-hot relative positional encoding,
//!   multi-head projection) with exact backward passes.
//! - [`trainer`]: the adversarial model (feature extractor, class head,
//!   domain head, optional attention block), gradient reversal, the
//!   per-minibatch update rule, the training loop, and bit-exact
//!   checkpointing.
//! - [`data`]: a deterministic multi-domain synthetic sequence generator
//!   with per-class domain susceptibility.
//! - [`probe`]: post-hoc domain probing, class accuracy, and attention
//!   heatmap export.
//! - [`gradcheck`]: the analytic-vs-numeric gradient suite driven by the
//!   CLI's `gradcheck` subcommand.
//!
//! Kernels are generic over the scalar type; training, file formats and the
//! CLI are pinned to the 64-bit aliases below.

pub mod attention;
pub(crate) mod binio;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kv;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod probe;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Scalar;

/// Concrete instantiations. Everything that touches a file format uses the
/// 64-bit variants; the 32-bit ones exist because the kernels are generic.
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Stack64 = nn::FeedForwardStack<f64>;
pub type Stack32 = nn::FeedForwardStack<f32>;
pub type AttentionParams64 = attention::AttentionParams<f64>;
