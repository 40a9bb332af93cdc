//! Local time-restricted self-attention over deep feature sequences.
//!
//! For each frame `t` the block scores the frames in the window
//! `[t - L, t + R]` (truncated at sequence edges, softmax renormalized over
//! the surviving positions) against the current frame and emits the context
//! vector `c_t = sum_tau a_{t,tau} f_tau`. Scoring is either scaled
//! dot-product `k^T q / sqrt(d)` or additive `g^T tanh(k + q + b)`.
//!
//! With positional encoding on, keys and values are extended by the one-hot
//! relative position `onehot(tau - t + L)` and queries by a trainable
//! position-bias vector, so the dot score gains `p[tau - t + L]` inside the
//! scaling and the additive score runs on the extended vectors. With `H`
//! heads, projections live in `H` subspaces of dimension `r_a / H` and the
//! per-head contexts are concatenated; no output projection, so the
//! learnable parameter count is independent of `H`.

#[cfg(test)]
mod attend_tests;
mod backward;
mod forward;

pub use backward::attend_backward;
pub use forward::{attend, project};

use rand::Rng;

use crate::linalg::Matrix;
use crate::nn::{ParamBlock, Parameterized};
use crate::scalar::{scalar, Scalar};
use crate::{Error, Result};

/// Similarity scoring for the attention windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreType {
    DotProduct,
    Additive,
}

impl std::fmt::Display for ScoreType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreType::DotProduct => "dot",
            ScoreType::Additive => "additive",
        })
    }
}

impl std::str::FromStr for ScoreType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ScoreType::DotProduct),
            "additive" => Ok(ScoreType::Additive),
            other => Err(Error::Config(format!(
                "unknown score type {other:?} (expected dot or additive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    /// Left context length L (frames).
    pub left: usize,
    /// Right context length R (frames).
    pub right: usize,
    /// Total key/query dimension r_a across all heads.
    pub key_dim: usize,
    pub score: ScoreType,
    pub heads: usize,
    pub positional_encoding: bool,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.key_dim == 0 {
            return Err(Error::Config("attention key_dim must be >= 1".into()));
        }
        if self.heads == 0 {
            return Err(Error::Config("attention heads must be >= 1".into()));
        }
        if self.key_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "key_dim {} is not divisible by heads {}",
                self.key_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Full window size L + R + 1.
    pub fn window_len(&self) -> usize {
        self.left + self.right + 1
    }

    /// Per-head projection dimension r_a / H.
    pub fn head_dim(&self) -> usize {
        self.key_dim / self.heads
    }

    /// Score-space dimension per head including the one-hot extension.
    pub fn extended_dim(&self) -> usize {
        self.head_dim() + if self.positional_encoding { self.window_len() } else { 0 }
    }

    /// Rows of one head's context block.
    pub fn head_context_dim(&self, feature_dim: usize) -> usize {
        feature_dim + if self.positional_encoding { self.window_len() } else { 0 }
    }

    /// Rows of the concatenated context matrix.
    pub fn context_dim(&self, feature_dim: usize) -> usize {
        self.heads * self.head_context_dim(feature_dim)
    }
}

/// Parameters of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    /// Key projection, `[head_dim x feature_dim]`.
    pub w_key: ParamBlock<T>,
    /// Query projection, `[head_dim x feature_dim]`.
    pub w_query: ParamBlock<T>,
    /// Additive gate g, `[extended_dim x 1]`; absent for dot-product.
    pub gate: Option<ParamBlock<T>>,
    /// Additive bias b, `[extended_dim x 1]`; absent for dot-product.
    pub bias: Option<ParamBlock<T>>,
    /// Trainable query-side position bias, `[window_len x 1]`; present only
    /// with positional encoding.
    pub pos_bias: Option<ParamBlock<T>>,
}

/// The attention function's learnable state plus its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub config: AttentionConfig,
    pub feature_dim: usize,
    pub heads: Vec<HeadParams<T>>,
}

impl<T: Scalar> AttentionParams<T> {
    /// Xavier-initialized projections; gate initialized like a weight row so
    /// additive scores are informative from the start; bias and position
    /// bias start at zero.
    pub fn init(config: AttentionConfig, feature_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::Config("attention feature_dim must be >= 1".into()));
        }
        let head_dim = config.head_dim();
        let ext_dim = config.extended_dim();
        let limit = (6.0 / (feature_dim + head_dim) as f64).sqrt();
        let mut heads = Vec::with_capacity(config.heads);
        for h in 0..config.heads {
            let mut sample = |rows: usize, cols: usize, lim: f64| {
                Matrix::from_fn(rows, cols, |_, _| {
                    scalar::<T>(-lim + 2.0 * lim * rng.random::<f64>())
                })
            };
            let w_key = sample(head_dim, feature_dim, limit);
            let w_query = sample(head_dim, feature_dim, limit);
            let (gate, bias) = match config.score {
                ScoreType::DotProduct => (None, None),
                ScoreType::Additive => {
                    let gate_limit = (3.0 / ext_dim as f64).sqrt();
                    let g = sample(ext_dim, 1, gate_limit);
                    (
                        Some(ParamBlock::new(format!("attn.{h}.g"), g)),
                        Some(ParamBlock::new(
                            format!("attn.{h}.b"),
                            Matrix::zeros(ext_dim, 1),
                        )),
                    )
                }
            };
            let pos_bias = config.positional_encoding.then(|| {
                ParamBlock::new(
                    format!("attn.{h}.p"),
                    Matrix::zeros(config.window_len(), 1),
                )
            });
            heads.push(HeadParams {
                w_key: ParamBlock::new(format!("attn.{h}.wk"), w_key),
                w_query: ParamBlock::new(format!("attn.{h}.wq"), w_query),
                gate,
                bias,
                pos_bias,
            });
        }
        Ok(Self {
            config,
            feature_dim,
            heads,
        })
    }
}

/// Exact learnable-parameter count of the attention function for a given
/// configuration and feature dimension. Since each of the `H` heads projects
/// into `r_a / H` dimensions, the projection count `2 * r_a * feature_dim`
/// is independent of `H`.
pub fn param_count(config: &AttentionConfig, feature_dim: usize) -> usize {
    let head_dim = config.head_dim();
    let ext_dim = config.extended_dim();
    let mut per_head = 2 * head_dim * feature_dim;
    if config.score == ScoreType::Additive {
        per_head += 2 * ext_dim;
    }
    if config.positional_encoding {
        per_head += config.window_len();
    }
    config.heads * per_head
}

impl<T: Scalar> Parameterized<T> for AttentionParams<T> {
    fn param_blocks(&self) -> Vec<&ParamBlock<T>> {
        let mut blocks = Vec::new();
        for head in &self.heads {
            blocks.push(&head.w_key);
            blocks.push(&head.w_query);
            if let Some(g) = &head.gate {
                blocks.push(g);
            }
            if let Some(b) = &head.bias {
                blocks.push(b);
            }
            if let Some(p) = &head.pos_bias {
                blocks.push(p);
            }
        }
        blocks
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock<T>> {
        let mut blocks = Vec::new();
        for head in &mut self.heads {
            blocks.push(&mut head.w_key);
            blocks.push(&mut head.w_query);
            if let Some(g) = &mut head.gate {
                blocks.push(g);
            }
            if let Some(b) = &mut head.bias {
                blocks.push(b);
            }
            if let Some(p) = &mut head.pos_bias {
                blocks.push(p);
            }
        }
        blocks
    }
}

/// Boundary-truncated attention window of frame `t`: positions
/// `tau in [lo, hi]`, both inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub lo: usize,
    pub hi: usize,
}

impl WindowSpan {
    pub fn for_frame(t: usize, left: usize, right: usize, frames: usize) -> Self {
        WindowSpan {
            lo: t.saturating_sub(left),
            hi: (t + right).min(frames - 1),
        }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

/// Per-head forward artifacts kept for the backward pass and for heatmap
/// export.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    /// Projected keys `[head_dim x frames]`.
    pub keys: Matrix<T>,
    /// Projected queries `[head_dim x frames]`.
    pub queries: Matrix<T>,
    /// Raw similarity scores per frame, one entry per window slot.
    pub scores: Vec<Vec<T>>,
    /// Attention probabilities per frame, aligned with `scores`.
    pub probs: Vec<Vec<T>>,
}

/// Everything `attend` computed besides the context matrix.
#[derive(Debug, Clone)]
pub struct AttentionTrace<T> {
    pub windows: Vec<WindowSpan>,
    pub heads: Vec<HeadTrace<T>>,
    pub feature_dim: usize,
}

impl<T: Scalar> AttentionTrace<T> {
    pub fn frames(&self) -> usize {
        self.windows.len()
    }

    /// Mean attention probabilities over heads for frame `t`, one entry per
    /// window slot.
    pub fn mean_probs(&self, t: usize) -> Vec<T> {
        let slots = self.windows[t].len();
        let mut out = vec![T::zero(); slots];
        for head in &self.heads {
            for (o, &p) in out.iter_mut().zip(&head.probs[t]) {
                *o += p;
            }
        }
        let inv = T::one() / scalar::<T>(self.heads.len() as f64);
        for o in &mut out {
            *o = *o * inv;
        }
        out
    }

    /// Total incoming attention mass per frame, `mass[tau] = sum_t a_{t,tau}`,
    /// averaged over heads.
    pub fn incoming_mass(&self) -> Vec<T> {
        let mut mass = vec![T::zero(); self.frames()];
        for (t, span) in self.windows.iter().enumerate() {
            let probs = self.mean_probs(t);
            for (slot, tau) in span.positions().enumerate() {
                mass[tau] += probs[slot];
            }
        }
        mass
    }
}

/// Scaled dot-product score `k^T q / sqrt(scale_dim)`. With positional
/// encoding the caller passes the extended dimension as `scale_dim` and adds
/// the position-bias term itself.
pub fn score_dot<T: Scalar>(key: &[T], query: &[T], scale_dim: usize) -> T {
    debug_assert_eq!(key.len(), query.len());
    let mut acc = T::zero();
    for (&k, &q) in key.iter().zip(query) {
        acc = k.mul_add(q, acc);
    }
    acc / scalar::<T>(scale_dim as f64).sqrt()
}

/// Additive score `g^T tanh(k + q + b)` over same-length slices.
pub fn score_additive<T: Scalar>(key: &[T], query: &[T], gate: &[T], bias: &[T]) -> T {
    debug_assert!(
        key.len() == query.len() && key.len() == gate.len() && key.len() == bias.len(),
        "additive score slice lengths differ"
    );
    let mut acc = T::zero();
    for i in 0..key.len() {
        acc = gate[i].mul_add((key[i] + query[i] + bias[i]).tanh(), acc);
    }
    acc
}
