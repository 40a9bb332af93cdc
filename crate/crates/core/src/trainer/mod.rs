//! The adversarial model and its training loop.
//!
//! A model is a feature extractor `M_f`, a class head `M_y`, and (outside
//! baseline mode) a domain head `M_d`, optionally fed through the attention
//! block `M_a` (aadit mode). One training step computes both branch losses
//! from the same pre-update parameters, composes the feature gradient as
//! `dL_senone/dF - lambda * dL_domain/dF` through the gradient reversal
//! layer, and applies one simultaneous SGD update to every block:
//! the class and feature parameters descend the class loss while ascending
//! the domain loss, and the domain branch (attention included) descends the
//! domain loss.

mod checkpoint;
mod config;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, RngState};
pub use config::{Mode, TrainConfig, TRAIN_KEYS};

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{attend, attend_backward, AttentionParams, AttentionTrace};
use crate::data::{Dataset, SequenceSample};
use crate::linalg::Matrix;
use crate::metrics::MetricsRow;
use crate::nn::{argmax_accuracy, sgd_step, softmax_xent, FeedForwardStack, ParamBlock, Parameterized};
use crate::{Error, Matrix64, Result, Stack64};

/// Component streams of the seeded generator. Initialization draws for each
/// component come from its own stream, so a baseline, adit and aadit model
/// with the same seed share bit-identical `M_f`/`M_y` (and `M_d`) initial
/// values regardless of which extra components exist.
const STREAM_FEATURE: u64 = 1;
const STREAM_CLASS: u64 = 2;
const STREAM_DOMAIN: u64 = 3;
const STREAM_ATTENTION: u64 = 4;
const STREAM_SHUFFLE: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialModel {
    pub mode: Mode,
    /// M_f: bottom `split_depth` layers.
    pub feature_net: Stack64,
    /// M_y: class head on deep features.
    pub class_net: Stack64,
    /// M_d: domain head; absent in baseline mode.
    pub domain_net: Option<Stack64>,
    /// M_a: attention block; present in aadit mode only.
    pub attention: Option<AttentionParams<f64>>,
}

impl AdversarialModel {
    /// Builds a freshly initialized model for the config.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let stream_rng = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream);
            rng
        };
        let feature_net = FeedForwardStack::tanh_stack(
            "f",
            &config.feature_dims(),
            &mut stream_rng(STREAM_FEATURE),
        )?;
        let class_net =
            FeedForwardStack::classifier("y", &config.class_dims(), &mut stream_rng(STREAM_CLASS))?;
        let domain_net = match config.mode {
            Mode::Baseline => None,
            _ => Some(FeedForwardStack::classifier(
                "d",
                &config.domain_dims(),
                &mut stream_rng(STREAM_DOMAIN),
            )?),
        };
        let attention = match config.mode {
            Mode::Aadit => Some(AttentionParams::init(
                config.attention,
                config.feature_dim,
                &mut stream_rng(STREAM_ATTENTION),
            )?),
            _ => None,
        };
        Ok(Self {
            mode: config.mode,
            feature_net,
            class_net,
            domain_net,
            attention,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_net.output_dim()
    }
}

impl Parameterized<f64> for AdversarialModel {
    /// Declaration order `M_f, M_y, M_d, M_a`; checkpoints serialize blocks
    /// in exactly this order.
    fn param_blocks(&self) -> Vec<&ParamBlock<f64>> {
        let mut blocks = self.feature_net.param_blocks();
        blocks.extend(self.class_net.param_blocks());
        if let Some(d) = &self.domain_net {
            blocks.extend(d.param_blocks());
        }
        if let Some(a) = &self.attention {
            blocks.extend(a.param_blocks());
        }
        blocks
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock<f64>> {
        let mut blocks = self.feature_net.param_blocks_mut();
        blocks.extend(self.class_net.param_blocks_mut());
        if let Some(d) = &mut self.domain_net {
            blocks.extend(d.param_blocks_mut());
        }
        if let Some(a) = &mut self.attention {
            blocks.extend(a.param_blocks_mut());
        }
        blocks
    }
}

/// Gradient reversal layer. The forward direction is the identity (callers
/// simply pass features through); backward multiplies by `-lambda`.
pub fn grl_backward(grad: &Matrix64, lambda: f64) -> Matrix64 {
    grad.scaled(-lambda)
}

/// A minibatch of whole sequences flattened into one frame matrix. `spans`
/// holds each sequence's column range so the attention block never crosses
/// sequence boundaries.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub frames: Matrix64,
    pub class_labels: Vec<usize>,
    pub domain_labels: Vec<usize>,
    pub spans: Vec<(usize, usize)>,
}

impl MiniBatch {
    pub fn from_sequences(sequences: &[&SequenceSample]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Input("empty minibatch".into()));
        }
        let dim = sequences[0].frames.rows();
        let total: usize = sequences.iter().map(|s| s.frames_len()).sum();
        let mut frames = Matrix::zeros(dim, total);
        let mut class_labels = Vec::with_capacity(total);
        let mut domain_labels = Vec::with_capacity(total);
        let mut spans = Vec::with_capacity(sequences.len());
        let mut offset = 0;
        for seq in sequences {
            if seq.frames.rows() != dim {
                return Err(Error::Input(format!(
                    "sequence frame dim {} differs from batch dim {dim}",
                    seq.frames.rows()
                )));
            }
            let len = seq.frames_len();
            frames.paste_cols(offset, &seq.frames);
            class_labels.extend(seq.class_labels.iter().map(|&l| l as usize));
            domain_labels.extend(std::iter::repeat(seq.domain as usize).take(len));
            spans.push((offset, offset + len));
            offset += len;
        }
        Ok(Self {
            frames,
            class_labels,
            domain_labels,
            spans,
        })
    }

    pub fn frames_total(&self) -> usize {
        self.frames.cols()
    }
}

/// Runs the domain branch forward from deep features: through the attention
/// block in aadit mode, straight into the domain head otherwise. Returns
/// the branch input (context or features) and per-sequence traces.
fn domain_branch_input(
    model: &AdversarialModel,
    features: &Matrix64,
    spans: &[(usize, usize)],
) -> Result<(Matrix64, Option<Vec<AttentionTrace<f64>>>)> {
    match &model.attention {
        None => Ok((features.clone(), None)),
        Some(attn) => {
            let ctx_dim = attn.config.context_dim(attn.feature_dim);
            let mut ctx = Matrix::zeros(ctx_dim, features.cols());
            let mut traces = Vec::with_capacity(spans.len());
            for &(lo, hi) in spans {
                let (c, trace) = attend(attn, &features.cols_range(lo, hi))?;
                ctx.paste_cols(lo, &c);
                traces.push(trace);
            }
            Ok((ctx, Some(traces)))
        }
    }
}

/// Average negative log-likelihood of the class labels through
/// `M_y(M_f(x))`. Pure; used directly by the finite-difference oracle.
pub fn senone_loss(model: &AdversarialModel, batch: &MiniBatch) -> Result<f64> {
    let (features, _) = model.feature_net.forward(&batch.frames)?;
    let (logits, _) = model.class_net.forward(&features)?;
    let (loss, _) = softmax_xent(&logits, &batch.class_labels)?;
    Ok(loss)
}

/// Average negative log-likelihood of the domain labels through
/// `M_d(M_f(x))` (adit) or `M_d(M_a(M_f(x)))` (aadit). Pure.
pub fn domain_loss(model: &AdversarialModel, batch: &MiniBatch) -> Result<f64> {
    let domain_net = model
        .domain_net
        .as_ref()
        .ok_or_else(|| Error::Config("model has no domain classifier".into()))?;
    let (features, _) = model.feature_net.forward(&batch.frames)?;
    let (branch_input, _) = domain_branch_input(model, &features, &batch.spans)?;
    let (logits, _) = domain_net.forward(&branch_input)?;
    let (loss, _) = softmax_xent(&logits, &batch.domain_labels)?;
    Ok(loss)
}

/// Per-step losses and in-training accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub l_senone: f64,
    pub l_domain: Option<f64>,
    pub class_acc: f64,
    pub domain_acc: Option<f64>,
}

/// One simultaneous update of all parameter groups from a single minibatch:
/// every gradient is computed at the pre-update parameters, then applied at
/// once. The feature gradient of the domain branch flows through the
/// gradient reversal layer (`-lambda`), through the attention backward pass
/// in aadit mode.
pub fn train_step(
    model: &mut AdversarialModel,
    batch: &MiniBatch,
    lambda: f64,
    mu: f64,
) -> Result<StepOutcome> {
    model.zero_grads();

    let (features, feature_cache) = model.feature_net.forward(&batch.frames)?;

    // class branch
    let (class_logits, class_cache) = model.class_net.forward(&features)?;
    let (l_senone, d_class_logits) = softmax_xent(&class_logits, &batch.class_labels)?;
    let class_acc = argmax_accuracy(&class_logits, &batch.class_labels);
    let mut grad_features = model.class_net.backward(&class_cache, &d_class_logits)?;

    // domain branch
    let mut l_domain = None;
    let mut domain_acc = None;
    if model.domain_net.is_some() {
        let (branch_input, traces) = domain_branch_input(model, &features, &batch.spans)?;
        let domain_net = model.domain_net.as_mut().expect("checked above");
        let (domain_logits, domain_cache) = domain_net.forward(&branch_input)?;
        let (ld, d_domain_logits) = softmax_xent(&domain_logits, &batch.domain_labels)?;
        l_domain = Some(ld);
        domain_acc = Some(argmax_accuracy(&domain_logits, &batch.domain_labels));
        let grad_branch_input = domain_net.backward(&domain_cache, &d_domain_logits)?;

        let grad_features_domain = match (&mut model.attention, traces) {
            (Some(attn), Some(traces)) => {
                let mut grad = Matrix::zeros(features.rows(), features.cols());
                for (&(lo, hi), trace) in batch.spans.iter().zip(&traces) {
                    let g = attend_backward(
                        attn,
                        &features.cols_range(lo, hi),
                        trace,
                        &grad_branch_input.cols_range(lo, hi),
                    )?;
                    grad.paste_cols(lo, &g);
                }
                grad
            }
            _ => grad_branch_input,
        };
        grad_features.add_assign(&grl_backward(&grad_features_domain, lambda));
    }

    if !l_senone.is_finite() || l_domain.is_some_and(|l| !l.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite loss: l_senone={l_senone}, l_domain={l_domain:?}"
        )));
    }

    model.feature_net.backward(&feature_cache, &grad_features)?;
    sgd_step(model, mu)?;

    Ok(StepOutcome {
        l_senone,
        l_domain,
        class_acc,
        domain_acc,
    })
}

/// Loss and accuracy summary of a whole split under the current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub l_senone: f64,
    pub l_domain: Option<f64>,
    pub class_acc: f64,
    pub domain_acc: Option<f64>,
}

pub fn evaluate_split(model: &AdversarialModel, split: &[SequenceSample]) -> Result<EvalStats> {
    let refs: Vec<&SequenceSample> = split.iter().collect();
    let batch = MiniBatch::from_sequences(&refs)?;
    let (features, _) = model.feature_net.forward(&batch.frames)?;
    let (class_logits, _) = model.class_net.forward(&features)?;
    let (l_senone, _) = softmax_xent(&class_logits, &batch.class_labels)?;
    let class_acc = argmax_accuracy(&class_logits, &batch.class_labels);
    let (l_domain, domain_acc) = match &model.domain_net {
        None => (None, None),
        Some(domain_net) => {
            let (branch_input, _) = domain_branch_input(model, &features, &batch.spans)?;
            let (logits, _) = domain_net.forward(&branch_input)?;
            let (l, _) = softmax_xent(&logits, &batch.domain_labels)?;
            (Some(l), Some(argmax_accuracy(&logits, &batch.domain_labels)))
        }
    };
    Ok(EvalStats {
        l_senone,
        l_domain,
        class_acc,
        domain_acc,
    })
}

/// Driver state for a (possibly resumed) training run.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: AdversarialModel,
    pub shuffle_rng: ChaCha8Rng,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = AdversarialModel::init(&config)?;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(STREAM_SHUFFLE);
        Ok(Self {
            config,
            model,
            shuffle_rng,
            step: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let Checkpoint {
            config,
            model,
            step,
            rng,
        } = ckpt;
        Ok(Self {
            config,
            model,
            shuffle_rng: rng.into_rng()?,
            step,
        })
    }

    pub fn rng_state(&self) -> RngState {
        RngState::of(&self.shuffle_rng)
    }

    fn steps_per_epoch(&self, dataset: &Dataset) -> u64 {
        let n = dataset.train.len() as u64;
        let b = self.config.batch_size as u64;
        n.div_ceil(b)
    }

    /// Runs the remaining epochs (sequence order reshuffled per epoch with
    /// the persisted generator; frames within a sequence never reordered).
    /// Writes one checkpoint per finished epoch plus `final.ckpt` when
    /// `out_dir` is given, and returns one metrics row per step.
    pub fn run(&mut self, dataset: &Dataset, out_dir: Option<&Path>) -> Result<Vec<MetricsRow>> {
        if dataset.train.is_empty() {
            return Err(Error::Input("dataset has no training sequences".into()));
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let steps_per_epoch = self.steps_per_epoch(dataset);
        let start_epoch = (self.step / steps_per_epoch) as usize;
        let mut metrics = Vec::new();

        for epoch in start_epoch..self.config.epochs {
            let mut order: Vec<usize> = (0..dataset.train.len()).collect();
            order.shuffle(&mut self.shuffle_rng);
            for chunk in order.chunks(self.config.batch_size) {
                let sequences: Vec<&SequenceSample> =
                    chunk.iter().map(|&i| &dataset.train[i]).collect();
                let batch = MiniBatch::from_sequences(&sequences)?;
                let outcome =
                    train_step(&mut self.model, &batch, self.config.lambda, self.config.mu)?;
                self.step += 1;
                metrics.push(MetricsRow {
                    step: self.step,
                    l_senone: Some(outcome.l_senone),
                    l_domain: outcome.l_domain,
                    class_acc: Some(outcome.class_acc),
                    domain_acc: outcome.domain_acc,
                    probe_acc: None,
                });
            }
            if let Some(dir) = out_dir {
                self.save_checkpoint(&dir.join(format!("epoch_{:03}.ckpt", epoch + 1)))?;
            }
        }
        if let Some(dir) = out_dir {
            self.save_checkpoint(&dir.join("final.ckpt"))?;
        }
        Ok(metrics)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint_save(path, &self.model, &self.config, self.step, &self.rng_state())
    }
}

/// Convenience wrapper: fresh run over the whole config.
pub fn train_loop(
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<(AdversarialModel, Vec<MetricsRow>)> {
    let mut trainer = Trainer::new(config.clone())?;
    let metrics = trainer.run(dataset, out_dir)?;
    Ok((trainer.model, metrics))
}

/// Checkpoint paths a finished run leaves behind.
pub fn checkpoint_paths(out_dir: &Path, epochs: usize) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = (1..=epochs)
        .map(|e| out_dir.join(format!("epoch_{e:03}.ckpt")))
        .collect();
    paths.push(out_dir.join("final.ckpt"));
    paths
}

#[cfg(test)]
mod tests;
