//! Post-hoc measurement of what training did to the deep features.
//!
//! The domain probe is a fresh classifier trained from scratch on frozen
//! features; its held-out accuracy measures how much domain information the
//! feature extractor still leaks (lower = more domain-invariant). The
//! adversarially co-trained domain head is useless as a meter at
//! convergence, the probe is not.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{attend, AttentionTrace};
use crate::data::SequenceSample;
use crate::linalg::Matrix;
use crate::nn::{argmax_accuracy, sgd_step, softmax_xent, FeedForwardStack};
use crate::trainer::AdversarialModel;
use crate::{Error, Matrix64, Result, Stack64};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Hidden widths of the probe classifier; empty for a linear probe.
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub mu: f64,
    /// Frames per probe minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
            epochs: 8,
            mu: 0.1,
            batch_size: 256,
            seed: 1,
        }
    }
}

/// Deep feature sequences `f_t = M_f(x_t)` for a split; a pure map, fanned
/// out over `jobs` threads with results concatenated in sequence order.
pub fn extract_features(
    model: &AdversarialModel,
    split: &[SequenceSample],
    jobs: usize,
) -> Result<Vec<Matrix64>> {
    let run = |seq: &SequenceSample| -> Result<Matrix64> {
        let (features, _) = model.feature_net.forward(&seq.frames)?;
        Ok(features)
    };
    if jobs <= 1 || split.len() < 2 {
        return split.iter().map(run).collect();
    }
    let chunk_size = split.len().div_ceil(jobs);
    let chunks: Vec<&[SequenceSample]> = split.chunks(chunk_size).collect();
    let mut results: Vec<Vec<Result<Matrix64>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| scope.spawn(move || chunk.iter().map(run).collect::<Vec<_>>()))
            .collect();
        for handle in handles {
            results.push(handle.join().expect("feature worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}

fn flatten_features(
    features: &[Matrix64],
    domains: &[u16],
) -> Result<(Matrix64, Vec<usize>)> {
    if features.is_empty() {
        return Err(Error::Input("no feature sequences".into()));
    }
    if features.len() != domains.len() {
        return Err(Error::Input(format!(
            "{} feature sequences but {} domain labels",
            features.len(),
            domains.len()
        )));
    }
    let dim = features[0].rows();
    let total: usize = features.iter().map(|f| f.cols()).sum();
    let mut frames = Matrix::zeros(dim, total);
    let mut labels = Vec::with_capacity(total);
    let mut offset = 0;
    for (f, &d) in features.iter().zip(domains) {
        frames.paste_cols(offset, f);
        labels.extend(std::iter::repeat(d as usize).take(f.cols()));
        offset += f.cols();
    }
    Ok((frames, labels))
}

/// Trains a fresh domain classifier on frozen train-split features and
/// returns its frame accuracy on the test-split features. Deterministic
/// given `(features, config.seed)`.
pub fn train_probe(
    domain_count: usize,
    train_features: &[Matrix64],
    train_domains: &[u16],
    test_features: &[Matrix64],
    test_domains: &[u16],
    config: &ProbeConfig,
) -> Result<f64> {
    let (train_frames, train_labels) = flatten_features(train_features, train_domains)?;
    let (test_frames, test_labels) = flatten_features(test_features, test_domains)?;
    {
        let mut seen = vec![false; domain_count];
        for &l in &train_labels {
            if l >= domain_count {
                return Err(Error::Input(format!(
                    "domain label {l} out of range for {domain_count} domains"
                )));
            }
            seen[l] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::Input(
                "probe training features cover fewer than two domains".into(),
            ));
        }
    }

    let mut dims = vec![train_frames.rows()];
    dims.extend(&config.hidden_dims);
    dims.push(domain_count);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe: Stack64 = FeedForwardStack::classifier("probe", &dims, &mut rng)?;

    let total = train_frames.cols();
    let mut order: Vec<usize> = (0..total).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut batch = Matrix::zeros(train_frames.rows(), chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for (slot, &idx) in chunk.iter().enumerate() {
                for r in 0..train_frames.rows() {
                    *batch.at_mut(r, slot) = train_frames.at(r, idx);
                }
                labels.push(train_labels[idx]);
            }
            let (logits, cache) = probe.forward(&batch)?;
            let (_, grad) = softmax_xent(&logits, &labels)?;
            probe.backward(&cache, &grad)?;
            sgd_step(&mut probe, config.mu)?;
        }
    }

    let (test_logits, _) = probe.forward(&test_frames)?;
    Ok(argmax_accuracy(&test_logits, &test_labels))
}

/// Frame-level argmax accuracy of `M_y(M_f(x))` over a split.
pub fn class_accuracy(model: &AdversarialModel, split: &[SequenceSample]) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Input("empty split".into()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for seq in split {
        let (features, _) = model.feature_net.forward(&seq.frames)?;
        let (logits, _) = model.class_net.forward(&features)?;
        let labels = seq.class_labels_usize();
        let acc = argmax_accuracy(&logits, &labels);
        correct += (acc * labels.len() as f64).round() as usize;
        total += labels.len();
    }
    Ok(correct as f64 / total as f64)
}

/// Computes the attention trace of one sequence under an aadit model.
pub fn attention_trace(
    model: &AdversarialModel,
    sequence: &SequenceSample,
) -> Result<AttentionTrace<f64>> {
    let attn = model
        .attention
        .as_ref()
        .ok_or_else(|| Error::Config("model has no attention block (not aadit)".into()))?;
    let (features, _) = model.feature_net.forward(&sequence.frames)?;
    let (_, trace) = attend(attn, &features)?;
    Ok(trace)
}

/// Writes one sequence's attention heatmap as CSV: one row per frame,
/// one column per relative position `-L..R`, blank cells outside the
/// truncated window. Multi-head traces export the mean over heads.
pub fn export_attention(trace: &AttentionTrace<f64>, left: usize, right: usize, path: &Path) -> Result<()> {
    let mut out = String::from("frame");
    for rel in -(left as i64)..=(right as i64) {
        write!(out, ",{rel}").expect("string write");
    }
    out.push('\n');
    for (t, span) in trace.windows.iter().enumerate() {
        write!(out, "{t}").expect("string write");
        let probs = trace.mean_probs(t);
        for rel in 0..(left + right + 1) {
            out.push(',');
            // rel slot corresponds to absolute position t - left + rel
            let tau = t as i64 - left as i64 + rel as i64;
            if tau >= span.lo as i64 && tau <= span.hi as i64 {
                let slot = (tau - span.lo as i64) as usize;
                write!(out, "{}", probs[slot]).expect("string write");
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
