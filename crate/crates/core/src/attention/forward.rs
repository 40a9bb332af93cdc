use crate::attention::{
    AttentionParams, AttentionTrace, HeadParams, HeadTrace, ScoreType, WindowSpan,
};
use crate::linalg::Matrix;
use crate::nn::stable_softmax;
use crate::scalar::{scalar, Scalar};
use crate::{Error, Result};

/// Projects a feature sequence into one head's key and query spaces:
/// `K = W_k F`, `Q = W_q F`.
pub fn project<T: Scalar>(head: &HeadParams<T>, features: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    (
        head.w_key.value.matmul(features),
        head.w_query.value.matmul(features),
    )
}

/// Computes one head's similarity score for the window slot at relative
/// position `rel` (0-based within the full window).
fn slot_score<T: Scalar>(
    params: &AttentionParams<T>,
    head: &HeadParams<T>,
    keys: &Matrix<T>,
    queries: &Matrix<T>,
    t: usize,
    tau: usize,
    rel: usize,
) -> T {
    let cfg = &params.config;
    let head_dim = cfg.head_dim();
    match cfg.score {
        ScoreType::DotProduct => {
            let mut dot = keys.col_dot(tau, queries, t);
            if let Some(p) = &head.pos_bias {
                // one-hot key extension dotted with the query's position
                // bias extension contributes p[rel]
                dot += p.value.at(rel, 0);
            }
            dot / scalar::<T>(cfg.extended_dim() as f64).sqrt()
        }
        ScoreType::Additive => {
            let gate = &head.gate.as_ref().expect("additive head has gate").value;
            let bias = &head.bias.as_ref().expect("additive head has bias").value;
            let mut acc = T::zero();
            for j in 0..head_dim {
                let u = keys.at(j, tau) + queries.at(j, t) + bias.at(j, 0);
                acc = gate.at(j, 0).mul_add(u.tanh(), acc);
            }
            if let Some(p) = &head.pos_bias {
                // extended slots: one-hot(rel) + position bias + bias tail
                for r in 0..cfg.window_len() {
                    let onehot = if r == rel { T::one() } else { T::zero() };
                    let u = onehot + p.value.at(r, 0) + bias.at(head_dim + r, 0);
                    acc = gate.at(head_dim + r, 0).mul_add(u.tanh(), acc);
                }
            }
            acc
        }
    }
}

/// Runs the attention function over a feature sequence `[feature_dim x T]`,
/// returning the context matrix `[context_dim x T]` and the trace consumed
/// by `attend_backward` and the heatmap exporter.
pub fn attend<T: Scalar>(
    params: &AttentionParams<T>,
    features: &Matrix<T>,
) -> Result<(Matrix<T>, AttentionTrace<T>)> {
    let cfg = &params.config;
    cfg.validate()?;
    if features.rows() != params.feature_dim {
        return Err(Error::Config(format!(
            "attention expects {} feature rows, got {}",
            params.feature_dim,
            features.rows()
        )));
    }
    let frames = features.cols();
    if frames == 0 {
        return Err(Error::Input("attention over an empty sequence".into()));
    }

    let windows: Vec<WindowSpan> = (0..frames)
        .map(|t| WindowSpan::for_frame(t, cfg.left, cfg.right, frames))
        .collect();
    let head_ctx = cfg.head_context_dim(params.feature_dim);
    let mut context = Matrix::zeros(cfg.context_dim(params.feature_dim), frames);
    let mut head_traces = Vec::with_capacity(params.heads.len());

    for (h, head) in params.heads.iter().enumerate() {
        let (keys, queries) = project(head, features);
        let row_base = h * head_ctx;
        let mut scores_by_frame = Vec::with_capacity(frames);
        let mut probs_by_frame = Vec::with_capacity(frames);
        for (t, span) in windows.iter().enumerate() {
            let mut scores = Vec::with_capacity(span.len());
            for tau in span.positions() {
                let rel = tau + cfg.left - t;
                scores.push(slot_score(params, head, &keys, &queries, t, tau, rel));
            }
            let probs = stable_softmax(&scores);
            for (slot, tau) in span.positions().enumerate() {
                let a = probs[slot];
                // value path: c_t += a * f_tau
                for r in 0..params.feature_dim {
                    let slot_ref = context.at_mut(row_base + r, t);
                    *slot_ref = a.mul_add(features.at(r, tau), *slot_ref);
                }
                if cfg.positional_encoding {
                    // one-hot value extension lands the probability itself
                    let rel = tau + cfg.left - t;
                    *context.at_mut(row_base + params.feature_dim + rel, t) = a;
                }
            }
            scores_by_frame.push(scores);
            probs_by_frame.push(probs);
        }
        head_traces.push(HeadTrace {
            keys,
            queries,
            scores: scores_by_frame,
            probs: probs_by_frame,
        });
    }

    Ok((
        context,
        AttentionTrace {
            windows,
            heads: head_traces,
            feature_dim: params.feature_dim,
        },
    ))
}
