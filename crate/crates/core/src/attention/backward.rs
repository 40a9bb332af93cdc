use crate::attention::{AttentionParams, AttentionTrace, ScoreType};
use crate::linalg::Matrix;
use crate::scalar::{scalar, Scalar};
use crate::{Error, Result};

/// Exact backward pass of [`attend`](crate::attention::attend).
///
/// Accumulates gradients into the attention parameter blocks and returns the
/// gradient with respect to the feature sequence. The trace must come from
/// a forward call on the same `(params, features)` pair.
pub fn attend_backward<T: Scalar>(
    params: &mut AttentionParams<T>,
    features: &Matrix<T>,
    trace: &AttentionTrace<T>,
    grad_context: &Matrix<T>,
) -> Result<Matrix<T>> {
    let cfg = params.config;
    let frames = features.cols();
    let feature_dim = params.feature_dim;
    if features.rows() != feature_dim {
        return Err(Error::Config(format!(
            "attention expects {} feature rows, got {}",
            feature_dim,
            features.rows()
        )));
    }
    if trace.frames() != frames
        || trace.feature_dim != feature_dim
        || trace.heads.len() != params.heads.len()
        || trace.heads.iter().any(|h| {
            h.keys.rows() != cfg.head_dim()
                || h.keys.cols() != frames
                || h.probs.len() != frames
        })
    {
        return Err(Error::Internal(
            "attention trace does not match the forward call".into(),
        ));
    }
    let head_ctx = cfg.head_context_dim(feature_dim);
    if grad_context.rows() != cfg.context_dim(feature_dim) || grad_context.cols() != frames {
        return Err(Error::Internal(format!(
            "grad_context is {}x{}, expected {}x{}",
            grad_context.rows(),
            grad_context.cols(),
            cfg.context_dim(feature_dim),
            frames
        )));
    }

    let mut grad_features = Matrix::zeros(feature_dim, frames);
    let dot_scale = T::one() / scalar::<T>(cfg.extended_dim() as f64).sqrt();
    let head_dim = cfg.head_dim();

    for (h, head) in params.heads.iter_mut().enumerate() {
        let ht = &trace.heads[h];
        let row_base = h * head_ctx;
        let mut d_keys = Matrix::zeros(head_dim, frames);
        let mut d_queries = Matrix::zeros(head_dim, frames);

        for (t, span) in trace.windows.iter().enumerate() {
            let probs = &ht.probs[t];
            let slots = span.len();

            // dL/da per slot: value path plus the one-hot value extension
            let mut d_probs = vec![T::zero(); slots];
            for (slot, tau) in span.positions().enumerate() {
                let mut acc = T::zero();
                for i in 0..feature_dim {
                    acc = grad_context
                        .at(row_base + i, t)
                        .mul_add(features.at(i, tau), acc);
                }
                if cfg.positional_encoding {
                    let rel = tau + cfg.left - t;
                    acc += grad_context.at(row_base + feature_dim + rel, t);
                }
                d_probs[slot] = acc;
                // input gradient through the value path
                for i in 0..feature_dim {
                    let g = grad_features.at_mut(i, tau);
                    *g = probs[slot].mul_add(grad_context.at(row_base + i, t), *g);
                }
            }

            // softmax Jacobian over the truncated window:
            // de_j = a_j (da_j - sum_k a_k da_k)
            let mut inner = T::zero();
            for slot in 0..slots {
                inner = probs[slot].mul_add(d_probs[slot], inner);
            }
            for (slot, tau) in span.positions().enumerate() {
                let d_score = probs[slot] * (d_probs[slot] - inner);
                match cfg.score {
                    ScoreType::DotProduct => {
                        let ds = d_score * dot_scale;
                        for j in 0..head_dim {
                            let dk = d_keys.at_mut(j, tau);
                            *dk = ds.mul_add(ht.queries.at(j, t), *dk);
                            let dq = d_queries.at_mut(j, t);
                            *dq = ds.mul_add(ht.keys.at(j, tau), *dq);
                        }
                        if let Some(p) = &mut head.pos_bias {
                            let rel = tau + cfg.left - t;
                            *p.grad.at_mut(rel, 0) += ds;
                        }
                    }
                    ScoreType::Additive => {
                        let gate = head.gate.as_mut().expect("additive head has gate");
                        let bias = head.bias.as_mut().expect("additive head has bias");
                        for j in 0..head_dim {
                            let u = ht.keys.at(j, tau) + ht.queries.at(j, t)
                                + bias.value.at(j, 0);
                            let th = u.tanh();
                            *gate.grad.at_mut(j, 0) += d_score * th;
                            let du = d_score * gate.value.at(j, 0) * (T::one() - th * th);
                            *bias.grad.at_mut(j, 0) += du;
                            *d_keys.at_mut(j, tau) += du;
                            *d_queries.at_mut(j, t) += du;
                        }
                        if let Some(p) = &mut head.pos_bias {
                            let rel = tau + cfg.left - t;
                            for r in 0..cfg.window_len() {
                                let onehot = if r == rel { T::one() } else { T::zero() };
                                let u = onehot + p.value.at(r, 0) + bias.value.at(head_dim + r, 0);
                                let th = u.tanh();
                                *gate.grad.at_mut(head_dim + r, 0) += d_score * th;
                                let du =
                                    d_score * gate.value.at(head_dim + r, 0) * (T::one() - th * th);
                                *bias.grad.at_mut(head_dim + r, 0) += du;
                                *p.grad.at_mut(r, 0) += du;
                            }
                        }
                    }
                }
            }
        }

        head.w_key.grad.add_assign(&d_keys.matmul_nt(features));
        head.w_query.grad.add_assign(&d_queries.matmul_nt(features));
        grad_features.add_assign(&head.w_key.value.matmul_tn(&d_keys));
        grad_features.add_assign(&head.w_query.value.matmul_tn(&d_queries));
    }

    Ok(grad_features)
}
