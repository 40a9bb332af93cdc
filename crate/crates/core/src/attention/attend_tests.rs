//! Forward/backward tests for the attention block. The derived expectations
//! come from straight-line re-implementations in this file, not from the
//! kernels under test.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    attend, attend_backward, param_count, project, AttentionConfig, AttentionParams, ScoreType,
};
use crate::linalg::Matrix;
use crate::nn::{max_rel_error, stable_softmax, Parameterized};

fn cfg(
    left: usize,
    right: usize,
    key_dim: usize,
    score: ScoreType,
    heads: usize,
    pe: bool,
) -> AttentionConfig {
    AttentionConfig {
        left,
        right,
        key_dim,
        score,
        heads,
        positional_encoding: pe,
    }
}

fn random_features(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5)
}

#[test]
fn projection_with_identity_and_zero_matrices() {
    let c = cfg(1, 1, 2, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = AttentionParams::<f64>::init(c, 2, &mut rng).unwrap();
    params.heads[0].w_key.value = Matrix::identity(2);
    params.heads[0].w_query.value = Matrix::zeros(2, 2);
    let f = Matrix::column(&[0.3, -0.2]);
    let (k, q) = project(&params.heads[0], &f);
    assert_eq!(k.data(), &[0.3, -0.2]);
    assert!(q.data().iter().all(|&v| v == 0.0));
}

#[test]
fn projection_matches_straight_line_matvec() {
    let c = cfg(1, 1, 3, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = AttentionParams::<f64>::init(c, 4, &mut rng).unwrap();
    let f = random_features(4, 1, 7);
    let (k, _) = project(&params.heads[0], &f);
    let w = &params.heads[0].w_key.value;
    for j in 0..3 {
        let mut acc = 0.0;
        for i in 0..4 {
            acc += w.at(j, i) * f.at(i, 0);
        }
        assert!((k.at(j, 0) - acc).abs() < 1e-14);
    }
}

#[test]
fn singleton_window_is_the_identity_on_features() {
    let c = cfg(0, 0, 4, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let f = random_features(3, 6, 3);
    let (ctx, trace) = attend(&params, &f).unwrap();
    assert_eq!(ctx, f);
    for t in 0..6 {
        assert_eq!(trace.heads[0].probs[t], vec![1.0]);
    }
}

#[test]
fn singleton_window_backward_passes_grad_through_and_zeroes_param_grads() {
    let c = cfg(0, 0, 4, ScoreType::Additive, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let f = random_features(3, 5, 5);
    let (_, trace) = attend(&params, &f).unwrap();
    let grad_ctx = random_features(3, 5, 6);
    let grad_f = attend_backward(&mut params, &f, &trace, &grad_ctx).unwrap();
    assert_eq!(grad_f.data(), grad_ctx.data());
    for block in params.param_blocks() {
        assert!(
            block.grad.data().iter().all(|&v| v == 0.0),
            "{} gradient must be exactly zero for a singleton softmax",
            block.name
        );
    }
}

#[test]
fn zero_grad_context_produces_zero_gradients() {
    let c = cfg(2, 2, 8, ScoreType::Additive, 2, true);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut params = AttentionParams::<f64>::init(c, 4, &mut rng).unwrap();
    let f = random_features(4, 7, 9);
    let (ctx, trace) = attend(&params, &f).unwrap();
    let grad_f = attend_backward(
        &mut params,
        &f,
        &trace,
        &Matrix::zeros(ctx.rows(), ctx.cols()),
    )
    .unwrap();
    assert!(grad_f.data().iter().all(|&v| v == 0.0));
    for block in params.param_blocks() {
        assert!(block.grad.data().iter().all(|&v| v == 0.0));
    }
}

/// Additive scoring with g = 0 makes every score zero, so each context
/// vector must equal the arithmetic mean of its window.
#[test]
fn zero_gate_yields_window_means() {
    let c = cfg(1, 1, 4, ScoreType::Additive, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    params.heads[0].gate.as_mut().unwrap().value.fill(0.0);
    let f = random_features(3, 5, 11);
    let (ctx, _) = attend(&params, &f).unwrap();
    // interior frame t=2: mean of frames 1..=3
    for r in 0..3 {
        let mean = (f.at(r, 1) + f.at(r, 2) + f.at(r, 3)) / 3.0;
        assert!((ctx.at(r, 2) - mean).abs() < 1e-12);
    }
    // truncated boundary frame t=0: mean of frames 0..=1
    for r in 0..3 {
        let mean = (f.at(r, 0) + f.at(r, 1)) / 2.0;
        assert!((ctx.at(r, 0) - mean).abs() < 1e-12);
    }
}

/// Scores (0, ln 2) over a two-frame truncated window must give
/// probabilities (1/3, 2/3). Constructed with one-dimensional dot scoring:
/// f = (0, 1), w_k = ln 2, w_q = 1 makes e_{1,0} = 0 and e_{1,1} = ln 2.
#[test]
fn softmax_arithmetic_on_truncated_boundary_window() {
    let c = cfg(1, 0, 1, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut params = AttentionParams::<f64>::init(c, 1, &mut rng).unwrap();
    params.heads[0].w_key.value = Matrix::column(&[2.0f64.ln()]);
    params.heads[0].w_query.value = Matrix::column(&[1.0]);
    let f = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
    let (_, trace) = attend(&params, &f).unwrap();
    let probs = &trace.heads[0].probs[1];
    assert!((probs[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((probs[1] - 2.0 / 3.0).abs() < 1e-12);
}

/// Brute-force oracle for the full forward pass: materializes every score,
/// exponentiates, normalizes and sums with plain loops.
#[test]
fn forward_matches_brute_force_window_recomputation() {
    let c = cfg(2, 2, 8, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let params = AttentionParams::<f64>::init(c, 5, &mut rng).unwrap();
    let f = random_features(5, 9, 15);
    let (ctx, _) = attend(&params, &f).unwrap();

    let wk = &params.heads[0].w_key.value;
    let wq = &params.heads[0].w_query.value;
    let frames = 9usize;
    for t in 0..frames {
        let lo = t.saturating_sub(2);
        let hi = (t + 2).min(frames - 1);
        let mut exps = Vec::new();
        for tau in lo..=hi {
            let mut dot = 0.0;
            for j in 0..8 {
                let mut k = 0.0;
                let mut q = 0.0;
                for i in 0..5 {
                    k += wk.at(j, i) * f.at(i, tau);
                    q += wq.at(j, i) * f.at(i, t);
                }
                dot += k * q;
            }
            exps.push((dot / 8.0f64.sqrt()).exp());
        }
        let total: f64 = exps.iter().sum();
        for r in 0..5 {
            let mut expected = 0.0;
            for (idx, tau) in (lo..=hi).enumerate() {
                expected += exps[idx] / total * f.at(r, tau);
            }
            assert!(
                (ctx.at(r, t) - expected).abs() < 1e-12,
                "frame {t} row {r}: {} vs {expected}",
                ctx.at(r, t)
            );
        }
    }
}

/// Positional encoding: the context gains a block that holds the attention
/// probabilities at the relative positions, and the dot score gains
/// p[rel] / sqrt(extended_dim).
#[test]
fn positional_encoding_extends_values_and_scores() {
    let c = cfg(1, 1, 4, ScoreType::DotProduct, 1, true);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let pos = params.heads[0].pos_bias.as_mut().unwrap();
    pos.value = Matrix::column(&[0.5, -0.3, 0.8]);
    let f = random_features(3, 6, 17);
    let (ctx, trace) = attend(&params, &f).unwrap();
    assert_eq!(ctx.rows(), 3 + 3);
    // the PE block of frame t replays the probabilities by relative position
    for t in 1..5 {
        let probs = &trace.heads[0].probs[t];
        for slot in 0..3 {
            assert_eq!(ctx.at(3 + slot, t), probs[slot]);
        }
    }
    // score includes p[rel] inside the sqrt(extended) scaling
    let wk = &params.heads[0].w_key.value;
    let wq = &params.heads[0].w_query.value;
    let t = 2usize;
    let tau = 1usize;
    let mut dot = 0.0;
    for j in 0..4 {
        let mut k = 0.0;
        let mut q = 0.0;
        for i in 0..3 {
            k += wk.at(j, i) * f.at(i, tau);
            q += wq.at(j, i) * f.at(i, t);
        }
        dot += k * q;
    }
    let expected = (dot + 0.5) / 7.0f64.sqrt();
    assert!((trace.heads[0].scores[t][0] - expected).abs() < 1e-12);
}

#[test]
fn multi_head_contexts_are_concatenated() {
    let c = cfg(1, 1, 8, ScoreType::DotProduct, 2, false);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let f = random_features(3, 5, 19);
    let (ctx, trace) = attend(&params, &f).unwrap();
    assert_eq!(ctx.rows(), 6);
    assert_eq!(trace.heads.len(), 2);
    // head 1's block recomputed from its own probabilities
    for t in 0..5 {
        let span = trace.windows[t];
        for r in 0..3 {
            let mut expected = 0.0;
            for (slot, tau) in span.positions().enumerate() {
                expected += trace.heads[1].probs[t][slot] * f.at(r, tau);
            }
            assert!((ctx.at(3 + r, t) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn empty_sequence_is_an_input_error() {
    let c = cfg(1, 1, 4, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let err = attend(&params, &Matrix::zeros(3, 0)).unwrap_err();
    assert!(matches!(err, crate::Error::Input(_)));
}

#[test]
fn stale_trace_is_an_internal_error() {
    let c = cfg(1, 1, 4, ScoreType::DotProduct, 1, false);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
    let f = random_features(3, 5, 23);
    let (ctx, trace) = attend(&params, &f).unwrap();
    let shorter = f.cols_range(0, 4);
    let err = attend_backward(&mut params, &shorter, &trace, &ctx).unwrap_err();
    assert!(matches!(err, crate::Error::Internal(_)));
}

/// Finite-difference check across every (score, heads, positional encoding)
/// combination: parameter gradients and feature gradients of a quadratic
/// functional of the context.
#[test]
fn backward_matches_finite_differences_for_all_configurations() {
    let feature_dim = 4;
    let frames = 7;
    for score in [ScoreType::DotProduct, ScoreType::Additive] {
        for heads in [1usize, 4] {
            for pe in [false, true] {
                let c = cfg(2, 2, 8, score, heads, pe);
                let mut rng = ChaCha8Rng::seed_from_u64(31);
                let mut params = AttentionParams::<f64>::init(c, feature_dim, &mut rng).unwrap();
                let f = random_features(feature_dim, frames, 32);

                let loss = |p: &AttentionParams<f64>, feats: &Matrix<f64>| {
                    let (ctx, _) = attend(p, feats).unwrap();
                    ctx.data().iter().map(|v| v * v).sum::<f64>()
                };

                let (ctx, trace) = attend(&params, &f).unwrap();
                let grad_ctx = ctx.scaled(2.0);
                params.zero_grads();
                let grad_f = attend_backward(&mut params, &f, &trace, &grad_ctx).unwrap();

                let analytic: Vec<Matrix<f64>> =
                    params.param_blocks().iter().map(|b| b.grad.clone()).collect();
                let names: Vec<String> = params
                    .param_blocks()
                    .iter()
                    .map(|b| b.name.clone())
                    .collect();
                let numeric = crate::nn::finite_diff_grad(
                    &mut params,
                    |p: &AttentionParams<f64>| loss(p, &f),
                    1e-5,
                );
                for ((a, n), name) in analytic.iter().zip(&numeric).zip(&names) {
                    let err = max_rel_error(a, n, 1e-6);
                    assert!(
                        err < 1e-4,
                        "{score} H={heads} pe={pe} block {name}: rel err {err}"
                    );
                }

                // feature gradient by direct perturbation
                let mut f_mut = f.clone();
                let h = 1e-5;
                for i in 0..f_mut.len() {
                    let orig = f_mut.data()[i];
                    f_mut.data_mut()[i] = orig + h;
                    let plus = loss(&params, &f_mut);
                    f_mut.data_mut()[i] = orig - h;
                    let minus = loss(&params, &f_mut);
                    f_mut.data_mut()[i] = orig;
                    let numeric = (plus - minus) / (2.0 * h);
                    let err = crate::nn::rel_error(grad_f.data()[i], numeric, 1e-6);
                    assert!(
                        err < 1e-4,
                        "{score} H={heads} pe={pe} grad_F[{i}]: rel err {err}"
                    );
                }
            }
        }
    }
}

#[test]
fn multi_head_keeps_dot_product_param_count() {
    let mut c = cfg(10, 10, 512, ScoreType::DotProduct, 1, false);
    let single = param_count(&c, 64);
    c.heads = 8;
    assert_eq!(param_count(&c, 64), single);
}

proptest! {
    /// Attention probabilities are a distribution per frame, including
    /// truncated boundary windows.
    #[test]
    fn probabilities_form_distributions(
        seed in 0u64..200,
        frames in 1usize..9,
        left in 0usize..4,
        right in 0usize..4,
        heads in prop::sample::select(vec![1usize, 2]),
        additive in proptest::bool::ANY,
        pe in proptest::bool::ANY,
    ) {
        let score = if additive { ScoreType::Additive } else { ScoreType::DotProduct };
        let c = cfg(left, right, 8, score, heads, pe);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = AttentionParams::<f64>::init(c, 3, &mut rng).unwrap();
        let f = random_features(3, frames, seed.wrapping_add(99));
        let (_, trace) = attend(&params, &f).unwrap();
        for t in 0..frames {
            let span = trace.windows[t];
            prop_assert_eq!(span.lo, t.saturating_sub(left));
            prop_assert_eq!(span.hi, (t + right).min(frames - 1));
            for head in &trace.heads {
                let probs = &head.probs[t];
                prop_assert_eq!(probs.len(), span.len());
                prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
                let sum: f64 = probs.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    /// Adding a constant to every score in a window leaves the softmax
    /// unchanged within 1e-12.
    #[test]
    fn window_softmax_is_translation_invariant(
        shift in -200.0f64..200.0,
        seed in 0u64..200,
        slots in 1usize..8,
    ) {
        let scores: Vec<f64> = (0..slots)
            .map(|i| (((seed as usize + i) as f64) * 0.77).sin() * 5.0)
            .collect();
        let base = stable_softmax(&scores);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let moved = stable_softmax(&shifted);
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
