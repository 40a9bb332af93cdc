//! Finite-difference gradient oracle.
//!
//! These estimators are the independent reference every analytic backward
//! pass in the crate is checked against; nothing here shares code with the
//! backward implementations.

use crate::linalg::Matrix;
use crate::nn::param::Parameterized;
use crate::scalar::{scalar, Scalar};

/// Central difference (f(x+h) - f(x-h)) / 2h.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Per-entry central differences of `loss` with respect to every parameter
/// block of `model`, in `param_blocks()` order. `loss` must be deterministic
/// given the parameters.
pub fn finite_diff_grad<T, M, F>(model: &mut M, mut loss: F, h: T) -> Vec<Matrix<T>>
where
    T: Scalar,
    M: Parameterized<T>,
    F: FnMut(&M) -> T,
{
    let shapes: Vec<(usize, usize)> = model
        .param_blocks()
        .iter()
        .map(|b| (b.value.rows(), b.value.cols()))
        .collect();
    let two_h = scalar::<T>(2.0) * h;
    let mut grads: Vec<Matrix<T>> = shapes
        .iter()
        .map(|&(r, c)| Matrix::zeros(r, c))
        .collect();
    for (b, &(rows, cols)) in shapes.iter().enumerate() {
        for i in 0..rows * cols {
            let orig = model.param_blocks()[b].value.data()[i];
            model.param_blocks_mut()[b].value.data_mut()[i] = orig + h;
            let plus = loss(model);
            model.param_blocks_mut()[b].value.data_mut()[i] = orig - h;
            let minus = loss(model);
            model.param_blocks_mut()[b].value.data_mut()[i] = orig;
            grads[b].data_mut()[i] = (plus - minus) / two_h;
        }
    }
    grads
}

/// Relative error with an absolute floor:
/// `|a - b| / max(|a|, |b|, floor)`. The floor keeps near-zero gradients
/// from inflating the ratio with finite-difference roundoff noise.
pub fn rel_error<T: Scalar>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst relative error between two same-shaped gradient matrices.
pub fn max_rel_error<T: Scalar>(analytic: &Matrix<T>, numeric: &Matrix<T>, floor: T) -> T {
    assert!(analytic.same_shape(numeric), "gradient shape mismatch");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(T::zero(), |worst, (&a, &n)| {
            worst.max(rel_error(a, n, floor))
        })
}
