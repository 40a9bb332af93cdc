use crate::linalg::Matrix;
use crate::scalar::{scalar, Scalar};
use crate::{Error, Result};

/// Numerically stable softmax of a score slice (max subtraction). The
/// attention windows reuse this on truncated score vectors.
pub fn stable_softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    assert!(!scores.is_empty(), "softmax of empty slice");
    let max = scores.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut out: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum = out.iter().fold(T::zero(), |a, &b| a + b);
    for v in &mut out {
        *v = *v / sum;
    }
    out
}

/// Column-wise stable softmax of a logits matrix.
pub fn softmax_columns<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for c in 0..logits.cols() {
        let col: Vec<T> = logits.col(c);
        out.set_col(c, &stable_softmax(&col));
    }
    out
}

/// Average cross-entropy over a batch of logit columns with integer labels.
///
/// Returns `(loss, grad_logits)` with
/// `loss = -(1/n) sum_t log softmax(logits[:, t])[label_t]` and
/// `grad = (1/n) (softmax - onehot)`.
pub fn softmax_xent<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    let classes = logits.rows();
    let n = logits.cols();
    if n == 0 {
        return Err(Error::Input("softmax_xent: empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Input(format!(
            "softmax_xent: {} labels for {} frames",
            labels.len(),
            n
        )));
    }
    if let Some((t, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {classes} classes at frame {t}"
        )));
    }

    let inv_n = T::one() / scalar::<T>(n as f64);
    let mut grad = Matrix::zeros(classes, n);
    let mut loss = T::zero();
    for t in 0..n {
        let col = logits.col(t);
        let max = col.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        for &v in &col {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += log_sum - col[labels[t]];
        for k in 0..classes {
            let p = (col[k] - max).exp() / sum;
            let indicator = if k == labels[t] { T::one() } else { T::zero() };
            *grad.at_mut(k, t) = (p - indicator) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Fraction of columns whose argmax equals the label. Ties resolve to the
/// lowest index.
pub fn argmax_accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> f64 {
    assert_eq!(logits.cols(), labels.len(), "argmax_accuracy label count");
    let mut correct = 0usize;
    for (t, &label) in labels.iter().enumerate() {
        let mut best = 0usize;
        let mut best_v = logits.at(0, t);
        for k in 1..logits.rows() {
            let v = logits.at(k, t);
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}
