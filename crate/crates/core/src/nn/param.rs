use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// A named learnable tensor with its gradient accumulator.
///
/// Gradients accumulate across backward passes within a step (the feature
/// extractor receives contributions from both loss branches) and are zeroed
/// by `sgd_step` after the update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Scalar> ParamBlock<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything holding an ordered set of parameter blocks. The order is part of
/// the contract: checkpoints serialize blocks in exactly this order.
pub trait Parameterized<T: Scalar> {
    fn param_blocks(&self) -> Vec<&ParamBlock<T>>;
    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock<T>>;

    fn zero_grads(&mut self) {
        for block in self.param_blocks_mut() {
            block.zero_grad();
        }
    }

    fn learnable_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }
}

/// One plain SGD step: `value <- value - mu * grad` for every block, grads
/// zeroed afterwards. Aborts without touching any value if a gradient is
/// non-finite.
pub fn sgd_step<T: Scalar, M: Parameterized<T> + ?Sized>(model: &mut M, mu: T) -> Result<()> {
    for block in model.param_blocks() {
        if !block.grad.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient in parameter block {:?}",
                block.name
            )));
        }
    }
    for block in model.param_blocks_mut() {
        block.value.add_scaled(&block.grad, -mu);
        block.zero_grad();
    }
    Ok(())
}

impl<T: Scalar> Parameterized<T> for ParamBlock<T> {
    fn param_blocks(&self) -> Vec<&ParamBlock<T>> {
        vec![self]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock<T>> {
        vec![self]
    }
}
