//! Dense feedforward substrate: layers with manual backprop, softmax
//! cross-entropy, SGD, and the finite-difference gradient oracle.

mod activation;
mod fd;
mod loss;
mod param;
mod stack;

pub use activation::Activation;
pub use fd::{central_diff, finite_diff_grad, max_rel_error, rel_error};
pub use loss::{argmax_accuracy, softmax_columns, softmax_xent, stable_softmax};
pub use param::{sgd_step, ParamBlock, Parameterized};
pub use stack::{FeedForwardStack, ForwardCache, Layer};
