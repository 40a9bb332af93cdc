use crate::scalar::Scalar;

/// Element-wise layer activation. Hidden layers use `Tanh`; heads that feed
/// a softmax loss end in `Identity` so the loss sees raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = act(z)`:
    /// tanh' = 1 - y^2, identity' = 1.
    #[inline]
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}
