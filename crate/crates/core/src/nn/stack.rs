use rand::Rng;

use crate::linalg::Matrix;
use crate::nn::activation::Activation;
use crate::nn::param::{ParamBlock, Parameterized};
use crate::scalar::{scalar, Scalar};
use crate::{Error, Result};

/// One dense layer: `y = act(W x + b)` with `W: [out x in]`, `b: [out x 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: ParamBlock<T>,
    pub bias: ParamBlock<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: ParamBlock<T>, bias: ParamBlock<T>, activation: Activation) -> Self {
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.value.rows()
    }
}

/// A chain of dense layers processing a whole minibatch (one frame per
/// column) at a time. Realizes the feature extractor, the class head and
/// the domain head.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardStack<T> {
    layers: Vec<Layer<T>>,
    input_dim: usize,
    output_dim: usize,
}

/// Per-layer activations captured by `forward` for the matching `backward`.
/// `layer_io[0]` is the input batch, `layer_io[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layer_io: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.layer_io[0].cols()
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.layer_io[0]
    }

    pub fn output(&self) -> &Matrix<T> {
        self.layer_io.last().expect("cache never empty")
    }
}

impl<T: Scalar> FeedForwardStack<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("stack needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer {} outputs {} units but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let input_dim = layers[0].in_dim();
        let output_dim = layers.last().unwrap().out_dim();
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    /// Xavier-initialized stack: weights uniform in [-s, s] with
    /// s = sqrt(6 / (fan_in + fan_out)), biases zero. `dims` chains layer
    /// sizes; `activations` has one entry per layer.
    pub fn new(
        prefix: &str,
        dims: &[usize],
        activations: &[Activation],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "stack {prefix:?} needs at least input and output dims"
            )));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "stack {prefix:?}: {} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("stack {prefix:?}: zero-sized layer")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Matrix::from_fn(fan_out, fan_in, |_, _| {
                scalar::<T>(-limit + 2.0 * limit * rng.random::<f64>())
            });
            layers.push(Layer::new(
                ParamBlock::new(format!("{prefix}.{i}.w"), weights),
                ParamBlock::new(format!("{prefix}.{i}.b"), Matrix::zeros(fan_out, 1)),
                activations[i],
            ));
        }
        Self::from_layers(layers)
    }

    /// All-tanh stack (the feature extractor).
    pub fn tanh_stack(prefix: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Self::new(prefix, dims, &vec![Activation::Tanh; dims.len() - 1], rng)
    }

    /// Tanh hidden layers with an identity final layer emitting logits
    /// (class and domain heads; the softmax lives in the loss).
    pub fn classifier(prefix: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut acts = vec![Activation::Tanh; dims.len() - 1];
        *acts.last_mut().expect("validated below") = Activation::Identity;
        Self::new(prefix, dims, &acts, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Forward pass over a batch `[input_dim x n]`, returning the output and
    /// the cache consumed by `backward`.
    pub fn forward(&self, input: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if input.rows() != self.input_dim {
            let name = &self.layers[0].weights.name;
            return Err(Error::Config(format!(
                "layer {name:?} expects {} input rows, got {}",
                self.input_dim,
                input.rows()
            )));
        }
        let n = input.cols();
        let mut layer_io = Vec::with_capacity(self.layers.len() + 1);
        layer_io.push(input.clone());
        for layer in &self.layers {
            let x = layer_io.last().unwrap();
            let mut z = layer.weights.value.matmul(x);
            for r in 0..z.rows() {
                let b = layer.bias.value.at(r, 0);
                for c in 0..n {
                    let v = z.at_mut(r, c);
                    *v = layer.activation.apply(*v + b);
                }
            }
            layer_io.push(z);
        }
        let output = layer_io.last().unwrap().clone();
        Ok((output, ForwardCache { layer_io }))
    }

    /// Backward pass: accumulates parameter gradients (scaled by nothing;
    /// callers own any loss normalization) and returns the gradient with
    /// respect to the stack input.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_output: &Matrix<T>) -> Result<Matrix<T>> {
        if cache.layer_io.len() != self.layers.len() + 1 {
            return Err(Error::Internal(format!(
                "cache depth {} does not match stack depth {}",
                cache.layer_io.len() - 1,
                self.layers.len()
            )));
        }
        let out = cache.output();
        if grad_output.rows() != out.rows() || grad_output.cols() != out.cols() {
            return Err(Error::Internal(format!(
                "grad_output is {}x{}, cached output is {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grad = grad_output.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let y = &cache.layer_io[i + 1];
            let x = &cache.layer_io[i];
            // dZ = dY .* act'(Y)
            for r in 0..grad.rows() {
                for c in 0..grad.cols() {
                    let v = grad.at_mut(r, c);
                    *v = *v * layer.activation.grad_from_output(y.at(r, c));
                }
            }
            layer.weights.grad.add_assign(&grad.matmul_nt(x));
            for (r, s) in grad.row_sums().into_iter().enumerate() {
                *layer.bias.grad.at_mut(r, 0) += s;
            }
            grad = layer.weights.value.matmul_tn(&grad);
        }
        Ok(grad)
    }
}

impl<T: Scalar> Parameterized<T> for FeedForwardStack<T> {
    fn param_blocks(&self) -> Vec<&ParamBlock<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut ParamBlock<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}
