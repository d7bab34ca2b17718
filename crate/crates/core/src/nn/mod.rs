//! Feed-forward network substrate: dense layers, activations, manual
//! backpropagation and optimizers. Everything is f64; batches are row-major
//! `(examples, features)` matrices.

mod gradcheck;
mod optim;
mod persist;

pub use gradcheck::{grad_check, min_abs_preactivation, rel_err, MseTarget, ScalarLoss};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use persist::{load_mlp, mlp_from_json, mlp_to_json, save_mlp, FORMAT_VERSION};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in input batch")]
    NonFiniteInput,
    #[error("backward called without a matching forward (stale cache)")]
    StaleCache,
    #[error("model container error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    LeakyRelu,
    Identity,
}

pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Identity => "identity",
        };
        write!(f, "{tag}")
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "leaky_relu" | "leakyRelu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
}

/// Fully connected layer: `out = activation(x W^T + b)` with
/// `weights: (out_dim, in_dim)` and `biases: (out_dim)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
    cache: Option<LayerCache>,
}

/// Gradients for one layer, shaped exactly like its parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Array2<f64>,
    pub d_biases: Array1<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound));
        DenseLayer {
            weights,
            biases: Array1::zeros(out_dim),
            activation,
            cache: None,
        }
    }

    pub fn from_parts(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Self {
        assert_eq!(weights.nrows(), biases.len(), "bias length must equal out_dim");
        DenseLayer {
            weights,
            biases,
            activation,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn affine(&self, input: &Array2<f64>) -> Array2<f64> {
        input.dot(&self.weights.t()) + &self.biases
    }

    fn forward(&mut self, input: &Array2<f64>) -> Array2<f64> {
        let pre = self.affine(input);
        let out = pre.mapv(|v| self.activation.apply(v));
        self.cache = Some(LayerCache {
            input: input.clone(),
            pre_activation: pre,
        });
        out
    }

    fn forward_inference(&self, input: &Array2<f64>) -> Array2<f64> {
        self.affine(input).mapv(|v| self.activation.apply(v))
    }

    fn backward(&mut self, upstream: &Array2<f64>) -> Result<(LayerGrads, Array2<f64>), NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        if upstream.dim() != cache.pre_activation.dim() {
            return Err(NnError::ShapeMismatch(format!(
                "upstream gradient is {:?}, cached activations are {:?}",
                upstream.dim(),
                cache.pre_activation.dim()
            )));
        }
        let mut d_pre = cache.pre_activation;
        d_pre.zip_mut_with(upstream, |pre, &up| *pre = up * self.activation.derivative(*pre));
        let d_weights = d_pre.t().dot(&cache.input);
        let d_biases = d_pre.sum_axis(Axis(0));
        let d_input = d_pre.dot(&self.weights);
        Ok((
            LayerGrads {
                d_weights,
                d_biases,
            },
            d_input,
        ))
    }
}

/// A stack of dense layers trained with reverse-mode backpropagation.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(
                pair[0].out_dim(),
                pair[1].in_dim(),
                "adjacent layer dims must agree"
            );
        }
        Mlp { layers }
    }

    /// Glorot-initialized stack over `dims = [in, h1, ..., out]`. Hidden
    /// layers use `hidden`, the final layer uses `last`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let act = if i + 2 == dims.len() { last } else { hidden };
            layers.push(DenseLayer::glorot(pair[0], pair[1], act, rng));
        }
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, input: &Array2<f64>) -> Result<(), NnError> {
        if input.ncols() != self.in_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "input has {} columns, first layer expects {}",
                input.ncols(),
                self.in_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        Ok(())
    }

    /// Forward pass that caches per-layer intermediates for `backward`.
    pub fn forward(&mut self, input: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input)?;
        let mut current = input.clone();
        for layer in &mut self.layers {
            current = layer.forward(&current);
        }
        Ok(current)
    }

    /// Cache-free forward pass for frozen models.
    pub fn forward_inference(&self, input: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input)?;
        let mut current = input.clone();
        for layer in &self.layers {
            current = layer.forward_inference(&current);
        }
        Ok(current)
    }

    /// Reverse-mode pass. Returns per-layer gradients (in layer order) and
    /// the gradient with respect to the stack input. Parameters are not
    /// mutated; caches are consumed.
    pub fn backward(
        &mut self,
        loss_gradient: &Array2<f64>,
    ) -> Result<(Vec<LayerGrads>, Array2<f64>), NnError> {
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = loss_gradient.clone();
        for (idx, layer) in self.layers.iter_mut().enumerate().rev() {
            let (g, d_input) = layer.backward(&upstream)?;
            grads[idx] = Some(g);
            upstream = d_input;
        }
        let grads = grads.into_iter().map(Option::unwrap).collect();
        Ok((grads, upstream))
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(dim: usize) -> DenseLayer {
        DenseLayer::from_parts(Array2::eye(dim), Array1::zeros(dim), Activation::Identity)
    }

    #[test]
    fn identity_stack_passes_input_through() {
        let mut mlp = Mlp::new(vec![identity_layer(3)]);
        let x = array![[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]];
        let y = mlp.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        let layer = DenseLayer::from_parts(
            array![[1.0, -1.0]],
            Array1::zeros(1),
            Activation::Relu,
        );
        let mut mlp = Mlp::new(vec![layer]);
        let y = mlp.forward(&array![[2.0, 3.0]]).unwrap();
        assert_eq!(y, array![[0.0]]);
    }

    #[test]
    fn forward_matches_straight_line_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut mlp = Mlp::glorot(&[4, 6, 5, 3], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Array2::from_shape_fn((7, 4), |_| rng.random_range(-1.0..1.0));
        let got = mlp.forward(&x).unwrap();

        // Straight-line re-evaluation with explicit loops.
        let mut rows = Vec::new();
        for r in 0..x.nrows() {
            let mut current: Vec<f64> = x.row(r).to_vec();
            for layer in mlp.layers() {
                let mut next = vec![0.0; layer.out_dim()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = layer.biases[o];
                    for (i, &v) in current.iter().enumerate() {
                        acc += layer.weights[(o, i)] * v;
                    }
                    *slot = layer.activation.apply(acc);
                }
                current = next;
            }
            rows.push(current);
        }
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_abs_diff_eq!(got[(r, c)], v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut mlp = Mlp::new(vec![identity_layer(3)]);
        let err = mlp.forward(&array![[1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch(_)));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut mlp = Mlp::new(vec![identity_layer(2)]);
        let err = mlp.forward(&array![[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteInput));
    }

    #[test]
    fn linear_layer_gradients_are_input_and_one() {
        // Scalar w·x with upstream gradient 1: dL/dw = x, dL/db = 1.
        let layer = DenseLayer::from_parts(array![[0.7]], Array1::zeros(1), Activation::Identity);
        let mut mlp = Mlp::new(vec![layer]);
        let x = array![[3.25]];
        mlp.forward(&x).unwrap();
        let (grads, _) = mlp.backward(&array![[1.0]]).unwrap();
        assert_abs_diff_eq!(grads[0].d_weights[(0, 0)], 3.25, epsilon = 1e-15);
        assert_abs_diff_eq!(grads[0].d_biases[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tanh_derivative_at_zero_preactivation_is_one() {
        let layer = DenseLayer::from_parts(array![[1.0]], Array1::zeros(1), Activation::Tanh);
        let mut mlp = Mlp::new(vec![layer]);
        mlp.forward(&array![[0.0]]).unwrap();
        let (grads, _) = mlp.backward(&array![[1.0]]).unwrap();
        // d(tanh)/dpre at 0 is exactly 1, so dL/dw = 1 * x = 0 and dL/db = 1.
        assert_abs_diff_eq!(grads[0].d_biases[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn backward_without_forward_is_stale() {
        let mut mlp = Mlp::new(vec![identity_layer(2)]);
        let err = mlp.backward(&array![[1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, NnError::StaleCache));
    }

    #[test]
    fn backward_does_not_mutate_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mlp = Mlp::glorot(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let before = mlp.clone();
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        mlp.forward(&x).unwrap();
        mlp.backward(&Array2::ones((5, 2))).unwrap();
        for (a, b) in mlp.layers().iter().zip(before.layers()) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
    }
}
