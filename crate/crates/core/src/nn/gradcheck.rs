//! Central-difference gradient verification for layer stacks.

use super::{Mlp, NnError};
use ndarray::Array2;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-8;

/// A scalar loss over the network output, with its analytic gradient.
pub trait ScalarLoss {
    fn value(&self, output: &Array2<f64>) -> f64;
    fn grad(&self, output: &Array2<f64>) -> Array2<f64>;
}

/// Mean squared error against a fixed target, averaged over all elements.
pub struct MseTarget(pub Array2<f64>);

impl ScalarLoss for MseTarget {
    fn value(&self, output: &Array2<f64>) -> f64 {
        let diff = output - &self.0;
        diff.iter().map(|d| d * d).sum::<f64>() / output.len() as f64
    }

    fn grad(&self, output: &Array2<f64>) -> Array2<f64> {
        (output - &self.0) * (2.0 / output.len() as f64)
    }
}

/// Compares backpropagated gradients against central finite differences
/// (h = 1e-5) and returns the worst relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// Intended for desk-scale stacks (parameter count around 1e4 or less);
/// cost is two inference passes per parameter.
pub fn grad_check<L: ScalarLoss>(
    mlp: &mut Mlp,
    input: &Array2<f64>,
    loss: &L,
) -> Result<f64, NnError> {
    let output = mlp.forward(input)?;
    let upstream = loss.grad(&output);
    let (analytic, _) = mlp.backward(&upstream)?;

    let mut worst = 0.0_f64;
    for layer_idx in 0..mlp.layers().len() {
        let (rows, cols) = mlp.layers()[layer_idx].weights.dim();
        for r in 0..rows {
            for c in 0..cols {
                let numeric = {
                    let probe = |mlp: &mut Mlp, delta: f64| -> Result<f64, NnError> {
                        mlp.layers_mut()[layer_idx].weights[(r, c)] += delta;
                        let v = loss.value(&mlp.forward_inference(input)?);
                        mlp.layers_mut()[layer_idx].weights[(r, c)] -= delta;
                        Ok(v)
                    };
                    (probe(mlp, STEP)? - probe(mlp, -STEP)?) / (2.0 * STEP)
                };
                worst = worst.max(rel_err(analytic[layer_idx].d_weights[(r, c)], numeric));
            }
        }
        for b in 0..mlp.layers()[layer_idx].biases.len() {
            let numeric = {
                let probe = |mlp: &mut Mlp, delta: f64| -> Result<f64, NnError> {
                    mlp.layers_mut()[layer_idx].biases[b] += delta;
                    let v = loss.value(&mlp.forward_inference(input)?);
                    mlp.layers_mut()[layer_idx].biases[b] -= delta;
                    Ok(v)
                };
                (probe(mlp, STEP)? - probe(mlp, -STEP)?) / (2.0 * STEP)
            };
            worst = worst.max(rel_err(analytic[layer_idx].d_biases[b], numeric));
        }
    }
    Ok(worst)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Smallest |pre-activation| across all layers for `input`.
///
/// Central differences are only meaningful where the network is
/// differentiable; relu/leaky-relu kink crossings inside the probe step make
/// the comparison ill-posed. Callers re-draw a test point until this margin
/// comfortably exceeds the probe step.
pub fn min_abs_preactivation(mlp: &Mlp, input: &Array2<f64>) -> Result<f64, NnError> {
    let mut current = input.clone();
    let mut margin = f64::INFINITY;
    for layer in mlp.layers() {
        let pre = current.dot(&layer.weights.t()) + &layer.biases;
        for &p in pre.iter() {
            margin = margin.min(p.abs());
        }
        current = pre.mapv(|v| layer.activation.apply(v));
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Optimizer, OptimizerKind};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_network_has_zero_error() {
        let mut mlp = Mlp::new(vec![DenseLayer::from_parts(
            Array2::eye(3),
            Array1::zeros(3),
            Activation::Identity,
        )]);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let loss = MseTarget(Array2::zeros((4, 3)));
        let err = grad_check(&mut mlp, &x, &loss).unwrap();
        assert!(err < 1e-8, "identity stack error {err}");
    }

    #[test]
    fn random_stacks_pass_gradient_check() {
        // Depths 2..=7, every activation, 20 cases. Draws are re-rolled until
        // every pre-activation clears the kink margin (see
        // min_abs_preactivation); the check is only defined away from kinks.
        let mut cases = 0;
        let mut seed = 0u64;
        'outer: for depth in 2..=7usize {
            for act in [Activation::Relu, Activation::Tanh, Activation::LeakyRelu] {
                let (mut mlp, x, target) = loop {
                    seed += 1;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut dims = vec![5];
                    for _ in 0..depth - 1 {
                        dims.push(rng.random_range(2..=8));
                    }
                    dims.push(3);
                    let mlp = Mlp::glorot(&dims, act, Activation::Identity, &mut rng);
                    let x = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
                    // Target close to the output keeps the loss value small
                    // relative to its gradient, which keeps cancellation
                    // noise in the finite difference below the tolerance.
                    let out = mlp.forward_inference(&x).unwrap();
                    let target = &out + &Array2::from_shape_fn((6, 3), |_| {
                        rng.random_range(-0.01..0.01)
                    });
                    if min_abs_preactivation(&mlp, &x).unwrap() > 1e-3 {
                        break (mlp, x, target);
                    }
                };
                let err = grad_check(&mut mlp, &x, &MseTarget(target)).unwrap();
                assert!(err < 1e-5, "depth {depth} act {act:?} error {err}");
                cases += 1;
                if cases >= 20 {
                    break 'outer;
                }
            }
        }
        assert!(cases >= 18, "only {cases} stacks exercised");
    }

    #[test]
    fn dead_relu_units_have_zero_gradient_on_both_paths() {
        // Large negative bias forces the relu unit off everywhere; both the
        // analytic and numeric gradients for its incoming weights are zero,
        // so grad_check sees no disagreement.
        let dead = DenseLayer::from_parts(
            ndarray::array![[0.5, -0.25]],
            ndarray::array![-10.0],
            Activation::Relu,
        );
        let mut mlp = Mlp::new(vec![dead]);
        let x = ndarray::array![[0.3, 0.9], [0.1, 0.2]];
        let loss = MseTarget(Array2::zeros((2, 1)));

        let out = mlp.forward(&x).unwrap();
        let upstream = loss.grad(&out);
        let (grads, _) = mlp.backward(&upstream).unwrap();
        assert_eq!(grads[0].d_weights, Array2::<f64>::zeros((1, 2)));

        let err = grad_check(&mut mlp, &x, &loss).unwrap();
        assert!(err < 1e-12, "dead unit error {err}");
    }

    #[test]
    fn sgd_reduces_loss_on_toy_regression() {
        // y = 2x - 1 with a small tanh net; loss should drop well below 10%
        // of its initial value after 200 epochs.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((32, 1), |_| rng.random_range(-1.0..1.0));
        let y = x.mapv(|v| 2.0 * v - 1.0);
        let mut mlp = Mlp::glorot(&[1, 8, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let loss = MseTarget(y);
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum { momentum: 0.9 }, 0.05);

        let initial = loss.value(&mlp.forward_inference(&x).unwrap());
        for _ in 0..200 {
            let out = mlp.forward(&x).unwrap();
            let upstream = loss.grad(&out);
            let (grads, _) = mlp.backward(&upstream).unwrap();
            opt.step(&mut [&mut mlp], &[&grads]).unwrap();
        }
        let final_loss = loss.value(&mlp.forward_inference(&x).unwrap());
        assert!(
            final_loss < 0.1 * initial,
            "loss only moved from {initial} to {final_loss}"
        );
    }

    #[test]
    fn training_is_bit_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let x = Array2::from_shape_fn((16, 2), |_| rng.random_range(-1.0..1.0));
            let y = x.mapv(|v| v * 0.5);
            let mut mlp = Mlp::glorot(&[2, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
            let loss = MseTarget(y);
            let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
            for _ in 0..50 {
                let out = mlp.forward(&x).unwrap();
                let upstream = loss.grad(&out);
                let (grads, _) = mlp.backward(&upstream).unwrap();
                opt.step(&mut [&mut mlp], &[&grads]).unwrap();
            }
            mlp.forward_inference(&x).unwrap()
        };
        assert_eq!(run(), run());
    }
}
