//! SGD-with-momentum and Adam. One `step` call advances every parameter of
//! the given stacks and bumps Adam's shared timestep exactly once.

use super::{LayerGrads, Mlp, NnError};
use ndarray::{Array1, Array2};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::SgdMomentum { .. } => write!(f, "sgd"),
            OptimizerKind::Adam => write!(f, "adam"),
        }
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Velocity {
        w: Array2<f64>,
        b: Array1<f64>,
    },
    Moments {
        m_w: Array2<f64>,
        v_w: Array2<f64>,
        m_b: Array1<f64>,
        v_b: Array1<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    timestep: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        assert!(learning_rate >= 0.0, "learning rate must be non-negative");
        Optimizer {
            kind,
            learning_rate,
            timestep: 0,
            slots: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Applies one optimization step to every layer of every stack, in order.
    /// Stack and layer shapes must match across calls; state is allocated on
    /// first use and mirrors parameter shapes exactly.
    pub fn step(&mut self, stacks: &mut [&mut Mlp], grads: &[&[LayerGrads]]) -> Result<(), NnError> {
        if stacks.len() != grads.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} stacks but {} gradient sets",
                stacks.len(),
                grads.len()
            )));
        }
        self.timestep += 1;
        let mut slot = 0;
        for (mlp, stack_grads) in stacks.iter_mut().zip(grads) {
            if mlp.layers().len() != stack_grads.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "{} layers but {} layer gradients",
                    mlp.layers().len(),
                    stack_grads.len()
                )));
            }
            for (layer, grad) in mlp.layers_mut().iter_mut().zip(stack_grads.iter()) {
                if layer.weights.dim() != grad.d_weights.dim()
                    || layer.biases.len() != grad.d_biases.len()
                {
                    return Err(NnError::ShapeMismatch(format!(
                        "parameter shape {:?}/{} vs gradient shape {:?}/{}",
                        layer.weights.dim(),
                        layer.biases.len(),
                        grad.d_weights.dim(),
                        grad.d_biases.len()
                    )));
                }
                self.ensure_slot(slot, layer.weights.dim(), layer.biases.len());
                let lr = self.learning_rate;
                let t = self.timestep;
                match (&mut self.slots[slot], self.kind) {
                    (Slot::Velocity { w, b }, OptimizerKind::SgdMomentum { momentum }) => {
                        // v <- momentum * v - lr * g; p <- p + v
                        w.zip_mut_with(&grad.d_weights, |v, &g| *v = momentum * *v - lr * g);
                        b.zip_mut_with(&grad.d_biases, |v, &g| *v = momentum * *v - lr * g);
                        layer.weights += &*w;
                        layer.biases += &*b;
                    }
                    (Slot::Moments { m_w, v_w, m_b, v_b }, OptimizerKind::Adam) => {
                        adam_update(&mut layer.weights, m_w, v_w, &grad.d_weights, lr, t);
                        adam_update_1d(&mut layer.biases, m_b, v_b, &grad.d_biases, lr, t);
                    }
                    _ => unreachable!("slot kind always matches optimizer kind"),
                }
                slot += 1;
            }
        }
        Ok(())
    }

    fn ensure_slot(&mut self, slot: usize, w_dim: (usize, usize), b_len: usize) {
        if slot < self.slots.len() {
            return;
        }
        debug_assert_eq!(slot, self.slots.len(), "slots are allocated in order");
        let s = match self.kind {
            OptimizerKind::SgdMomentum { .. } => Slot::Velocity {
                w: Array2::zeros(w_dim),
                b: Array1::zeros(b_len),
            },
            OptimizerKind::Adam => Slot::Moments {
                m_w: Array2::zeros(w_dim),
                v_w: Array2::zeros(w_dim),
                m_b: Array1::zeros(b_len),
                v_b: Array1::zeros(b_len),
            },
        };
        self.slots.push(s);
    }
}

fn adam_scalar(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, t: u64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / (1.0 - ADAM_BETA1.powi(t as i32));
    let v_hat = *v / (1.0 - ADAM_BETA2.powi(t as i32));
    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
}

fn adam_update(
    param: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    grad: &Array2<f64>,
    lr: f64,
    t: u64,
) {
    for ((p, (m, v)), &g) in param
        .iter_mut()
        .zip(m.iter_mut().zip(v.iter_mut()))
        .zip(grad.iter())
    {
        adam_scalar(p, m, v, g, lr, t);
    }
}

fn adam_update_1d(
    param: &mut Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    grad: &Array1<f64>,
    lr: f64,
    t: u64,
) {
    for ((p, (m, v)), &g) in param
        .iter_mut()
        .zip(m.iter_mut().zip(v.iter_mut()))
        .zip(grad.iter())
    {
        adam_scalar(p, m, v, g, lr, t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar_mlp(w: f64) -> Mlp {
        Mlp::new(vec![DenseLayer::from_parts(
            array![[w]],
            Array1::zeros(1),
            Activation::Identity,
        )])
    }

    fn scalar_grad(g: f64) -> Vec<LayerGrads> {
        vec![LayerGrads {
            d_weights: array![[g]],
            d_biases: Array1::zeros(1),
        }]
    }

    #[test]
    fn plain_sgd_step() {
        let mut mlp = scalar_mlp(1.0);
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum { momentum: 0.0 }, 0.1);
        let grads = scalar_grad(2.0);
        opt.step(&mut [&mut mlp], &[&grads]).unwrap();
        assert_abs_diff_eq!(mlp.layers()[0].weights[(0, 0)], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn sgd_momentum_two_step_recurrence() {
        // v1 = -lr*g, delta1 = v1; v2 = mom*v1 - lr*g, delta2 = v2.
        let lr = 0.05;
        let mom = 0.009;
        let g = 1.5;
        let mut mlp = scalar_mlp(1.0);
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum { momentum: mom }, lr);
        let grads = scalar_grad(g);
        opt.step(&mut [&mut mlp], &[&grads]).unwrap();
        let after_one = mlp.layers()[0].weights[(0, 0)];
        assert_abs_diff_eq!(after_one, 1.0 - lr * g, epsilon = 1e-15);
        opt.step(&mut [&mut mlp], &[&grads]).unwrap();
        let after_two = mlp.layers()[0].weights[(0, 0)];
        assert_abs_diff_eq!(after_two, after_one - lr * g * (1.0 + mom), epsilon = 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_close_to_lr() {
        for g in [5.0, -3.0, 0.1] {
            let mut mlp = scalar_mlp(1.0);
            let mut opt = Optimizer::new(OptimizerKind::Adam, 0.001);
            let grads = scalar_grad(g);
            opt.step(&mut [&mut mlp], &[&grads]).unwrap();
            let delta = (mlp.layers()[0].weights[(0, 0)] - 1.0).abs();
            assert!(delta > 0.9 * 0.001 && delta <= 0.001, "|delta| = {delta}");
        }
    }

    #[test]
    fn zero_learning_rate_is_neutral() {
        for kind in [OptimizerKind::SgdMomentum { momentum: 0.9 }, OptimizerKind::Adam] {
            let mut mlp = scalar_mlp(1.25);
            let mut opt = Optimizer::new(kind, 0.0);
            let grads = scalar_grad(7.0);
            for _ in 0..5 {
                opt.step(&mut [&mut mlp], &[&grads]).unwrap();
            }
            assert_eq!(mlp.layers()[0].weights[(0, 0)], 1.25);
        }
    }

    #[test]
    fn sgd_zero_gradient_decays_velocity() {
        let mut mlp = scalar_mlp(1.0);
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum { momentum: 0.5 }, 0.1);
        opt.step(&mut [&mut mlp], &[&scalar_grad(2.0)]).unwrap();
        // velocity is now -0.2; a zero-grad step moves p by 0.5 * -0.2 = -0.1
        let before = mlp.layers()[0].weights[(0, 0)];
        opt.step(&mut [&mut mlp], &[&scalar_grad(0.0)]).unwrap();
        assert_abs_diff_eq!(
            mlp.layers()[0].weights[(0, 0)],
            before - 0.1,
            epsilon = 1e-15
        );
        // with velocity and gradient both zero, nothing moves
        let mut still = scalar_mlp(2.0);
        let mut opt2 = Optimizer::new(OptimizerKind::SgdMomentum { momentum: 0.5 }, 0.1);
        opt2.step(&mut [&mut still], &[&scalar_grad(0.0)]).unwrap();
        assert_eq!(still.layers()[0].weights[(0, 0)], 2.0);
    }

    #[test]
    fn gradient_shape_mismatch_is_an_error() {
        let mut mlp = scalar_mlp(1.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.001);
        let bad = vec![LayerGrads {
            d_weights: Array2::zeros((2, 2)),
            d_biases: Array1::zeros(2),
        }];
        assert!(opt.step(&mut [&mut mlp], &[&bad]).is_err());
    }
}
