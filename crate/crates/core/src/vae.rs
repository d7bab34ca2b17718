//! Variational autoencoder with a pluggable latent noise source.
//!
//! The encoder maps `nf` features to a `2z`-wide head holding the latent
//! mean and log-variance; the decoder maps `z` back to `nf`. Latent samples
//! use the reparameterization `Z = mu + exp(log_var / 2) * eps`, where `eps`
//! comes either from a standard normal (baseline VAE) or from a logistic
//! chaotic map (C-VAE). The loss is mean squared reconstruction error plus
//! the closed-form KL divergence of the diagonal Gaussian posterior against
//! a standard-normal prior, with unit weights.

use crate::chaos::{self, ChaosError, ChaoticGenerator, NoiseTransform};
use crate::nn::{
    mlp_from_json, mlp_to_json, rel_err, Activation, LayerGrads, Mlp, NnError, Optimizer,
    OptimizerKind,
};
use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// log sigma^2 is clamped to [-LOGVAR_CLAMP, LOGVAR_CLAMP] before
/// exponentiation; raw-mode chaotic noise has mean 0.5 and pushes the
/// variance head hard without this.
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error("non-finite loss at epoch {epoch}: training diverged")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Which distribution fills the latent noise tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian,
    Chaotic {
        lambda: f64,
        /// Explicit logistic-map seed; when absent one is resampled
        /// deterministically from the model's init seed.
        seed: Option<f64>,
        burn_in: u64,
        transform: NoiseTransform,
    },
}

impl NoiseSpec {
    pub fn chaotic_default() -> Self {
        NoiseSpec::Chaotic {
            lambda: chaos::LAMBDA_DEFAULT,
            seed: None,
            burn_in: chaos::DEFAULT_BURN_IN,
            transform: NoiseTransform::Raw,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NoiseSpec::Gaussian => "gaussian",
            NoiseSpec::Chaotic { .. } => "chaotic",
        }
    }
}

#[derive(Debug, Clone)]
enum NoiseState {
    Gaussian { rng: ChaCha8Rng },
    Chaotic { gen: ChaoticGenerator, transform: NoiseTransform },
}

impl NoiseState {
    fn sample(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>, VaeError> {
        match self {
            NoiseState::Gaussian { rng } => {
                let mut out = Array2::zeros((rows, cols));
                for i in 0..rows {
                    for j in 0..cols {
                        out[(i, j)] = rng.sample(StandardNormal);
                    }
                }
                Ok(out)
            }
            NoiseState::Chaotic { gen, transform } => {
                Ok(gen.sample_noise(*transform, rows, cols)?)
            }
        }
    }

    fn spec(&self) -> NoiseSpec {
        match self {
            NoiseState::Gaussian { .. } => NoiseSpec::Gaussian,
            NoiseState::Chaotic { gen, transform } => NoiseSpec::Chaotic {
                lambda: gen.lambda(),
                seed: Some(gen.seed()),
                burn_in: gen.burn_in(),
                transform: *transform,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

impl std::fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerChoice::Adam => write!(f, "adam"),
            OptimizerChoice::Sgd => write!(f, "sgd"),
        }
    }
}

impl std::str::FromStr for OptimizerChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerChoice::Adam),
            "sgd" => Ok(OptimizerChoice::Sgd),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub activation: Activation,
    pub optimizer: OptimizerChoice,
    pub total_layers: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub noise: NoiseSpec,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.001,
            momentum: 0.009,
            activation: Activation::Relu,
            optimizer: OptimizerChoice::Adam,
            total_layers: 5,
            batch_size: 64,
            latent_dim: 2,
            noise: NoiseSpec::Gaussian,
            init_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        if self.learning_rate <= 0.0 {
            return Err(VaeError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(VaeError::Config("batch_size must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(VaeError::Config("latent_dim must be at least 1".into()));
        }
        if self.total_layers < 2 {
            return Err(VaeError::Config(
                "total_layers must be at least 2 (one encoder, one decoder layer)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(VaeError::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer {
            OptimizerChoice::Adam => OptimizerKind::Adam,
            OptimizerChoice::Sgd => OptimizerKind::SgdMomentum {
                momentum: self.momentum,
            },
        }
    }
}

/// Derives encoder/decoder layer dims from the total trainable layer count.
///
/// The encoder takes the larger half (`ceil(total / 2)` layers ending in the
/// `2z`-wide head), the decoder the rest (ending in the `nf`-wide output).
/// Hidden widths taper geometrically between `nf` and `z`.
pub fn architecture(nf: usize, latent_dim: usize, total_layers: usize) -> (Vec<usize>, Vec<usize>) {
    assert!(nf >= 1 && latent_dim >= 1 && total_layers >= 2);
    let enc_layers = total_layers.div_ceil(2);
    let dec_layers = total_layers / 2;

    let geo = |steps: usize, from: f64, to: f64| -> Vec<usize> {
        (1..=steps)
            .map(|i| {
                let t = i as f64 / (steps + 1) as f64;
                (from.powf(1.0 - t) * to.powf(t)).round().max(1.0) as usize
            })
            .collect()
    };

    let mut encoder = vec![nf];
    encoder.extend(geo(enc_layers - 1, nf as f64, latent_dim as f64));
    encoder.push(2 * latent_dim);

    let mut decoder = vec![latent_dim];
    decoder.extend(geo(dec_layers - 1, latent_dim as f64, nf as f64));
    decoder.push(nf);

    (encoder, decoder)
}

/// Total plus its two addends; `total == mse + kl` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

/// `Z = mu + exp(log_var / 2) * eps`, element-wise.
pub fn reparameterize(
    mu: &Array2<f64>,
    log_var: &Array2<f64>,
    eps: &Array2<f64>,
) -> Result<Array2<f64>, VaeError> {
    if mu.dim() != log_var.dim() || mu.dim() != eps.dim() {
        return Err(NnError::ShapeMismatch(format!(
            "mu {:?}, log_var {:?}, eps {:?}",
            mu.dim(),
            log_var.dim(),
            eps.dim()
        ))
        .into());
    }
    let mut z = log_var.mapv(|lv| (0.5 * lv).exp());
    z *= eps;
    z += mu;
    Ok(z)
}

/// Mean squared error over all elements plus batch-mean closed-form KL of
/// `N(mu, sigma^2)` against `N(0, 1)`.
pub fn loss_terms(
    x: &Array2<f64>,
    x_recon: &Array2<f64>,
    mu: &Array2<f64>,
    log_var: &Array2<f64>,
) -> Result<LossParts, VaeError> {
    if x.dim() != x_recon.dim() {
        return Err(NnError::ShapeMismatch(format!(
            "batch {:?} vs reconstruction {:?}",
            x.dim(),
            x_recon.dim()
        ))
        .into());
    }
    if mu.dim() != log_var.dim() || mu.nrows() != x.nrows() {
        return Err(NnError::ShapeMismatch(format!(
            "mu {:?} vs log_var {:?} for batch of {} rows",
            mu.dim(),
            log_var.dim(),
            x.nrows()
        ))
        .into());
    }
    let n = x.len() as f64;
    let mse = x
        .iter()
        .zip(x_recon.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let b = x.nrows() as f64;
    let kl = mu
        .iter()
        .zip(log_var.iter())
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum::<f64>()
        / b;
    Ok(LossParts {
        total: mse + kl,
        mse,
        kl,
    })
}

#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub encoder: Vec<LayerGrads>,
    pub decoder: Vec<LayerGrads>,
}

/// Encoder, decoder and the latent noise source, trained as one unit.
#[derive(Debug, Clone)]
pub struct VaeModel {
    encoder: Mlp,
    decoder: Mlp,
    latent_dim: usize,
    noise: NoiseState,
    pipeline_id: Option<String>,
}

impl VaeModel {
    /// Builds a model for `nf`-feature inputs. Parameter init, epoch
    /// shuffling and the noise stream each draw from an independent RNG
    /// derived from `config.init_seed`, in a fixed order, so models with
    /// different noise sources but the same seed start from identical
    /// parameters.
    pub fn new(nf: usize, config: &TrainConfig) -> Result<Self, VaeError> {
        config.validate()?;
        if nf == 0 {
            return Err(VaeError::Config("need at least one feature".into()));
        }
        let mut root = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut init_rng = ChaCha8Rng::from_rng(&mut root);
        let mut noise_rng = ChaCha8Rng::from_rng(&mut root);

        let (enc_dims, dec_dims) = architecture(nf, config.latent_dim, config.total_layers);
        let encoder = Mlp::glorot(&enc_dims, config.activation, Activation::Identity, &mut init_rng);
        let decoder = Mlp::glorot(&dec_dims, config.activation, Activation::Identity, &mut init_rng);

        let noise = match &config.noise {
            NoiseSpec::Gaussian => NoiseState::Gaussian { rng: noise_rng },
            NoiseSpec::Chaotic {
                lambda,
                seed,
                burn_in,
                transform,
            } => {
                let seed = match seed {
                    Some(s) => chaos::seed_validate(*s, *lambda, chaos::DEFAULT_PROBE_LEN)?,
                    None => chaos::resample_seed(*lambda, chaos::DEFAULT_PROBE_LEN, &mut noise_rng)?,
                };
                NoiseState::Chaotic {
                    gen: ChaoticGenerator::new(*lambda, seed, *burn_in)?,
                    transform: *transform,
                }
            }
        };

        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim: config.latent_dim,
            noise,
            pipeline_id: None,
        })
    }

    pub fn from_parts(
        encoder: Mlp,
        decoder: Mlp,
        latent_dim: usize,
        noise: NoiseSpec,
        noise_seed: u64,
    ) -> Result<Self, VaeError> {
        if encoder.out_dim() != 2 * latent_dim {
            return Err(VaeError::Config(format!(
                "encoder output width {} must be twice the latent dim {latent_dim}",
                encoder.out_dim()
            )));
        }
        if decoder.in_dim() != latent_dim {
            return Err(VaeError::Config(format!(
                "decoder input width {} must equal the latent dim {latent_dim}",
                decoder.in_dim()
            )));
        }
        if encoder.in_dim() != decoder.out_dim() {
            return Err(VaeError::Config(
                "encoder input and decoder output widths must agree".into(),
            ));
        }
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = match noise {
            NoiseSpec::Gaussian => NoiseState::Gaussian { rng: noise_rng },
            NoiseSpec::Chaotic {
                lambda,
                seed,
                burn_in,
                transform,
            } => {
                let seed = match seed {
                    Some(s) => chaos::seed_validate(s, lambda, chaos::DEFAULT_PROBE_LEN)?,
                    None => chaos::resample_seed(lambda, chaos::DEFAULT_PROBE_LEN, &mut noise_rng)?,
                };
                NoiseState::Chaotic {
                    gen: ChaoticGenerator::new(lambda, seed, burn_in)?,
                    transform,
                }
            }
        };
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
            noise,
            pipeline_id: None,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        self.noise.spec()
    }

    pub fn pipeline_id(&self) -> Option<&str> {
        self.pipeline_id.as_deref()
    }

    pub fn set_pipeline_id(&mut self, id: Option<String>) {
        self.pipeline_id = id;
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    /// Splits the encoder head into `(mu, log_var)`, clamping `log_var`.
    pub fn encode(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>), VaeError> {
        let out = self.encoder.forward_inference(batch)?;
        Ok(split_heads(&out, self.latent_dim))
    }

    /// Deterministic scoring pass: `Z = mu`, no noise, fixed output for a
    /// frozen model.
    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>, VaeError> {
        let (mu, _) = self.encode(x)?;
        Ok(self.decoder.forward_inference(&mu)?)
    }

    /// Forward + full backward pass with an explicit noise tensor.
    /// Returns the loss decomposition and gradients for both stacks without
    /// touching parameters. Non-finite activations or loss report as
    /// divergence via `NonFiniteLoss` (the epoch label is filled by `train`).
    pub fn loss_and_grads(
        &mut self,
        batch: &Array2<f64>,
        eps: &Array2<f64>,
    ) -> Result<(LossParts, VaeGrads), VaeError> {
        let b = batch.nrows();
        let z = self.latent_dim;
        if eps.dim() != (b, z) {
            return Err(NnError::ShapeMismatch(format!(
                "noise is {:?}, expected ({b}, {z})",
                eps.dim()
            ))
            .into());
        }

        let enc_out = self.encoder.forward(batch)?;
        if enc_out.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFiniteLoss { epoch: 0 });
        }
        let raw_log_var = enc_out.slice(s![.., z..2 * z]).to_owned();
        let (mu, log_var) = split_heads(&enc_out, z);
        let sigma = log_var.mapv(|lv| (0.5 * lv).exp());

        let z_lat = reparameterize(&mu, &log_var, eps)?;
        let x_recon = self.decoder.forward(&z_lat)?;
        if x_recon.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::NonFiniteLoss { epoch: 0 });
        }

        let parts = loss_terms(batch, &x_recon, &mu, &log_var)?;
        if !parts.total.is_finite() {
            return Err(VaeError::NonFiniteLoss { epoch: 0 });
        }

        // d total / d x_recon for the mean-reduced squared error.
        let scale = 2.0 / batch.len() as f64;
        let d_recon = (&x_recon - batch) * scale;
        let (dec_grads, d_z) = self.decoder.backward(&d_recon)?;

        // Reconstruction path through Z = mu + sigma * eps, plus KL terms.
        let bf = b as f64;
        let d_mu = &d_z + &(&mu / bf);
        let mut d_log_var = &d_z * eps * &sigma * 0.5;
        d_log_var += &((log_var.mapv(f64::exp) - 1.0) / (2.0 * bf));
        // The clamp contributes zero gradient outside its active range.
        d_log_var.zip_mut_with(&raw_log_var, |g, &raw| {
            if raw.abs() > LOGVAR_CLAMP {
                *g = 0.0;
            }
        });

        let upstream = concatenate(Axis(1), &[d_mu.view(), d_log_var.view()])
            .expect("mu and log_var halves have equal row counts");
        let (enc_grads, _) = self.encoder.backward(&upstream)?;

        Ok((
            parts,
            VaeGrads {
                encoder: enc_grads,
                decoder: dec_grads,
            },
        ))
    }

    /// One optimization step on an explicit noise tensor. Both noise sources
    /// reach the update only through `eps`, so pinning `eps` makes the two
    /// paths bit-identical.
    pub fn step_with_noise(
        &mut self,
        batch: &Array2<f64>,
        eps: &Array2<f64>,
        optimizer: &mut Optimizer,
    ) -> Result<LossParts, VaeError> {
        let (parts, grads) = self.loss_and_grads(batch, eps)?;
        optimizer.step(
            &mut [&mut self.encoder, &mut self.decoder],
            &[&grads.encoder, &grads.decoder],
        )?;
        Ok(parts)
    }

    /// Runs `config.epochs` epochs of shuffled minibatch training and
    /// returns the per-epoch mean total loss.
    pub fn train(&mut self, x_train: &Array2<f64>, config: &TrainConfig) -> Result<Vec<f64>, VaeError> {
        config.validate()?;
        if x_train.nrows() == 0 {
            return Err(VaeError::Config("training set is empty".into()));
        }
        let mut root = ChaCha8Rng::seed_from_u64(config.init_seed);
        let _init = ChaCha8Rng::from_rng(&mut root);
        let _noise = ChaCha8Rng::from_rng(&mut root);
        let mut shuffle_rng = ChaCha8Rng::from_rng(&mut root);

        let mut optimizer = Optimizer::new(config.optimizer_kind(), config.learning_rate);
        let mut trace = Vec::with_capacity(config.epochs);
        let n = x_train.nrows();
        let mut indices: Vec<usize> = (0..n).collect();

        use rand::seq::SliceRandom;
        for epoch in 0..config.epochs {
            indices.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for chunk in indices.chunks(config.batch_size) {
                let batch = x_train.select(Axis(0), chunk);
                let eps = self.noise.sample(chunk.len(), self.latent_dim)?;
                let parts = self
                    .step_with_noise(&batch, &eps, &mut optimizer)
                    .map_err(|e| match e {
                        VaeError::NonFiniteLoss { .. } => VaeError::NonFiniteLoss { epoch },
                        other => other,
                    })?;
                epoch_loss += parts.total * chunk.len() as f64;
            }
            trace.push(epoch_loss / n as f64);
        }
        Ok(trace)
    }

    /// Loss under a fixed noise tensor without caching, for finite-difference
    /// probes.
    fn loss_value_fixed_eps(&self, x: &Array2<f64>, eps: &Array2<f64>) -> Result<f64, VaeError> {
        let out = self.encoder.forward_inference(x)?;
        let (mu, log_var) = split_heads(&out, self.latent_dim);
        let z_lat = reparameterize(&mu, &log_var, eps)?;
        let x_recon = self.decoder.forward_inference(&z_lat)?;
        Ok(loss_terms(x, &x_recon, &mu, &log_var)?.total)
    }

    /// Central-difference check of the full loss gradient through
    /// encode -> reparameterize (fixed eps) -> decode. Returns the worst
    /// relative error over every parameter of both stacks.
    pub fn grad_check(&mut self, x: &Array2<f64>, eps: &Array2<f64>) -> Result<f64, VaeError> {
        const STEP: f64 = 1e-5;
        let (_, analytic) = self.loss_and_grads(x, eps)?;
        let mut worst = 0.0_f64;
        for stack in [0, 1] {
            let layer_count = if stack == 0 {
                self.encoder.layers().len()
            } else {
                self.decoder.layers().len()
            };
            for layer in 0..layer_count {
                let (rows, cols) = self.stack(stack).layers()[layer].weights.dim();
                for r in 0..rows {
                    for c in 0..cols {
                        let mut probe = |delta: f64| -> Result<f64, VaeError> {
                            self.stack_mut(stack).layers_mut()[layer].weights[(r, c)] += delta;
                            let v = self.loss_value_fixed_eps(x, eps);
                            self.stack_mut(stack).layers_mut()[layer].weights[(r, c)] -= delta;
                            v
                        };
                        let numeric = (probe(STEP)? - probe(-STEP)?) / (2.0 * STEP);
                        let a = self.stack_grad(&analytic, stack)[layer].d_weights[(r, c)];
                        worst = worst.max(rel_err(a, numeric));
                    }
                }
                let b_len = self.stack(stack).layers()[layer].biases.len();
                for bi in 0..b_len {
                    let mut probe = |delta: f64| -> Result<f64, VaeError> {
                        self.stack_mut(stack).layers_mut()[layer].biases[bi] += delta;
                        let v = self.loss_value_fixed_eps(x, eps);
                        self.stack_mut(stack).layers_mut()[layer].biases[bi] -= delta;
                        v
                    };
                    let numeric = (probe(STEP)? - probe(-STEP)?) / (2.0 * STEP);
                    let a = self.stack_grad(&analytic, stack)[layer].d_biases[bi];
                    worst = worst.max(rel_err(a, numeric));
                }
            }
        }
        Ok(worst)
    }

    fn stack(&self, idx: usize) -> &Mlp {
        if idx == 0 {
            &self.encoder
        } else {
            &self.decoder
        }
    }

    fn stack_mut(&mut self, idx: usize) -> &mut Mlp {
        if idx == 0 {
            &mut self.encoder
        } else {
            &mut self.decoder
        }
    }

    fn stack_grad<'g>(&self, grads: &'g VaeGrads, idx: usize) -> &'g [LayerGrads] {
        if idx == 0 {
            &grads.encoder
        } else {
            &grads.decoder
        }
    }
}

fn split_heads(enc_out: &Array2<f64>, z: usize) -> (Array2<f64>, Array2<f64>) {
    let mu = enc_out.slice(s![.., 0..z]).to_owned();
    let log_var = enc_out
        .slice(s![.., z..2 * z])
        .mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
    (mu, log_var)
}

#[derive(Debug, Serialize, Deserialize)]
struct VaeRecord {
    format_version: u32,
    latent_dim: usize,
    noise: NoiseSpec,
    pipeline_id: Option<String>,
    encoder: serde_json::Value,
    decoder: serde_json::Value,
}

/// Saves the model as a JSON container: a VAE header plus the two layer-stack
/// containers. Reload restores the noise stream from its recorded seed, so a
/// saved chaotic model replays its noise sequence from the start.
pub fn save_model(model: &VaeModel, path: &Path) -> Result<(), VaeError> {
    let record = VaeRecord {
        format_version: crate::nn::FORMAT_VERSION,
        latent_dim: model.latent_dim,
        noise: model.noise.spec(),
        pipeline_id: model.pipeline_id.clone(),
        encoder: mlp_to_json(&model.encoder),
        decoder: mlp_to_json(&model.decoder),
    };
    let text = serde_json::to_string_pretty(&record).expect("VAE record serializes");
    std::fs::write(path, text).map_err(NnError::from)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<VaeModel, VaeError> {
    let text = std::fs::read_to_string(path).map_err(NnError::from)?;
    let record: VaeRecord =
        serde_json::from_str(&text).map_err(|e| NnError::Format(e.to_string()))?;
    if record.format_version != crate::nn::FORMAT_VERSION {
        return Err(NnError::Format(format!(
            "unsupported format version {}",
            record.format_version
        ))
        .into());
    }
    let encoder = mlp_from_json(record.encoder)?;
    let decoder = mlp_from_json(record.decoder)?;
    let mut model = VaeModel::from_parts(encoder, decoder, record.latent_dim, record.noise, 0)?;
    model.set_pipeline_id(record.pipeline_id);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};

    fn zero_model(nf: usize, z: usize) -> VaeModel {
        let encoder = Mlp::new(vec![DenseLayer::from_parts(
            Array2::zeros((2 * z, nf)),
            Array1::zeros(2 * z),
            Activation::Identity,
        )]);
        let decoder = Mlp::new(vec![DenseLayer::from_parts(
            Array2::zeros((nf, z)),
            Array1::zeros(nf),
            Activation::Identity,
        )]);
        VaeModel::from_parts(encoder, decoder, z, NoiseSpec::Gaussian, 0).unwrap()
    }

    fn synthetic_blobs(n: usize, nf: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, nf), |_| {
            (0.3 + 0.05 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0)
        })
    }

    #[test]
    fn zero_parameter_encoder_maps_to_origin() {
        let model = zero_model(4, 2);
        let x = array![[0.2, 0.4, 0.6, 0.8], [0.1, 0.1, 0.1, 0.1]];
        let (mu, log_var) = model.encode(&x).unwrap();
        assert_eq!(mu, Array2::<f64>::zeros((2, 2)));
        assert_eq!(log_var, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn encode_splits_heads_in_declared_order() {
        // Identity-ish encoder: first z rows feed mu, last z rows feed log_var.
        let mut w = Array2::zeros((4, 4));
        w[(0, 0)] = 1.0;
        w[(1, 1)] = 1.0;
        w[(2, 2)] = 1.0;
        w[(3, 3)] = 1.0;
        let encoder = Mlp::new(vec![DenseLayer::from_parts(
            w,
            Array1::zeros(4),
            Activation::Identity,
        )]);
        let decoder = Mlp::new(vec![DenseLayer::from_parts(
            Array2::zeros((4, 2)),
            Array1::zeros(4),
            Activation::Identity,
        )]);
        let model = VaeModel::from_parts(encoder, decoder, 2, NoiseSpec::Gaussian, 0).unwrap();
        let x = array![[0.1, 0.2, 0.3, 0.4]];
        let (mu, log_var) = model.encode(&x).unwrap();
        assert_eq!(mu, array![[0.1, 0.2]]);
        assert_eq!(log_var, array![[0.3, 0.4]]);
    }

    #[test]
    fn log_var_head_is_clamped() {
        let encoder = Mlp::new(vec![DenseLayer::from_parts(
            Array2::zeros((2, 1)),
            array![0.0, 25.0],
            Activation::Identity,
        )]);
        let decoder = Mlp::new(vec![DenseLayer::from_parts(
            Array2::zeros((1, 1)),
            Array1::zeros(1),
            Activation::Identity,
        )]);
        let model = VaeModel::from_parts(encoder, decoder, 1, NoiseSpec::Gaussian, 0).unwrap();
        let (_, log_var) = model.encode(&array![[0.5]]).unwrap();
        assert_eq!(log_var[(0, 0)], LOGVAR_CLAMP);
    }

    #[test]
    fn reparameterize_zero_noise_returns_mu() {
        let mu = array![[0.3, -0.7], [1.5, 0.0]];
        let lv = array![[0.5, -2.0], [0.0, 3.0]];
        let z = reparameterize(&mu, &lv, &Array2::zeros((2, 2))).unwrap();
        assert_eq!(z, mu);
    }

    #[test]
    fn reparameterize_unit_sigma_shifts_by_noise() {
        let mu = array![[0.25, -1.0]];
        let z = reparameterize(&mu, &Array2::zeros((1, 2)), &Array2::ones((1, 2))).unwrap();
        assert_eq!(z, array![[1.25, 0.0]]);
    }

    #[test]
    fn reparameterize_composes_with_chaotic_stream() {
        let mut gen = ChaoticGenerator::new(4.0, 0.2, 0).unwrap();
        let eps = gen.sample_noise(NoiseTransform::Raw, 1, 3).unwrap();
        let z = reparameterize(&Array2::zeros((1, 3)), &Array2::zeros((1, 3)), &eps).unwrap();
        assert_abs_diff_eq!(z[(0, 0)], 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(z[(0, 1)], 0.9216, epsilon = 1e-15);
        assert_abs_diff_eq!(z[(0, 2)], 0.28901376, epsilon = 1e-13);
    }

    #[test]
    fn loss_vanishes_at_prior_with_perfect_reconstruction() {
        let x = array![[0.1, 0.9]];
        let parts = loss_terms(&x, &x, &Array2::zeros((1, 1)), &Array2::zeros((1, 1))).unwrap();
        assert_eq!(parts.total, 0.0);
        assert_eq!(parts.mse, 0.0);
        assert_eq!(parts.kl, 0.0);
    }

    #[test]
    fn unit_mean_kl_is_one_half() {
        let x = array![[0.5]];
        let parts = loss_terms(&x, &x, &array![[1.0]], &array![[0.0]]).unwrap();
        assert_abs_diff_eq!(parts.kl, 0.5, epsilon = 1e-15);
        assert_eq!(parts.total, parts.mse + parts.kl);
    }

    #[test]
    fn closed_form_kl_matches_monte_carlo() {
        // KL(q || p) estimated as the sample mean of log q(z) - log p(z)
        // over draws z ~ q, with q = N(mu, sigma^2) and p = N(0, 1).
        let mu = 0.8_f64;
        let log_var = -0.4_f64;
        let sigma = (0.5 * log_var).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let samples = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let e: f64 = rng.sample(StandardNormal);
            let z = mu + sigma * e;
            let log_q = -0.5 * ((z - mu) / sigma).powi(2) - sigma.ln();
            let log_p = -0.5 * z * z;
            acc += log_q - log_p;
        }
        let mc = acc / samples as f64;
        let x = array![[0.0]];
        let closed = loss_terms(&x, &x, &array![[mu]], &array![[log_var]]).unwrap().kl;
        let rel = (mc - closed).abs() / closed.abs();
        assert!(rel < 0.01, "MC {mc} vs closed form {closed} (rel {rel})");
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_prior() {
        let x = array![[0.0]];
        for &(m, lv) in &[(0.0, 0.0), (0.3, 0.0), (0.0, 1.5), (-2.0, -3.0), (0.001, 0.001)] {
            let kl = loss_terms(&x, &x, &array![[m]], &array![[lv]]).unwrap().kl;
            assert!(kl >= 0.0, "kl({m}, {lv}) = {kl}");
            if m == 0.0 && lv == 0.0 {
                assert_eq!(kl, 0.0);
            } else {
                assert!(kl > 0.0, "kl({m}, {lv}) should be positive");
            }
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(4, &config).unwrap();
        let before = model.clone();
        let x = synthetic_blobs(20, 4, 1);
        let trace = model.train(&x, &config).unwrap();
        assert!(trace.is_empty());
        for (a, b) in model
            .encoder()
            .layers()
            .iter()
            .chain(model.decoder().layers())
            .zip(before.encoder().layers().iter().chain(before.decoder().layers()))
        {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.biases, b.biases);
        }
    }

    #[test]
    fn training_reduces_loss_on_blobs() {
        let config = TrainConfig {
            epochs: 100,
            learning_rate: 0.001,
            optimizer: OptimizerChoice::Adam,
            batch_size: 64,
            latent_dim: 2,
            noise: NoiseSpec::Gaussian,
            init_seed: 7,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(4, &config).unwrap();
        let x = synthetic_blobs(200, 4, 2);
        let trace = model.train(&x, &config).unwrap();
        assert_eq!(trace.len(), 100);
        assert!(
            trace[99] < 0.5 * trace[0],
            "loss went from {} to {}",
            trace[0],
            trace[99]
        );
    }

    #[test]
    fn training_is_deterministic_for_both_sources() {
        for noise in [NoiseSpec::Gaussian, NoiseSpec::chaotic_default()] {
            let config = TrainConfig {
                epochs: 10,
                noise: noise.clone(),
                init_seed: 42,
                ..TrainConfig::default()
            };
            let x = synthetic_blobs(50, 3, 3);
            let run = || {
                let mut model = VaeModel::new(3, &config).unwrap();
                model.train(&x, &config).unwrap()
            };
            assert_eq!(run(), run(), "trace must replay for {noise:?}");
        }
    }

    #[test]
    fn same_seed_gives_identical_initial_parameters_across_sources() {
        let gaussian = TrainConfig {
            noise: NoiseSpec::Gaussian,
            init_seed: 5,
            ..TrainConfig::default()
        };
        let chaotic = TrainConfig {
            noise: NoiseSpec::chaotic_default(),
            init_seed: 5,
            ..TrainConfig::default()
        };
        let a = VaeModel::new(6, &gaussian).unwrap();
        let b = VaeModel::new(6, &chaotic).unwrap();
        for (la, lb) in a.encoder().layers().iter().zip(b.encoder().layers()) {
            assert_eq!(la.weights, lb.weights);
        }
        for (la, lb) in a.decoder().layers().iter().zip(b.decoder().layers()) {
            assert_eq!(la.weights, lb.weights);
        }
    }

    #[test]
    fn pinned_noise_makes_sources_bit_identical() {
        // Same init seed, different noise sources, one optimization step with
        // the same explicit eps tensor: parameters must agree bit for bit.
        let x = synthetic_blobs(8, 4, 9);
        let eps = Array2::from_shape_fn((8, 2), |(i, j)| 0.1 + 0.05 * (i as f64) - 0.02 * (j as f64));
        let mut outputs = Vec::new();
        for noise in [NoiseSpec::Gaussian, NoiseSpec::chaotic_default()] {
            let config = TrainConfig {
                noise,
                init_seed: 31,
                ..TrainConfig::default()
            };
            let mut model = VaeModel::new(4, &config).unwrap();
            let mut opt = Optimizer::new(OptimizerKind::Adam, 0.001);
            model.step_with_noise(&x, &eps, &mut opt).unwrap();
            outputs.push(model.reconstruct(&x).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn reconstruct_is_noise_free_and_shape_preserving() {
        let config = TrainConfig {
            epochs: 5,
            init_seed: 17,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(5, &config).unwrap();
        let x = synthetic_blobs(30, 5, 4);
        model.train(&x, &config).unwrap();
        let a = model.reconstruct(&x).unwrap();
        let b = model.reconstruct(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (30, 5));
    }

    #[test]
    fn untrained_zero_model_reconstructs_constant_rows() {
        let model = zero_model(3, 2);
        let x = array![[0.9, 0.1, 0.5], [0.2, 0.2, 0.2]];
        let recon = model.reconstruct(&x).unwrap();
        assert_eq!(recon, Array2::<f64>::zeros((2, 3)));
    }

    #[test]
    fn divergent_training_reports_the_epoch() {
        let config = TrainConfig {
            epochs: 50,
            learning_rate: 1e8,
            optimizer: OptimizerChoice::Sgd,
            momentum: 0.0,
            init_seed: 3,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(4, &config).unwrap();
        let x = synthetic_blobs(40, 4, 5);
        match model.train(&x, &config) {
            Err(VaeError::NonFiniteLoss { epoch }) => assert!(epoch < 50),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let config = TrainConfig {
            total_layers: 5,
            latent_dim: 2,
            activation: Activation::Tanh,
            init_seed: 21,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(6, &config).unwrap();
        let x = synthetic_blobs(6, 6, 8);
        let eps = Array2::from_shape_fn((6, 2), |(i, j)| 0.3 + 0.1 * (i + j) as f64);
        let err = model.grad_check(&x, &eps).unwrap();
        assert!(err < 1e-5, "gradient check error {err}");
    }

    #[test]
    fn architecture_split_and_taper() {
        let (enc, dec) = architecture(8, 2, 5);
        assert_eq!(enc.len() - 1 + dec.len() - 1, 5);
        assert_eq!(*enc.first().unwrap(), 8);
        assert_eq!(*enc.last().unwrap(), 4);
        assert_eq!(*dec.first().unwrap(), 2);
        assert_eq!(*dec.last().unwrap(), 8);
        let (enc7, dec7) = architecture(30, 2, 7);
        assert_eq!(enc7.len() - 1 + dec7.len() - 1, 7);
        // widths taper monotonically toward the latent side
        for pair in enc7[..enc7.len() - 1].windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        for pair in dec7[1..].windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn save_load_round_trip_preserves_scoring() {
        let config = TrainConfig {
            epochs: 3,
            noise: NoiseSpec::chaotic_default(),
            init_seed: 9,
            ..TrainConfig::default()
        };
        let mut model = VaeModel::new(4, &config).unwrap();
        let x = synthetic_blobs(20, 4, 6);
        model.train(&x, &config).unwrap();
        model.set_pipeline_id(Some("fixture".into()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.pipeline_id(), Some("fixture"));
        assert_eq!(loaded.latent_dim(), 2);
        assert_eq!(
            model.reconstruct(&x).unwrap(),
            loaded.reconstruct(&x).unwrap()
        );
        match loaded.noise_spec() {
            NoiseSpec::Chaotic { seed: Some(s), .. } => assert!(s > 0.0 && s < 1.0),
            other => panic!("expected chaotic noise, got {other:?}"),
        }
    }
}
