//! Logistic-map chaotic sequence generation and empirical distribution checks.
//!
//! The generator iterates `x_{t+1} = lambda * (x_t * (1 - x_t))` in 64-bit
//! floating point. For `lambda = 4` the long-run distribution of the iterates
//! is the arcsine law with density `1 / (pi * sqrt(x (1 - x)))`, mean `1/2`
//! and variance `1/8`.

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

/// Lower edge of the chaotic regime for the logistic map.
pub const LAMBDA_MIN: f64 = 3.56;
/// Control parameter used throughout the experiments.
pub const LAMBDA_DEFAULT: f64 = 4.0;
/// Iterates discarded before the orbit is considered settled.
pub const DEFAULT_BURN_IN: u64 = 100;
/// Probe length used by seed validation.
pub const DEFAULT_PROBE_LEN: usize = 1000;
/// Margin keeping probe iterates away from the absorbing endpoints.
const PROBE_EPS: f64 = 1e-12;
/// Two iterates closer than this are treated as a revisit (period detection).
const REVISIT_TOL: f64 = 1e-12;
/// Consecutive rejections tolerated before giving up on a lambda.
const MAX_SEED_ATTEMPTS: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("lambda {0} outside the chaotic regime ({LAMBDA_MIN}, 4]")]
    LambdaOutOfRange(f64),
    #[error("degenerate orbit at step {step}: state {state} left (0,1) or hit a fixed point")]
    DegenerateOrbit { state: f64, step: u64 },
    #[error("seed {seed} rejected: {reason}")]
    SeedRejected { seed: f64, reason: &'static str },
    #[error("no valid seed found after {0} consecutive rejections (check lambda)")]
    SeedExhausted(u32),
    #[error("empty sample")]
    EmptySample,
}

/// How raw iterates are mapped before being used as latent noise.
///
/// `Standardized` subtracts the analytic mean `1/2` and divides by the
/// analytic standard deviation `sqrt(1/8)` of the lambda = 4 invariant
/// density, so the output has zero mean and unit variance in the long run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTransform {
    #[default]
    Raw,
    Standardized,
}

impl NoiseTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            NoiseTransform::Raw => x,
            NoiseTransform::Standardized => (x - 0.5) / 0.125_f64.sqrt(),
        }
    }
}

impl std::fmt::Display for NoiseTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseTransform::Raw => write!(f, "raw"),
            NoiseTransform::Standardized => write!(f, "standardized"),
        }
    }
}

impl std::str::FromStr for NoiseTransform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(NoiseTransform::Raw),
            "standardized" => Ok(NoiseTransform::Standardized),
            other => Err(format!("unknown noise transform `{other}`")),
        }
    }
}

/// Stateful logistic-map iterator.
///
/// Identical `(lambda, seed, burn_in)` always reproduces the same sequence
/// bit for bit; all iteration is plain f64 arithmetic with a fixed
/// evaluation order.
#[derive(Debug, Clone)]
pub struct ChaoticGenerator {
    lambda: f64,
    state: f64,
    seed: f64,
    burn_in: u64,
    steps_emitted: u64,
}

impl ChaoticGenerator {
    /// Builds a generator after validating the seed with the default probe.
    pub fn new(lambda: f64, seed: f64, burn_in: u64) -> Result<Self, ChaosError> {
        check_lambda(lambda)?;
        let seed = seed_validate(seed, lambda, DEFAULT_PROBE_LEN)?;
        let mut gen = ChaoticGenerator {
            lambda,
            state: seed,
            seed,
            burn_in,
            steps_emitted: 0,
        };
        for _ in 0..burn_in {
            gen.advance()?;
        }
        gen.steps_emitted = 0;
        Ok(gen)
    }

    /// Builds a generator with a seed resampled from `rng` until one passes
    /// validation. Fails with `SeedExhausted` after 100 rejections.
    pub fn with_random_seed<R: Rng + ?Sized>(
        lambda: f64,
        burn_in: u64,
        rng: &mut R,
    ) -> Result<Self, ChaosError> {
        check_lambda(lambda)?;
        let seed = resample_seed(lambda, DEFAULT_PROBE_LEN, rng)?;
        ChaoticGenerator::new(lambda, seed, burn_in)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> f64 {
        self.seed
    }

    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    pub fn state(&self) -> f64 {
        self.state
    }

    pub fn steps_emitted(&self) -> u64 {
        self.steps_emitted
    }

    fn advance(&mut self) -> Result<f64, ChaosError> {
        // Evaluation order is fixed: lambda * (x * (1 - x)).
        let next = self.lambda * (self.state * (1.0 - self.state));
        if !(next > 0.0 && next < 1.0) || next == self.state {
            return Err(ChaosError::DegenerateOrbit {
                state: next,
                step: self.steps_emitted,
            });
        }
        self.state = next;
        Ok(next)
    }

    /// Emits the next iterate `x_{t+1} = lambda * x_t * (1 - x_t)`.
    pub fn next_value(&mut self) -> Result<f64, ChaosError> {
        let v = self.advance()?;
        self.steps_emitted += 1;
        Ok(v)
    }

    /// Fills a `rows x cols` matrix in row-major order with consecutive
    /// iterates mapped through `transform`.
    pub fn sample_noise(
        &mut self,
        transform: NoiseTransform,
        rows: usize,
        cols: usize,
    ) -> Result<Array2<f64>, ChaosError> {
        let mut out = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = transform.apply(self.next_value()?);
            }
        }
        Ok(out)
    }

    /// Emits `n` raw iterates into a vector.
    pub fn take_raw(&mut self, n: usize) -> Result<Vec<f64>, ChaosError> {
        (0..n).map(|_| self.next_value()).collect()
    }

    #[cfg(test)]
    fn unchecked(lambda: f64, state: f64) -> Self {
        ChaoticGenerator {
            lambda,
            state,
            seed: state,
            burn_in: 0,
            steps_emitted: 0,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<(), ChaosError> {
    if !(lambda > LAMBDA_MIN && lambda <= 4.0) {
        return Err(ChaosError::LambdaOutOfRange(lambda));
    }
    Ok(())
}

/// Accepts `seed` iff a `probe_len`-step orbit stays strictly inside
/// `(1e-12, 1 - 1e-12)` and never revisits an earlier iterate within 1e-12.
/// The revisit check catches exact fixed points (0.75 at lambda = 4),
/// pre-periodic seeds (0.25, 0.5) and periodic windows at lambda < 4.
pub fn seed_validate(seed: f64, lambda: f64, probe_len: usize) -> Result<f64, ChaosError> {
    check_lambda(lambda)?;
    let reject = |reason| ChaosError::SeedRejected { seed, reason };
    if !(seed > 0.0 && seed < 1.0) {
        return Err(reject("seed not strictly inside (0,1)"));
    }
    let mut orbit = Vec::with_capacity(probe_len + 1);
    orbit.push(seed);
    let mut x = seed;
    for _ in 0..probe_len {
        x = lambda * (x * (1.0 - x));
        if !(x > PROBE_EPS && x < 1.0 - PROBE_EPS) {
            return Err(reject("orbit left the open unit interval"));
        }
        if orbit.iter().any(|&prev| (prev - x).abs() < REVISIT_TOL) {
            return Err(reject("orbit revisits an earlier iterate (periodic)"));
        }
        orbit.push(x);
    }
    Ok(seed)
}

/// Draws uniform seeds from (0.01, 0.99) until one validates.
pub fn resample_seed<R: Rng + ?Sized>(
    lambda: f64,
    probe_len: usize,
    rng: &mut R,
) -> Result<f64, ChaosError> {
    for _ in 0..MAX_SEED_ATTEMPTS {
        let candidate = rng.random_range(0.01..0.99);
        if let Ok(seed) = seed_validate(candidate, lambda, probe_len) {
            return Ok(seed);
        }
    }
    Err(ChaosError::SeedExhausted(MAX_SEED_ATTEMPTS))
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against `cdf`:
/// `D = max_i max(F(x_i) - i/n, (i+1)/n - F(x_i))` over the sorted sample.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> Result<f64, ChaosError>
where
    F: Fn(f64) -> f64,
{
    if samples.is_empty() {
        return Err(ChaosError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let below = f - i as f64 / n;
        let above = (i + 1) as f64 / n - f;
        d = d.max(below.abs()).max(above.abs());
    }
    Ok(d)
}

/// CDF of the lambda = 4 invariant (arcsine) density:
/// `F(x) = (2/pi) * asin(sqrt(x))`, clamped outside [0,1].
pub fn arcsine_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        std::f64::consts::FRAC_2_PI * x.sqrt().asin()
    }
}

/// CDF of the uniform distribution on [0,1].
pub fn uniform_cdf(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}
