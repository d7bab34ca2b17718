//! Experiment orchestration: resolved configuration, the hyperparameter
//! grid, and the subcommand implementations behind the `cvae` binary.
//!
//! Config files are flat `key = value` documents; lists use `[a, b, c]`.
//! Flags override file values, which override defaults. Unknown keys are
//! rejected. The full grammar is documented in the repository README.

mod commands;

pub use commands::{
    run_chaos_dump, run_compare, run_preprocess, run_train_eval, ExperimentSummary, SeriesSummary,
};

use crate::chaos::NoiseTransform;
use crate::nn::Activation;
use crate::occ::ThresholdStrategy;
use crate::stats::ModelTag;
use crate::vae::{NoiseSpec, OptimizerChoice, TrainConfig, VaeError};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// CLI-level failure, split by exit code: input/config problems exit 2,
/// numerical failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<crate::data::DataError> for CliError {
    fn from(e: crate::data::DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<crate::occ::OccError> for CliError {
    fn from(e: crate::occ::OccError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match &e {
            VaeError::Config(_) => CliError::Input(e.to_string()),
            VaeError::Chaos(crate::chaos::ChaosError::SeedRejected { .. })
            | VaeError::Chaos(crate::chaos::ChaosError::LambdaOutOfRange(_)) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

/// Where the train/test matrices come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synth {
        seed: u64,
        n_neg: usize,
        n_pos: usize,
        nf: usize,
        shift: f64,
    },
    Splits {
        dir: PathBuf,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth {
            seed: 7,
            n_neg: 500,
            n_pos: 50,
            nf: 8,
            shift: 0.4,
        }
    }
}

/// Hyperparameter lists expanded into a full cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub momenta: Vec<f64>,
    pub epochs: Vec<usize>,
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerChoice>,
    pub total_layers: Vec<usize>,
}

impl Grid {
    /// The published hyperparameter table: 2 x 3 x 5 x 3 x 2 x 2 = 360
    /// combinations.
    pub fn paper() -> Grid {
        Grid {
            learning_rates: vec![0.001, 0.0005],
            momenta: vec![0.005, 0.007, 0.009],
            epochs: vec![50, 75, 100, 250, 150],
            activations: vec![Activation::Relu, Activation::Tanh, Activation::LeakyRelu],
            optimizers: vec![OptimizerChoice::Adam, OptimizerChoice::Sgd],
            total_layers: vec![5, 7],
        }
    }

    pub fn len(&self) -> usize {
        self.learning_rates.len()
            * self.momenta.len()
            * self.epochs.len()
            * self.activations.len()
            * self.optimizers.len()
            * self.total_layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in a fixed nesting order (lr, momentum, epochs,
    /// activation, optimizer, layers), each combo inheriting the remaining
    /// fields from `base`.
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.learning_rates {
            for &mom in &self.momenta {
                for &ep in &self.epochs {
                    for &act in &self.activations {
                        for &opt in &self.optimizers {
                            for &layers in &self.total_layers {
                                let mut cfg = base.clone();
                                cfg.learning_rate = lr;
                                cfg.momentum = mom;
                                cfg.epochs = ep;
                                cfg.activation = act;
                                cfg.optimizer = opt;
                                cfg.total_layers = layers;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub dataset_tag: String,
    pub model: ModelTag,
    pub train: TrainConfig,
    pub chaos_lambda: f64,
    pub chaos_burn_in: u64,
    pub noise_transform: NoiseTransform,
    pub threshold: ThresholdStrategy,
    pub run_count: usize,
    pub base_seed: u64,
    pub grid: Option<Grid>,
    pub jobs: usize,
    /// Also report Welch's unequal-variance test next to the pooled one.
    pub welch: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            dataset_tag: "synthetic".into(),
            model: ModelTag::Cvae,
            train: TrainConfig::default(),
            chaos_lambda: crate::chaos::LAMBDA_DEFAULT,
            chaos_burn_in: crate::chaos::DEFAULT_BURN_IN,
            noise_transform: NoiseTransform::Raw,
            threshold: ThresholdStrategy::default(),
            run_count: 15,
            base_seed: 0,
            grid: None,
            jobs: 1,
            welch: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Noise spec for a given model tag under this configuration.
    pub fn noise_for(&self, model: ModelTag) -> NoiseSpec {
        match model {
            ModelTag::Vae => NoiseSpec::Gaussian,
            ModelTag::Cvae => NoiseSpec::Chaotic {
                lambda: self.chaos_lambda,
                seed: None,
                burn_in: self.chaos_burn_in,
                transform: self.noise_transform,
            },
        }
    }

    /// Train config for one run of one model: per-run seeds are
    /// `base_seed + run_index`, shared by parameter init and the noise
    /// stream.
    pub fn train_for(&self, model: ModelTag, run_index: usize) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.noise = self.noise_for(model);
        cfg.init_seed = self.base_seed + run_index as u64;
        cfg
    }

    /// Key/value pairs echoed into every output artifact.
    pub fn echo_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        match &self.dataset {
            DatasetSource::Synth {
                seed,
                n_neg,
                n_pos,
                nf,
                shift,
            } => {
                push("dataset", "synthetic".into());
                push("synth_seed", seed.to_string());
                push("synth_neg", n_neg.to_string());
                push("synth_pos", n_pos.to_string());
                push("synth_features", nf.to_string());
                push("synth_shift", shift.to_string());
            }
            DatasetSource::Splits { dir } => {
                push("dataset", "splits".into());
                push("splits_dir", dir.display().to_string());
            }
        }
        push("dataset_tag", self.dataset_tag.clone());
        push("model", self.model.to_string());
        push("epochs", self.train.epochs.to_string());
        push("learning_rate", self.train.learning_rate.to_string());
        push("momentum", self.train.momentum.to_string());
        push("activation", self.train.activation.to_string());
        push("optimizer", self.train.optimizer.to_string());
        push("total_layers", self.train.total_layers.to_string());
        push("batch_size", self.train.batch_size.to_string());
        push("latent_dim", self.train.latent_dim.to_string());
        push("chaos_lambda", self.chaos_lambda.to_string());
        push("chaos_burn_in", self.chaos_burn_in.to_string());
        push("noise_transform", self.noise_transform.to_string());
        push("threshold", self.threshold.to_string());
        push("run_count", self.run_count.to_string());
        push("base_seed", self.base_seed.to_string());
        push("welch", self.welch.to_string());
        // jobs is deliberately not echoed: scheduling cannot change results,
        // and reports must be byte-identical across --jobs settings.
        match &self.grid {
            None => push("grid", "single_config".into()),
            Some(g) => {
                // Echoed in config-file list syntax so an artifact's header
                // is sufficient to reproduce the run.
                let list = |items: Vec<String>| format!("[{}]", items.join(", "));
                push("grid.learning_rate", list(g.learning_rates.iter().map(f64::to_string).collect()));
                push("grid.momentum", list(g.momenta.iter().map(f64::to_string).collect()));
                push("grid.epochs", list(g.epochs.iter().map(usize::to_string).collect()));
                push("grid.activation", list(g.activations.iter().map(ToString::to_string).collect()));
                push("grid.optimizer", list(g.optimizers.iter().map(ToString::to_string).collect()));
                push("grid.total_layers", list(g.total_layers.iter().map(usize::to_string).collect()));
                push("grid.combinations", g.len().to_string());
            }
        }
        pairs
    }
}

/// `# key = value` block prepended to report files.
pub fn render_echo(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

/// One parsed `key = value` line.
#[derive(Debug)]
struct KvEntry {
    key: String,
    value: String,
    line: usize,
    used: std::cell::Cell<bool>,
}

/// Flat key-value config document.
#[derive(Debug, Default)]
pub struct KvDoc {
    entries: Vec<KvEntry>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<KvDoc, CliError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!("config line {}: expected `key = value`", idx + 1))
            })?;
            entries.push(KvEntry {
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line: idx + 1,
                used: std::cell::Cell::new(false),
            });
        }
        Ok(KvDoc { entries })
    }

    pub fn from_file(path: &Path) -> Result<KvDoc, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        KvDoc::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&KvEntry> {
        let entry = self.entries.iter().rev().find(|e| e.key == key);
        if let Some(e) = entry {
            e.used.set(true);
        }
        entry
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                CliError::Input(format!(
                    "config line {}: bad value for `{key}`: {err}",
                    e.line
                ))
            }),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.raw(key) else {
            return Ok(None);
        };
        let inner = e
            .value
            .strip_prefix('[')
            .and_then(|v| v.strip_suffix(']'))
            .ok_or_else(|| {
                CliError::Input(format!(
                    "config line {}: `{key}` expects a [a, b, c] list",
                    e.line
                ))
            })?;
        let mut out = Vec::new();
        for item in inner.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            out.push(item.parse::<T>().map_err(|err| {
                CliError::Input(format!(
                    "config line {}: bad list item `{item}` for `{key}`: {err}",
                    e.line
                ))
            })?);
        }
        if out.is_empty() {
            return Err(CliError::Input(format!(
                "config line {}: `{key}` list is empty",
                e.line
            )));
        }
        Ok(Some(out))
    }

    /// Fails on typo'd keys nothing consumed.
    pub fn check_all_used(&self) -> Result<(), CliError> {
        for e in &self.entries {
            if !e.used.get() {
                return Err(CliError::Input(format!(
                    "config line {}: unknown key `{}`",
                    e.line, e.key
                )));
            }
        }
        Ok(())
    }
}

/// Builds the experiment configuration from an optional config file; flag
/// overrides are applied by the binary afterwards.
pub fn resolve_config(file: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    let Some(path) = file else {
        return Ok(cfg);
    };
    let doc = KvDoc::from_file(path)?;

    if let Some(kind) = doc.get::<String>("dataset")? {
        match kind.as_str() {
            "synthetic" => cfg.dataset = DatasetSource::default(),
            "splits" => {
                let dir: String = doc.get("splits_dir")?.ok_or_else(|| {
                    CliError::Input("dataset = splits requires `splits_dir`".into())
                })?;
                cfg.dataset = DatasetSource::Splits { dir: dir.into() };
            }
            other => {
                return Err(CliError::Input(format!(
                    "unknown dataset kind `{other}` (expected synthetic or splits)"
                )))
            }
        }
    }
    if let DatasetSource::Synth {
        seed,
        n_neg,
        n_pos,
        nf,
        shift,
    } = &mut cfg.dataset
    {
        if let Some(v) = doc.get("synth_seed")? {
            *seed = v;
        }
        if let Some(v) = doc.get("synth_neg")? {
            *n_neg = v;
        }
        if let Some(v) = doc.get("synth_pos")? {
            *n_pos = v;
        }
        if let Some(v) = doc.get("synth_features")? {
            *nf = v;
        }
        if let Some(v) = doc.get("synth_shift")? {
            *shift = v;
        }
    } else {
        // consume harmlessly so unused-key detection stays accurate
        for k in ["synth_seed", "synth_neg", "synth_pos", "synth_features", "synth_shift"] {
            let _ = doc.get::<String>(k)?;
        }
    }
    if let Some(v) = doc.get("dataset_tag")? {
        cfg.dataset_tag = v;
    } else if let DatasetSource::Splits { dir } = &cfg.dataset {
        if let Some(name) = dir.file_name().and_then(|n| n.to_str()) {
            cfg.dataset_tag = name.to_string();
        }
    }
    if let Some(v) = doc.get("model")? {
        cfg.model = v;
    }
    if let Some(v) = doc.get("epochs")? {
        cfg.train.epochs = v;
    }
    if let Some(v) = doc.get("learning_rate")? {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = doc.get("momentum")? {
        cfg.train.momentum = v;
    }
    if let Some(v) = doc.get("activation")? {
        cfg.train.activation = v;
    }
    if let Some(v) = doc.get("optimizer")? {
        cfg.train.optimizer = v;
    }
    if let Some(v) = doc.get("total_layers")? {
        cfg.train.total_layers = v;
    }
    if let Some(v) = doc.get("batch_size")? {
        cfg.train.batch_size = v;
    }
    if let Some(v) = doc.get("latent_dim")? {
        cfg.train.latent_dim = v;
    }
    if let Some(v) = doc.get("chaos_lambda")? {
        cfg.chaos_lambda = v;
    }
    if let Some(v) = doc.get("chaos_burn_in")? {
        cfg.chaos_burn_in = v;
    }
    if let Some(v) = doc.get("noise_transform")? {
        cfg.noise_transform = v;
    }
    if let Some(v) = doc.get("threshold")? {
        cfg.threshold = v;
    }
    if let Some(v) = doc.get("run_count")? {
        cfg.run_count = v;
    }
    if let Some(v) = doc.get("base_seed")? {
        cfg.base_seed = v;
    }
    if let Some(v) = doc.get("jobs")? {
        cfg.jobs = v;
    }
    if let Some(v) = doc.get("welch")? {
        cfg.welch = v;
    }
    if let Some(v) = doc.get::<String>("out_dir")? {
        cfg.out_dir = v.into();
    }

    let lr = doc.get_list::<f64>("grid.learning_rate")?;
    let mom = doc.get_list::<f64>("grid.momentum")?;
    let ep = doc.get_list::<usize>("grid.epochs")?;
    let act = doc.get_list::<Activation>("grid.activation")?;
    let opt = doc.get_list::<OptimizerChoice>("grid.optimizer")?;
    let layers = doc.get_list::<usize>("grid.total_layers")?;
    if lr.is_some() || mom.is_some() || ep.is_some() || act.is_some() || opt.is_some() || layers.is_some()
    {
        let base = &cfg.train;
        cfg.grid = Some(Grid {
            learning_rates: lr.unwrap_or_else(|| vec![base.learning_rate]),
            momenta: mom.unwrap_or_else(|| vec![base.momentum]),
            epochs: ep.unwrap_or_else(|| vec![base.epochs]),
            activations: act.unwrap_or_else(|| vec![base.activation]),
            optimizers: opt.unwrap_or_else(|| vec![base.optimizer]),
            total_layers: layers.unwrap_or_else(|| vec![base.total_layers]),
        });
    }

    doc.check_all_used()?;
    Ok(cfg)
}
