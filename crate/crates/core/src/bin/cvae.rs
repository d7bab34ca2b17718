//! `cvae` — train and evaluate chaotic / Gaussian VAE one-class classifiers.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical
//! failure (divergent training, degenerate chaotic orbit).

use clap::{Args, Parser, Subcommand};
use cvae_core::chaos::NoiseTransform;
use cvae_core::cli::{
    resolve_config, run_chaos_dump, run_compare, run_preprocess, run_train_eval, CliError,
    DatasetSource, ExperimentConfig, Grid,
};
use cvae_core::nn::Activation;
use cvae_core::occ::ThresholdStrategy;
use cvae_core::stats::ModelTag;
use cvae_core::vae::OptimizerChoice;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cvae",
    about = "Chaotic VAE one-class classifier for imbalanced fraud detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the preprocessing pipeline on genuine rows and persist the
    /// normalized one-class splits.
    Preprocess {
        /// Labeled CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Column schema file (see README for the grammar).
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train one model and score the positive test set.
    TrainEval {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the multi-run VAE vs C-VAE comparison protocol.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads for independent runs.
        #[arg(long)]
        jobs: Option<usize>,
        /// Also report Welch's unequal-variance t-test.
        #[arg(long, default_value_t = false)]
        welch: bool,
    },
    /// Print logistic-map iterates, one per line.
    ChaosDump {
        #[arg(long)]
        seed: f64,
        #[arg(long, default_value_t = 4.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        burn_in: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value = "raw")]
        transform: NoiseTransform,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    /// Flat key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory produced by `preprocess` (switches the dataset source).
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    dataset_tag: Option<String>,
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long)]
    synth_neg: Option<usize>,
    #[arg(long)]
    synth_pos: Option<usize>,
    #[arg(long)]
    synth_features: Option<usize>,
    #[arg(long)]
    synth_shift: Option<f64>,
    /// vae (Gaussian noise) or cvae (logistic-map noise).
    #[arg(long)]
    model: Option<ModelTag>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    optimizer: Option<OptimizerChoice>,
    #[arg(long)]
    total_layers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    chaos_lambda: Option<f64>,
    #[arg(long)]
    chaos_burn_in: Option<u64>,
    #[arg(long)]
    noise_transform: Option<NoiseTransform>,
    /// literal_n_scaled | train_percentile(p) | constant(c)
    #[arg(long)]
    threshold: Option<ThresholdStrategy>,
    #[arg(long)]
    run_count: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Expand the full published hyperparameter grid (360 combinations).
    #[arg(long, default_value_t = false)]
    paper_grid: bool,
    /// Ignore any configured grid and train the single base config.
    #[arg(long, default_value_t = false)]
    single_config: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(dir) = &self.splits {
            cfg.dataset = DatasetSource::Splits { dir: dir.clone() };
            if self.dataset_tag.is_none() && cfg.dataset_tag == "synthetic" {
                if let Some(name) = dir.file_name().and_then(|n| n.to_str()) {
                    cfg.dataset_tag = name.to_string();
                }
            }
        }
        let synth_override = self.synth_seed.is_some()
            || self.synth_neg.is_some()
            || self.synth_pos.is_some()
            || self.synth_features.is_some()
            || self.synth_shift.is_some();
        if synth_override {
            if let DatasetSource::Synth {
                seed,
                n_neg,
                n_pos,
                nf,
                shift,
            } = &mut cfg.dataset
            {
                if let Some(v) = self.synth_seed {
                    *seed = v;
                }
                if let Some(v) = self.synth_neg {
                    *n_neg = v;
                }
                if let Some(v) = self.synth_pos {
                    *n_pos = v;
                }
                if let Some(v) = self.synth_features {
                    *nf = v;
                }
                if let Some(v) = self.synth_shift {
                    *shift = v;
                }
            } else {
                return Err(CliError::Input(
                    "synth-* flags conflict with a splits dataset".into(),
                ));
            }
        }
        if let Some(v) = &self.dataset_tag {
            cfg.dataset_tag = v.clone();
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            cfg.train.momentum = v;
        }
        if let Some(v) = self.activation {
            cfg.train.activation = v;
        }
        if let Some(v) = self.optimizer {
            cfg.train.optimizer = v;
        }
        if let Some(v) = self.total_layers {
            cfg.train.total_layers = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.latent_dim {
            cfg.train.latent_dim = v;
        }
        if let Some(v) = self.chaos_lambda {
            cfg.chaos_lambda = v;
        }
        if let Some(v) = self.chaos_burn_in {
            cfg.chaos_burn_in = v;
        }
        if let Some(v) = self.noise_transform {
            cfg.noise_transform = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.run_count {
            cfg.run_count = v;
        }
        if let Some(v) = self.base_seed {
            cfg.base_seed = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if self.paper_grid && self.single_config {
            return Err(CliError::Input(
                "--paper-grid and --single-config are mutually exclusive".into(),
            ));
        }
        if self.paper_grid {
            cfg.grid = Some(Grid::paper());
        }
        if self.single_config {
            cfg.grid = None;
        }
        Ok(())
    }

    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = resolve_config(self.config.as_deref())?;
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess {
            data,
            schema,
            out_dir,
        } => {
            run_preprocess(&data, &schema, &out_dir)?;
            Ok(())
        }
        Command::TrainEval { overrides } => {
            let cfg = overrides.resolve()?;
            run_train_eval(&cfg)?;
            Ok(())
        }
        Command::Compare {
            overrides,
            jobs,
            welch,
        } => {
            let mut cfg = overrides.resolve()?;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if welch {
                cfg.welch = true;
            }
            run_compare(&cfg)?;
            Ok(())
        }
        Command::ChaosDump {
            seed,
            lambda,
            burn_in,
            count,
            transform,
            out,
        } => run_chaos_dump(seed, lambda, burn_in, count, transform, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
