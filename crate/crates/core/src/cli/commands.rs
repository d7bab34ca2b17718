//! Subcommand implementations: preprocess, train-eval, compare, chaos-dump.
//!
//! Machine-readable outputs are byte-reproducible: shortest round-trip f64
//! formatting, fixed key order in config echoes, and run aggregation sorted
//! by run index regardless of scheduling.

use super::{render_echo, CliError, DatasetSource, ExperimentConfig};
use crate::chaos::{self, ChaoticGenerator, NoiseTransform};
use crate::data::{
    load_csv, read_matrix, split_one_class, synth_occ, write_matrix, Schema,
};
use crate::occ::{decision_scores, DecisionReport};
use crate::stats::{
    aggregate, two_sample_t, welch_t, ModelTag, RunSeries, StatsError, TTestResult, WelchResult,
};
use crate::vae::{save_model, TrainConfig, VaeError, VaeModel};
use ndarray::Array2;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Resolved train/test matrices plus provenance.
struct LoadedData {
    x_train: Array2<f64>,
    x_test: Array2<f64>,
    pipeline_id: Option<String>,
}

fn load_dataset(source: &DatasetSource) -> Result<LoadedData, CliError> {
    match source {
        DatasetSource::Synth {
            seed,
            n_neg,
            n_pos,
            nf,
            shift,
        } => {
            let ds = synth_occ(*seed, *n_neg, *n_pos, *nf, *shift);
            let (x_train, x_test) = ds.split_by_label()?;
            Ok(LoadedData {
                x_train,
                x_test,
                pipeline_id: None,
            })
        }
        DatasetSource::Splits { dir } => {
            let (x_train, train_id) = read_matrix(&dir.join("x_train.mat"))?;
            let (x_test, test_id) = read_matrix(&dir.join("x_test.mat"))?;
            if train_id != test_id {
                return Err(CliError::Input(format!(
                    "split pipeline mismatch: train {train_id:?} vs test {test_id:?}"
                )));
            }
            Ok(LoadedData {
                x_train,
                x_test,
                pipeline_id: train_id,
            })
        }
    }
}

/// Reads a labeled CSV, fits the one-class pipeline on the genuine rows and
/// persists both normalized splits plus the pipeline. Returns
/// `(n_train, n_test, encoded_width)`.
pub fn run_preprocess(
    data: &Path,
    schema_path: &Path,
    out_dir: &Path,
) -> Result<(usize, usize, usize), CliError> {
    let table = load_csv(data)?;
    let schema = Schema::from_file(schema_path)?;
    let split = split_one_class(&table, &schema)?;

    std::fs::create_dir_all(out_dir).map_err(CliError::input)?;
    let id = split.pipeline.id();
    write_matrix(&out_dir.join("x_train.mat"), &split.x_train, Some(&id))?;
    write_matrix(&out_dir.join("x_test.mat"), &split.x_test, Some(&id))?;
    split.pipeline.save(&out_dir.join("pipeline.json"))?;

    let (n_train, n_test) = (split.x_train.nrows(), split.x_test.nrows());
    let width = split.x_train.ncols();
    println!("{} rows read from {}", table.n_rows(), data.display());
    println!("{n_train} train / {n_test} test");
    println!("{width} encoded feature columns");
    println!("pipeline {id}");
    println!("wrote {}", out_dir.display());
    Ok((n_train, n_test, width))
}

struct RunArtifacts {
    report: DecisionReport,
    trace: Vec<f64>,
    model: VaeModel,
}

/// Trains one model with `train_cfg` and scores the positive test set.
fn train_and_score(
    data: &LoadedData,
    train_cfg: &TrainConfig,
    cfg: &ExperimentConfig,
) -> Result<RunArtifacts, CliError> {
    let nf = data.x_train.ncols();
    let mut model = VaeModel::new(nf, train_cfg)?;
    let trace = model.train(&data.x_train, train_cfg).map_err(label_numeric)?;
    model.set_pipeline_id(data.pipeline_id.clone());

    let train_recon = model.reconstruct(&data.x_train)?;
    let train_scores = decision_scores(&data.x_train, &train_recon)?;
    let test_recon = model.reconstruct(&data.x_test)?;
    let report = DecisionReport::evaluate(
        &data.x_test,
        &test_recon,
        cfg.threshold,
        Some(&train_scores),
    )?;
    Ok(RunArtifacts {
        report,
        trace,
        model,
    })
}

fn label_numeric(e: VaeError) -> CliError {
    match e {
        VaeError::NonFiniteLoss { epoch } => {
            CliError::Numeric(format!("non-finite loss at epoch {epoch}: training diverged"))
        }
        other => other.into(),
    }
}

/// Trains a single model per the configuration, writes the decision report,
/// loss trace and model container, and prints the CR.
pub fn run_train_eval(cfg: &ExperimentConfig) -> Result<DecisionReport, CliError> {
    let data = load_dataset(&cfg.dataset)?;
    let train_cfg = cfg.train_for(cfg.model, 0);
    let run = train_and_score(&data, &train_cfg, cfg)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::input)?;
    let stem = format!("{}_{}_run00", cfg.dataset_tag, cfg.model);
    let echo = render_echo(&cfg.echo_pairs());

    let report_path = cfg.out_dir.join(format!("{stem}_report.csv"));
    std::fs::write(&report_path, format!("{echo}{}", run.report.render()))
        .map_err(CliError::input)?;

    let mut trace_text = format!("{echo}epoch,loss\n");
    for (i, l) in run.trace.iter().enumerate() {
        trace_text.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(cfg.out_dir.join(format!("{stem}_trace.csv")), trace_text)
        .map_err(CliError::input)?;
    save_model(&run.model, &cfg.out_dir.join(format!("{stem}_model.json")))?;

    println!("model = {}", cfg.model);
    println!("threshold = {}", run.report.threshold);
    println!("cr = {}", run.report.cr);
    println!("wrote {}", report_path.display());
    Ok(run.report)
}

#[derive(Debug, Clone)]
pub struct SeriesSummary {
    pub series: RunSeries,
    pub mean: f64,
    pub std: f64,
}

/// The Tables-5/6 style outcome of a multi-run comparison.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub dataset_tag: String,
    pub vae: SeriesSummary,
    pub cvae: SeriesSummary,
    /// None when both series are constant and equal (t undefined).
    pub ttest: Option<TTestResult>,
    /// Welch's unequal-variance variant, when requested.
    pub welch: Option<WelchResult>,
}

/// Runs `run_count` independent runs per model (each taking the best CR over
/// the grid, or the single config), aggregates mean/std, applies the pooled
/// t-test and writes the comparison report in text and delimited form.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<ExperimentSummary, CliError> {
    if cfg.run_count < 2 {
        return Err(CliError::Input(format!(
            "compare needs run_count >= 2, got {}",
            cfg.run_count
        )));
    }
    let data = load_dataset(&cfg.dataset)?;

    // (model, run) tasks, explored in a fixed order; scheduling cannot
    // change the result because outputs are keyed by task index.
    let models = [ModelTag::Vae, ModelTag::Cvae];
    let mut tasks = Vec::new();
    for &model in &models {
        for run in 0..cfg.run_count {
            tasks.push((model, run));
        }
    }

    let results: Mutex<Vec<Option<Result<f64, CliError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let jobs = cfg.jobs.max(1).min(tasks.len());

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= tasks.len() {
                    break;
                }
                let (model, run) = tasks[idx];
                let outcome = best_cr_for_run(&data, cfg, model, run);
                results.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().unwrap();
    let mut best: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.run_count); 2];
    for (idx, outcome) in results.into_iter().enumerate() {
        let (model, run) = tasks[idx];
        let cr = outcome.expect("every task was scheduled").map_err(|e| {
            CliError::Numeric(format!("{model} run {run} failed: {e}"))
        })?;
        let slot = if model == ModelTag::Vae { 0 } else { 1 };
        best[slot].push(cr);
    }

    let vae_series = RunSeries::new(ModelTag::Vae, cfg.dataset_tag.clone(), best[0].clone());
    let cvae_series = RunSeries::new(ModelTag::Cvae, cfg.dataset_tag.clone(), best[1].clone());
    let (vae_mean, vae_std) = aggregate(&vae_series).map_err(CliError::input)?;
    let (cvae_mean, cvae_std) = aggregate(&cvae_series).map_err(CliError::input)?;
    let ttest = match two_sample_t(&vae_series, &cvae_series) {
        Ok(t) => Some(t),
        Err(StatsError::ZeroVariance) => None,
        Err(e) => return Err(CliError::input(e)),
    };
    let welch = if cfg.welch && ttest.is_some() {
        Some(welch_t(&vae_series, &cvae_series).map_err(CliError::input)?)
    } else {
        None
    };

    let summary = ExperimentSummary {
        dataset_tag: cfg.dataset_tag.clone(),
        vae: SeriesSummary {
            series: vae_series,
            mean: vae_mean,
            std: vae_std,
        },
        cvae: SeriesSummary {
            series: cvae_series,
            mean: cvae_mean,
            std: cvae_std,
        },
        ttest,
        welch,
    };
    write_comparison(cfg, &summary)?;
    print!("{}", comparison_text(&summary));
    Ok(summary)
}

/// Best CR over the configured grid for one (model, run) pair.
fn best_cr_for_run(
    data: &LoadedData,
    cfg: &ExperimentConfig,
    model: ModelTag,
    run: usize,
) -> Result<f64, CliError> {
    let base = {
        let mut t = cfg.train_for(model, run);
        // grid expansion preserves the run-derived seed and noise source
        t.init_seed = cfg.base_seed + run as u64;
        t
    };
    let combos = match &cfg.grid {
        Some(grid) => grid.expand(&base),
        None => vec![base],
    };
    let mut best = f64::NEG_INFINITY;
    for combo in &combos {
        let run_out = train_and_score(data, combo, cfg)?;
        if run_out.report.cr > best {
            best = run_out.report.cr;
        }
    }
    Ok(best)
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

/// Delimited comparison form: per-model aggregate rows then the test row.
pub fn comparison_csv(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> String {
    let mut out = render_echo(&cfg.echo_pairs());
    out.push_str("dataset,model,mean_cr,std_cr,t,df,p,sig_at_0.05,sig_at_0.01\n");
    for s in [&summary.vae, &summary.cvae] {
        out.push_str(&format!(
            "{},{},{},{},,,,,\n",
            summary.dataset_tag,
            s.series.model_tag,
            fmt_cell(s.mean),
            fmt_cell(s.std)
        ));
    }
    match &summary.ttest {
        Some(t) => out.push_str(&format!(
            "{},vae_vs_cvae,,,{},{},{},{},{}\n",
            summary.dataset_tag,
            fmt_cell(t.t_statistic),
            t.degrees_of_freedom,
            fmt_cell(t.p_value),
            t.significant_at_5pct,
            t.significant_at_1pct
        )),
        None => out.push_str(&format!(
            "{},vae_vs_cvae,,,,,,,\n# note = zero variance: both series constant and equal; t undefined\n",
            summary.dataset_tag
        )),
    }
    if let Some(w) = &summary.welch {
        out.push_str(&format!(
            "{},vae_vs_cvae_welch,,,{},{},{},{},{}\n",
            summary.dataset_tag,
            fmt_cell(w.t_statistic),
            fmt_cell(w.degrees_of_freedom),
            fmt_cell(w.p_value),
            w.p_value < 0.05,
            w.p_value < 0.01
        ));
    }
    out
}

/// Per-run best CR values in run order, for provenance and replay checks.
pub fn runs_csv(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> String {
    let mut out = render_echo(&cfg.echo_pairs());
    out.push_str("dataset,model,run,best_cr\n");
    for s in [&summary.vae, &summary.cvae] {
        for (i, cr) in s.series.best_cr_per_run.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                summary.dataset_tag, s.series.model_tag, i, cr
            ));
        }
    }
    out
}

fn comparison_text(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!("dataset: {}\n", summary.dataset_tag));
    out.push_str(&format!("{:<8} {:>20}\n", "model", "mean CR (std)"));
    for s in [&summary.vae, &summary.cvae] {
        out.push_str(&format!(
            "{:<8} {:>20}\n",
            s.series.model_tag.to_string(),
            format!("{:.2} ({:.2})", s.mean, s.std)
        ));
    }
    match &summary.ttest {
        Some(t) => {
            out.push_str(&format!(
                "vae vs cvae: t = {:.4}, df = {}, p = {:.6e}\n",
                t.t_statistic, t.degrees_of_freedom, t.p_value
            ));
            out.push_str(&format!(
                "significant at 5%: {}; at 1%: {}\n",
                t.significant_at_5pct, t.significant_at_1pct
            ));
        }
        None => {
            out.push_str("vae vs cvae: t undefined (both series constant and equal)\n");
        }
    }
    if let Some(w) = &summary.welch {
        out.push_str(&format!(
            "welch: t = {:.4}, df = {:.2}, p = {:.6e}\n",
            w.t_statistic, w.degrees_of_freedom, w.p_value
        ));
    }
    out
}

fn write_comparison(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(CliError::input)?;
    let tag = &cfg.dataset_tag;
    std::fs::write(
        cfg.out_dir.join(format!("comparison_{tag}.csv")),
        comparison_csv(cfg, summary),
    )
    .map_err(CliError::input)?;
    std::fs::write(
        cfg.out_dir.join(format!("comparison_{tag}.txt")),
        comparison_text(summary),
    )
    .map_err(CliError::input)?;
    std::fs::write(
        cfg.out_dir.join(format!("runs_{tag}.csv")),
        runs_csv(cfg, summary),
    )
    .map_err(CliError::input)?;
    Ok(())
}

/// Emits `count` iterates, one per line, at full 64-bit round-trip precision.
/// With `out = None` the stream goes to stdout.
pub fn run_chaos_dump(
    seed: f64,
    lambda: f64,
    burn_in: u64,
    count: usize,
    transform: NoiseTransform,
    out: Option<&Path>,
) -> Result<(), CliError> {
    chaos::seed_validate(seed, lambda, chaos::DEFAULT_PROBE_LEN).map_err(CliError::input)?;
    let mut gen = ChaoticGenerator::new(lambda, seed, burn_in).map_err(CliError::input)?;
    let mut buf = String::new();
    for _ in 0..count {
        let v = gen.next_value().map_err(CliError::numeric)?;
        buf.push_str(&format!("{}\n", transform.apply(v)));
    }
    match out {
        Some(path) => std::fs::write(path, buf).map_err(CliError::input)?,
        None => print!("{buf}"),
    }
    Ok(())
}
