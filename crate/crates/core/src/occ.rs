//! One-class decision layer: reconstruction-error scores, threshold
//! strategies, classification and the classification-rate (CR) metric.
//!
//! A `DecisionReport` serializes to a stable delimited text form: a
//! `index,score,prediction` CSV body followed by a `#`-prefixed summary
//! block (threshold, strategy, CR). Scores use shortest round-trip f64
//! formatting, so reports are byte-reproducible.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OccError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("threshold strategy needs training scores")]
    MissingTrainScores,
    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),
    #[error("threshold strategy needs the test-set size")]
    MissingTestSize,
    #[error("empty test set")]
    EmptyTestSet,
}

/// How the decision threshold is produced.
///
/// `LiteralNScaled` is the `n * 0.01` rule applied to the test-set size,
/// kept for fidelity even though its scale is incompatible with per-row
/// mean squared errors on normalized data. `TrainPercentile` (default 99)
/// takes a linear-interpolation percentile of the training scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum ThresholdStrategy {
    LiteralNScaled,
    TrainPercentile { p: f64 },
    Constant { c: f64 },
}

impl Default for ThresholdStrategy {
    fn default() -> Self {
        ThresholdStrategy::TrainPercentile { p: 99.0 }
    }
}

impl std::fmt::Display for ThresholdStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdStrategy::LiteralNScaled => write!(f, "literal_n_scaled"),
            ThresholdStrategy::TrainPercentile { p } => write!(f, "train_percentile({p})"),
            ThresholdStrategy::Constant { c } => write!(f, "constant({c})"),
        }
    }
}

impl std::str::FromStr for ThresholdStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "literal_n_scaled" {
            return Ok(ThresholdStrategy::LiteralNScaled);
        }
        if let Some(rest) = s.strip_prefix("train_percentile(").and_then(|r| r.strip_suffix(')')) {
            let p: f64 = rest.parse().map_err(|_| format!("bad percentile `{rest}`"))?;
            return Ok(ThresholdStrategy::TrainPercentile { p });
        }
        if let Some(rest) = s.strip_prefix("constant(").and_then(|r| r.strip_suffix(')')) {
            let c: f64 = rest.parse().map_err(|_| format!("bad constant `{rest}`"))?;
            return Ok(ThresholdStrategy::Constant { c });
        }
        Err(format!("unknown threshold strategy `{s}`"))
    }
}

/// Per-sample scores, resolved threshold, predictions and CR for one
/// evaluation of a frozen model on an all-positive test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionReport {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub threshold_strategy: ThresholdStrategy,
    pub predictions: Vec<u8>,
    pub cr: f64,
}

impl DecisionReport {
    /// Scores an all-positive test set: per-row mean squared reconstruction
    /// error against `threshold_strategy`.
    pub fn evaluate(
        x_test: &Array2<f64>,
        x_recon: &Array2<f64>,
        strategy: ThresholdStrategy,
        train_scores: Option<&[f64]>,
    ) -> Result<DecisionReport, OccError> {
        let scores = decision_scores(x_test, x_recon)?;
        let threshold = resolve_threshold(strategy, train_scores, Some(scores.len()))?;
        let predictions = classify(&scores, threshold);
        let cr = classification_rate(&predictions)?;
        Ok(DecisionReport {
            scores,
            threshold,
            threshold_strategy: strategy,
            predictions,
            cr,
        })
    }

    /// Delimited text form: CSV rows then a `#` summary block.
    pub fn render(&self) -> String {
        let mut out = String::from("index,score,prediction\n");
        for (i, (s, p)) in self.scores.iter().zip(&self.predictions).enumerate() {
            out.push_str(&format!("{i},{s},{p}\n"));
        }
        out.push_str(&format!("# threshold = {}\n", self.threshold));
        out.push_str(&format!("# strategy = {}\n", self.threshold_strategy));
        out.push_str(&format!("# cr = {}\n", self.cr));
        out
    }
}

/// `scores[i] = (1/nf) * sum_j (x[i,j] - x_recon[i,j])^2`.
pub fn decision_scores(x_test: &Array2<f64>, x_recon: &Array2<f64>) -> Result<Vec<f64>, OccError> {
    if x_test.dim() != x_recon.dim() {
        return Err(OccError::ShapeMismatch(format!(
            "test {:?} vs reconstruction {:?}",
            x_test.dim(),
            x_recon.dim()
        )));
    }
    let nf = x_test.ncols() as f64;
    Ok(x_test
        .rows()
        .into_iter()
        .zip(x_recon.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum::<f64>()
                / nf
        })
        .collect())
}

/// Linear-interpolation percentile of `values` (the numpy "linear" method).
fn percentile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in scores"));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Produces the decision threshold for a strategy.
///
/// `LiteralNScaled` needs `n` (the test-set size), `TrainPercentile` needs
/// non-empty training scores.
pub fn resolve_threshold(
    strategy: ThresholdStrategy,
    train_scores: Option<&[f64]>,
    n: Option<usize>,
) -> Result<f64, OccError> {
    match strategy {
        ThresholdStrategy::LiteralNScaled => {
            let n = n.ok_or(OccError::MissingTestSize)?;
            Ok(n as f64 * 0.01)
        }
        ThresholdStrategy::TrainPercentile { p } => {
            if !(0.0..=100.0).contains(&p) {
                return Err(OccError::InvalidPercentile(p));
            }
            let scores = train_scores.filter(|s| !s.is_empty()).ok_or(OccError::MissingTrainScores)?;
            Ok(percentile(scores, p))
        }
        ThresholdStrategy::Constant { c } => Ok(c),
    }
}

/// Prediction 1 iff `score > threshold` (strict).
pub fn classify(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// CR = 100 * flagged / total, valid on an all-positive test set.
pub fn classification_rate(predictions: &[u8]) -> Result<f64, OccError> {
    if predictions.is_empty() {
        return Err(OccError::EmptyTestSet);
    }
    let flagged = predictions.iter().filter(|&&p| p == 1).count();
    Ok(100.0 * flagged as f64 / predictions.len() as f64)
}
