//! Tabular ingestion and preprocessing: CSV parsing, schema-driven encoding
//! (one-hot, ordinal, min-max), class-based one-class splitting, and a
//! synthetic dataset generator for desk-scale experiments.

mod container;
mod pipeline;
mod schema;
mod synth;

pub use container::{read_matrix, write_matrix};
pub use pipeline::{FeatureKind, FeatureSpec, Pipeline};
pub use schema::{ColumnKind, ColumnRule, Schema};
pub use synth::synth_occ;

use ndarray::{Array2, Axis};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` is not covered by the schema (or names a missing column)")]
    UnknownColumn(String),
    #[error("no rows available to fit the pipeline")]
    EmptyTraining,
    #[error("class {0} has no rows; one-class splitting needs both classes")]
    MissingClass(u8),
    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("matrix container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw CSV contents: header row plus string cells.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source: String,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Reads a delimited text file with a header row.
pub fn load_csv(path: &Path) -> Result<RawTable, DataError> {
    let source = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(&source, &e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(&source, &e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&source, &e))?;
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawTable {
        headers,
        rows,
        source,
    })
}

fn csv_error(path: &str, err: &csv::Error) -> DataError {
    let line = err
        .position()
        .map(csv::Position::line)
        .unwrap_or_default();
    DataError::Parse {
        path: path.to_string(),
        line,
        message: err.to_string(),
    }
}

/// A numeric dataset: encoded feature matrix, binary labels (1 = fraud),
/// feature metadata and a provenance tag.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub rows: Array2<f64>,
    pub labels: Vec<u8>,
    pub specs: Vec<FeatureSpec>,
    pub provenance: String,
}

impl TabularDataset {
    /// Partitions rows by label: negatives (class 0) for training, positives
    /// (class 1) for testing. Rows are assumed already normalized.
    pub fn split_by_label(&self) -> Result<(Array2<f64>, Array2<f64>), DataError> {
        let neg: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 0)
            .map(|(i, _)| i)
            .collect();
        let pos: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(i, _)| i)
            .collect();
        if neg.is_empty() {
            return Err(DataError::MissingClass(0));
        }
        if pos.is_empty() {
            return Err(DataError::MissingClass(1));
        }
        Ok((
            self.rows.select(Axis(0), &neg),
            self.rows.select(Axis(0), &pos),
        ))
    }
}

/// Result of the one-class split: pipeline fitted on class-0 rows only,
/// applied to both partitions.
#[derive(Debug)]
pub struct OneClassSplit {
    pub x_train: Array2<f64>,
    pub x_test: Array2<f64>,
    pub pipeline: Pipeline,
}

/// Splits a raw labeled table per the one-class protocol: class-0 rows
/// (normalized) become the training set, class-1 rows the test set.
pub fn split_one_class(table: &RawTable, schema: &Schema) -> Result<OneClassSplit, DataError> {
    let labels = schema.labels(table)?;
    let neg: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 0)
        .map(|(i, _)| i)
        .collect();
    let pos: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(i, _)| i)
        .collect();
    if neg.is_empty() {
        return Err(DataError::MissingClass(0));
    }
    if pos.is_empty() {
        return Err(DataError::MissingClass(1));
    }
    let pipeline = Pipeline::fit(table, schema, &neg)?;
    let x_train = pipeline.transform(table, &neg)?;
    let x_test = pipeline.transform(table, &pos)?;
    Ok(OneClassSplit {
        x_train,
        x_test,
        pipeline,
    })
}
