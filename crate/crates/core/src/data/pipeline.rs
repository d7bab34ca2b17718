//! Fitted preprocessing pipeline: min-max scaling for numericals, one-hot
//! for categoricals (vocabulary fitted on the training rows), declared-order
//! index scaling for ordinals. Every encoded cell lands in [0, 1].

use super::schema::{ColumnKind, Schema};
use super::{DataError, RawTable};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const PIPELINE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numerical,
    Categorical,
    Ordinal,
}

/// Per-feature metadata after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Fitted vocabulary (categorical) or declared order (ordinal).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    /// Fitted (min, max) for numerical features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl FeatureSpec {
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            FeatureKind::Numerical | FeatureKind::Ordinal => 1,
            FeatureKind::Categorical => self.categories.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    format_version: u32,
    specs: Vec<FeatureSpec>,
    /// Raw-table column name backing each spec.
    source_columns: Vec<String>,
    label_column: String,
    positive_label: String,
}

impl Pipeline {
    /// Fits per-feature statistics on `fit_rows` (the class-0 rows under the
    /// one-class protocol). Categorical vocabularies are collected in first
    /// appearance order; ordinal orders come from the schema.
    pub fn fit(table: &RawTable, schema: &Schema, fit_rows: &[usize]) -> Result<Pipeline, DataError> {
        schema.check_against(table)?;
        if fit_rows.is_empty() {
            return Err(DataError::EmptyTraining);
        }
        let mut specs = Vec::new();
        let mut source_columns = Vec::new();
        for (col, header) in table.headers.iter().enumerate() {
            let rule = schema.rule(header).expect("coverage checked above");
            let spec = match &rule.kind {
                ColumnKind::Drop | ColumnKind::Label => continue,
                ColumnKind::Numerical => {
                    let mut min = f64::INFINITY;
                    let mut max = f64::NEG_INFINITY;
                    for &r in fit_rows {
                        let v = parse_number(table, r, col, header)?;
                        min = min.min(v);
                        max = max.max(v);
                    }
                    FeatureSpec {
                        name: header.clone(),
                        kind: FeatureKind::Numerical,
                        categories: Vec::new(),
                        range: Some((min, max)),
                    }
                }
                ColumnKind::Categorical => {
                    let mut categories = Vec::new();
                    for &r in fit_rows {
                        let v = &table.rows[r][col];
                        if !categories.iter().any(|c| c == v) {
                            categories.push(v.clone());
                        }
                    }
                    FeatureSpec {
                        name: header.clone(),
                        kind: FeatureKind::Categorical,
                        categories,
                        range: None,
                    }
                }
                ColumnKind::Ordinal(order) => FeatureSpec {
                    name: header.clone(),
                    kind: FeatureKind::Ordinal,
                    categories: order.clone(),
                    range: None,
                },
            };
            specs.push(spec);
            source_columns.push(header.clone());
        }
        Ok(Pipeline {
            format_version: PIPELINE_FORMAT_VERSION,
            specs,
            source_columns,
            label_column: schema.label_column().to_string(),
            positive_label: schema.positive_label.clone(),
        })
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn encoded_width(&self) -> usize {
        self.specs.iter().map(FeatureSpec::encoded_width).sum()
    }

    /// Encodes the selected rows into an `len(rows) x encoded_width` matrix.
    ///
    /// Numerical cells are min-max scaled with the fitted range then clipped
    /// to [0, 1]; a degenerate (constant) fitted range maps to 0.0. Unseen
    /// categorical values produce an all-zeros one-hot block; unseen ordinal
    /// values map to 0.0.
    pub fn transform(&self, table: &RawTable, rows: &[usize]) -> Result<Array2<f64>, DataError> {
        let width = self.encoded_width();
        let mut out = Array2::zeros((rows.len(), width));
        for (out_row, &r) in rows.iter().enumerate() {
            let mut cursor = 0;
            for (spec, source) in self.specs.iter().zip(&self.source_columns) {
                let col = table
                    .column_index(source)
                    .ok_or_else(|| DataError::UnknownColumn(source.clone()))?;
                match spec.kind {
                    FeatureKind::Numerical => {
                        let v = parse_number(table, r, col, source)?;
                        let (min, max) = spec.range.expect("numerical specs carry a range");
                        let scaled = if max > min { (v - min) / (max - min) } else { 0.0 };
                        out[(out_row, cursor)] = scaled.clamp(0.0, 1.0);
                        cursor += 1;
                    }
                    FeatureKind::Categorical => {
                        let v = &table.rows[r][col];
                        if let Some(idx) = spec.categories.iter().position(|c| c == v) {
                            out[(out_row, cursor + idx)] = 1.0;
                        }
                        cursor += spec.categories.len();
                    }
                    FeatureKind::Ordinal => {
                        let v = &table.rows[r][col];
                        let k = spec.categories.len();
                        let value = match spec.categories.iter().position(|c| c == v) {
                            Some(idx) if k > 1 => idx as f64 / (k - 1) as f64,
                            _ => 0.0,
                        };
                        out[(out_row, cursor)] = value;
                        cursor += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Stable content hash of the fitted pipeline, used to verify that
    /// persisted matrices and models belong together.
    pub fn id(&self) -> String {
        let canonical = serde_json::to_string(self).expect("pipeline serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("pipeline serializes");
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Pipeline, DataError> {
        let text = std::fs::read_to_string(path)?;
        let pipeline: Pipeline =
            serde_json::from_str(&text).map_err(|e| DataError::Container(e.to_string()))?;
        if pipeline.format_version != PIPELINE_FORMAT_VERSION {
            return Err(DataError::Container(format!(
                "unsupported pipeline format version {}",
                pipeline.format_version
            )));
        }
        Ok(pipeline)
    }
}

fn parse_number(table: &RawTable, row: usize, col: usize, name: &str) -> Result<f64, DataError> {
    let cell = &table.rows[row][col];
    cell.parse::<f64>().map_err(|_| DataError::Parse {
        path: table.source.clone(),
        // +2: one for the header row, one for 1-based numbering.
        line: (row + 2) as u64,
        message: format!("column `{name}`: `{cell}` is not a number"),
    })
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(rows: Vec<Vec<&str>>) -> RawTable {
        RawTable {
            headers: vec!["num".into(), "cat".into(), "band".into(), "y".into()],
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(String::from).collect())
                .collect(),
            source: "test".into(),
        }
    }

    fn schema() -> Schema {
        Schema::parse(
            "!positive = 1\nnum = numerical\ncat = categorical\n\
             band = ordinal: low | mid | high\ny = label\n",
        )
        .unwrap()
    }

    #[test]
    fn numerical_min_max_midpoint() {
        let t = table(vec![
            vec!["2", "M", "low", "0"],
            vec!["4", "F", "mid", "0"],
            vec!["6", "M", "high", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1, 2]).unwrap();
        let spec = &p.specs()[0];
        assert_eq!(spec.range, Some((2.0, 6.0)));
        let m = p.transform(&t, &[1]).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn categorical_one_hot_in_first_appearance_order() {
        let t = table(vec![
            vec!["1", "M", "low", "0"],
            vec!["2", "F", "low", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1]).unwrap();
        let m = p.transform(&t, &[0, 1]).unwrap();
        // columns: num, cat=M, cat=F, band
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 1)], 0.0);
        assert_eq!(m[(1, 2)], 1.0);
    }

    #[test]
    fn constant_numerical_column_maps_to_zero() {
        let t = table(vec![
            vec!["5", "M", "low", "0"],
            vec!["5", "M", "mid", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1]).unwrap();
        let m = p.transform(&t, &[0, 1]).unwrap();
        assert_eq!(m[(0, 0)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn out_of_range_test_values_are_clipped() {
        let t = table(vec![
            vec!["2", "M", "low", "0"],
            vec!["4", "M", "low", "0"],
            vec!["100", "M", "low", "1"],
            vec!["-50", "M", "low", "1"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1]).unwrap();
        let m = p.transform(&t, &[2, 3]).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn unseen_category_encodes_as_zero_block() {
        let t = table(vec![
            vec!["1", "M", "low", "0"],
            vec!["2", "X", "low", "1"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0]).unwrap();
        let m = p.transform(&t, &[1]).unwrap();
        // cat block is a single fitted category ("M") -> all zeros for "X"
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn ordinal_uses_declared_order() {
        let t = table(vec![
            vec!["1", "M", "low", "0"],
            vec!["2", "M", "mid", "0"],
            vec!["3", "M", "high", "0"],
            vec!["4", "M", "unknown", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1, 2, 3]).unwrap();
        let m = p.transform(&t, &[0, 1, 2, 3]).unwrap();
        assert_eq!(m[(0, 2)], 0.0);
        assert_abs_diff_eq!(m[(1, 2)], 0.5, epsilon = 1e-15);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(3, 2)], 0.0, "unseen ordinal maps to 0");
    }

    #[test]
    fn transform_is_idempotent_on_fitted_rows() {
        let t = table(vec![
            vec!["2", "M", "low", "0"],
            vec!["4", "F", "mid", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1]).unwrap();
        let a = p.transform(&t, &[0, 1]).unwrap();
        let b = p.transform(&t, &[0, 1]).unwrap();
        assert_eq!(a, b);
        for v in a.iter() {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn encoded_width_follows_the_schema() {
        let t = table(vec![
            vec!["1", "M", "low", "0"],
            vec!["2", "F", "mid", "0"],
            vec!["3", "D", "low", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1, 2]).unwrap();
        // 1 numerical + 3 categories + 1 ordinal
        assert_eq!(p.encoded_width(), 5);
        assert_eq!(p.transform(&t, &[0]).unwrap().ncols(), 5);
    }

    #[test]
    fn bad_number_reports_file_and_line() {
        let t = table(vec![vec!["abc", "M", "low", "0"]]);
        let err = Pipeline::fit(&t, &schema(), &[0]).unwrap_err();
        match err {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn pipeline_round_trips_through_disk() {
        let t = table(vec![
            vec!["2", "M", "low", "0"],
            vec!["4", "F", "mid", "0"],
        ]);
        let p = Pipeline::fit(&t, &schema(), &[0, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.json");
        p.save(&path).unwrap();
        let loaded = Pipeline::load(&path).unwrap();
        assert_eq!(p, loaded);
        assert_eq!(p.id(), loaded.id());
    }
}
