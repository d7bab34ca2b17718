//! Declarative column schema for raw CSV inputs.
//!
//! Grammar (one entry per line, `#` starts a comment):
//!
//! ```text
//! !positive = <label value mapped to class 1>
//! <column name> = numerical
//! <column name> = categorical
//! <column name> = ordinal: first | second | third
//! <column name> = drop
//! <column name> = label
//! ```
//!
//! Ordinal categories are declared in order; the encoder maps category `i`
//! of `k` to `i / (k - 1)`. Exactly one column must be the label, and every
//! CSV column must have an entry.

use super::{DataError, RawTable};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Ordinal(Vec<String>),
    Drop,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRule {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub rules: Vec<ColumnRule>,
    pub positive_label: String,
}

impl Schema {
    pub fn from_file(path: &Path) -> Result<Schema, DataError> {
        let text = std::fs::read_to_string(path)?;
        Schema::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Schema, DataError> {
        let mut rules: Vec<ColumnRule> = Vec::new();
        let mut positive: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DataError::Schema {
                line: line_no,
                message: "expected `name = kind`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key == "!positive" {
                positive = Some(value.to_string());
                continue;
            }
            if key.is_empty() {
                return Err(DataError::Schema {
                    line: line_no,
                    message: "empty column name".into(),
                });
            }
            if rules.iter().any(|r| r.name == key) {
                return Err(DataError::Schema {
                    line: line_no,
                    message: format!("duplicate entry for column `{key}`"),
                });
            }
            let kind = parse_kind(value, line_no)?;
            rules.push(ColumnRule {
                name: key.to_string(),
                kind,
            });
        }
        let positive_label = positive.ok_or_else(|| DataError::Schema {
            line: 0,
            message: "missing `!positive = <value>` directive".into(),
        })?;
        let label_count = rules.iter().filter(|r| r.kind == ColumnKind::Label).count();
        if label_count != 1 {
            return Err(DataError::Schema {
                line: 0,
                message: format!("expected exactly one label column, found {label_count}"),
            });
        }
        Ok(Schema {
            rules,
            positive_label,
        })
    }

    pub fn rule(&self, name: &str) -> Option<&ColumnRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn label_column(&self) -> &str {
        &self
            .rules
            .iter()
            .find(|r| r.kind == ColumnKind::Label)
            .expect("schema construction enforces one label")
            .name
    }

    /// Checks coverage both ways: every CSV column has a rule and every rule
    /// names a CSV column.
    pub fn check_against(&self, table: &RawTable) -> Result<(), DataError> {
        for header in &table.headers {
            if self.rule(header).is_none() {
                return Err(DataError::UnknownColumn(header.clone()));
            }
        }
        for rule in &self.rules {
            if table.column_index(&rule.name).is_none() {
                return Err(DataError::UnknownColumn(rule.name.clone()));
            }
        }
        Ok(())
    }

    /// Binary labels: 1 where the label cell equals the positive value.
    pub fn labels(&self, table: &RawTable) -> Result<Vec<u8>, DataError> {
        self.check_against(table)?;
        let col = table
            .column_index(self.label_column())
            .ok_or_else(|| DataError::UnknownColumn(self.label_column().to_string()))?;
        Ok(table
            .rows
            .iter()
            .map(|r| u8::from(r[col] == self.positive_label))
            .collect())
    }
}

fn parse_kind(value: &str, line: usize) -> Result<ColumnKind, DataError> {
    if value == "numerical" {
        return Ok(ColumnKind::Numerical);
    }
    if value == "categorical" {
        return Ok(ColumnKind::Categorical);
    }
    if value == "drop" {
        return Ok(ColumnKind::Drop);
    }
    if value == "label" {
        return Ok(ColumnKind::Label);
    }
    if let Some(rest) = value.strip_prefix("ordinal:") {
        let cats: Vec<String> = rest.split('|').map(|c| c.trim().to_string()).collect();
        if cats.iter().any(String::is_empty) || cats.is_empty() {
            return Err(DataError::Schema {
                line,
                message: "ordinal categories must be non-empty, `|`-separated".into(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for c in &cats {
            if !seen.insert(c) {
                return Err(DataError::Schema {
                    line,
                    message: format!("duplicate ordinal category `{c}`"),
                });
            }
        }
        return Ok(ColumnKind::Ordinal(cats));
    }
    Err(DataError::Schema {
        line,
        message: format!("unknown column kind `{value}`"),
    })
}
