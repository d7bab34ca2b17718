//! Plain-text matrix container for persisted splits.
//!
//! ```text
//! cvae-matrix v1
//! pipeline <sha256 hex or ->
//! rows <n>
//! cols <m>
//! <row of space-separated values, shortest round-trip formatting>
//! ...
//! ```
//!
//! Shortest round-trip formatting makes write -> read bit-exact and the file
//! bytes deterministic.

use super::DataError;
use ndarray::Array2;
use std::io::Write;
use std::path::Path;

const MAGIC: &str = "cvae-matrix v1";

pub fn write_matrix(
    path: &Path,
    matrix: &Array2<f64>,
    pipeline_id: Option<&str>,
) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("pipeline {}\n", pipeline_id.unwrap_or("-")));
    out.push_str(&format!("rows {}\n", matrix.nrows()));
    out.push_str(&format!("cols {}\n", matrix.ncols()));
    for row in matrix.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(Array2<f64>, Option<String>), DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| DataError::Container(format!("line {line}: {message}"));

    let (_, magic) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file".into()))?;
    if magic != MAGIC {
        return Err(bad(1, format!("expected `{MAGIC}`, found `{magic}`")));
    }
    let mut header = |prefix: &str| -> Result<String, DataError> {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing `{prefix}` header")))?;
        line.strip_prefix(prefix)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(idx + 1, format!("expected `{prefix} ...`")))
    };
    let pipeline = header("pipeline")?;
    let pipeline = (pipeline != "-").then_some(pipeline);
    let rows: usize = header("rows")?
        .parse()
        .map_err(|_| bad(3, "bad row count".into()))?;
    let cols: usize = header("cols")?
        .parse()
        .map_err(|_| bad(4, "bad column count".into()))?;

    let mut matrix = Array2::zeros((rows, cols));
    for r in 0..rows {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| bad(0, format!("missing data row {r}")))?;
        let mut c = 0;
        for tok in line.split_ascii_whitespace() {
            if c >= cols {
                return Err(bad(idx + 1, format!("more than {cols} values")));
            }
            matrix[(r, c)] = tok
                .parse()
                .map_err(|_| bad(idx + 1, format!("bad value `{tok}`")))?;
            c += 1;
        }
        if c != cols {
            return Err(bad(idx + 1, format!("expected {cols} values, found {c}")));
        }
    }
    Ok((matrix, pipeline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = array![
            [0.1, 0.6400000000000001, 1.0 / 3.0],
            [f64::MIN_POSITIVE, 1e300, -0.0]
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mat");
        write_matrix(&path, &m, Some("abc123")).unwrap();
        let (back, id) = read_matrix(&path).unwrap();
        assert_eq!(m, back);
        assert_eq!(id.as_deref(), Some("abc123"));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_pipeline_reads_as_none() {
        let m = array![[1.0]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mat");
        write_matrix(&path, &m, None).unwrap();
        let (_, id) = read_matrix(&path).unwrap();
        assert_eq!(id, None);
    }

    #[test]
    fn corrupt_counts_are_reported_with_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mat");
        std::fs::write(&path, "cvae-matrix v1\npipeline -\nrows 1\ncols 2\n0.5\n").unwrap();
        let err = read_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }
}
