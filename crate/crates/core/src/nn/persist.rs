//! Model container: a JSON document with a format-version field, layer
//! shapes, activation tags and parameters in declared (layer) order.
//!
//! Values are written with shortest round-trip f64 formatting, so
//! save -> load -> forward is bit-exact for finite parameters.

use super::{Activation, DenseLayer, Mlp, NnError};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major (out_dim x in_dim).
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpRecord {
    format_version: u32,
    layers: Vec<LayerRecord>,
}

fn to_record(mlp: &Mlp) -> MlpRecord {
    let layers = mlp
        .layers()
        .iter()
        .map(|l| LayerRecord {
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation: l.activation,
            weights: l.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            biases: l.biases.to_vec(),
        })
        .collect();
    MlpRecord {
        format_version: FORMAT_VERSION,
        layers,
    }
}

fn from_record(record: MlpRecord) -> Result<Mlp, NnError> {
    if record.format_version != FORMAT_VERSION {
        return Err(NnError::Format(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            record.format_version
        )));
    }
    let mut layers = Vec::with_capacity(record.layers.len());
    for (idx, rec) in record.layers.into_iter().enumerate() {
        if rec.weights.len() != rec.out_dim
            || rec.weights.iter().any(|row| row.len() != rec.in_dim)
            || rec.biases.len() != rec.out_dim
        {
            return Err(NnError::Format(format!(
                "layer {idx}: parameter shapes disagree with declared dims"
            )));
        }
        let flat: Vec<f64> = rec.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rec.out_dim, rec.in_dim), flat)
            .map_err(|e| NnError::Format(format!("layer {idx}: {e}")))?;
        layers.push(DenseLayer::from_parts(
            weights,
            Array1::from_vec(rec.biases),
            rec.activation,
        ));
    }
    if layers.is_empty() {
        return Err(NnError::Format("container holds no layers".into()));
    }
    Ok(Mlp::new(layers))
}

pub fn mlp_to_json(mlp: &Mlp) -> serde_json::Value {
    serde_json::to_value(to_record(mlp)).expect("model record serializes")
}

pub fn mlp_from_json(value: serde_json::Value) -> Result<Mlp, NnError> {
    let record: MlpRecord =
        serde_json::from_value(value).map_err(|e| NnError::Format(e.to_string()))?;
    from_record(record)
}

pub fn save_mlp(mlp: &Mlp, path: &Path) -> Result<(), NnError> {
    let record = to_record(mlp);
    let text = serde_json::to_string_pretty(&record).expect("model record serializes");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<Mlp, NnError> {
    let text = std::fs::read_to_string(path)?;
    let record: MlpRecord =
        serde_json::from_str(&text).map_err(|e| NnError::Format(e.to_string()))?;
    from_record(record)
}
