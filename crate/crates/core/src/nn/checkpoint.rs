use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, MlpParams, MlpSpec};
use crate::error::{Result, WdpdError};

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a trained network. Weights are stored row-major as base64
/// of little-endian binary64 so a save/load round trip is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: MlpSpec,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: String,
    pub bias: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| {
                let (rows, cols) = l.weights.dim();
                let bytes: Vec<u8> = l.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
                LayerRecord {
                    rows,
                    cols,
                    weights: STANDARD.encode(bytes),
                    bias: l.bias.to_vec(),
                }
            })
            .collect();
        Self {
            format_version: CHECKPOINT_VERSION,
            spec: params.spec.clone(),
            layers,
        }
    }

    pub fn into_params(self) -> Result<MlpParams> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(WdpdError::Format(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        self.spec.validate()?;
        let shapes = self.spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(WdpdError::Format(format!(
                "spec implies {} layers, checkpoint has {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for ((rows, cols), rec) in shapes.into_iter().zip(self.layers) {
            if (rec.rows, rec.cols) != (rows, cols) || rec.bias.len() != rows {
                return Err(WdpdError::Format(format!(
                    "layer shape {}x{} does not match spec {rows}x{cols}",
                    rec.rows, rec.cols
                )));
            }
            let bytes = STANDARD
                .decode(rec.weights.as_bytes())
                .map_err(|e| WdpdError::Format(format!("weights: {e}")))?;
            if bytes.len() != rows * cols * 8 {
                return Err(WdpdError::Format(format!(
                    "expected {} weight bytes, found {}",
                    rows * cols * 8,
                    bytes.len()
                )));
            }
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), values)
                    .expect("length checked above"),
                bias: Array1::from(rec.bias),
            });
        }
        let params = MlpParams { spec: self.spec, layers };
        if !params.is_finite() {
            return Err(WdpdError::Numeric("checkpoint parameters".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &MlpParams) -> Result<()> {
    std::fs::write(path, Checkpoint::from_params(params).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpParams> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_params()
}
