//! JSON parameter checkpoints.
//!
//! ```json
//! {
//!   "format": "g2n-checkpoint",
//!   "version": 1,
//!   "networks": [
//!     {"name": "actor", "gated_layer": 1,
//!      "layers": [{"shape": [64, 4], "activation": "relu",
//!                  "weights": [/* out*in values, row-major */], "bias": [/* out values */]}]}
//!   ],
//!   "vectors": {"log_std": [0.0, 0.0]}
//! }
//! ```
//!
//! `shape` is `[output, input]`. Floats are written in shortest round-trip
//! form, so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, LayerShape, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "g2n-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub shape: [usize; 2],
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gated_layer: Option<usize>,
    pub layers: Vec<LayerRecord>,
}

impl NetworkRecord {
    pub fn from_mlp(name: &str, mlp: &Mlp, gated_layer: Option<usize>) -> Self {
        let p = mlp.params();
        let layers = mlp
            .layers()
            .iter()
            .map(|l| LayerRecord {
                shape: [l.output, l.input],
                activation: l.activation,
                weights: p[l.offset..l.bias_offset()].to_vec(),
                bias: p[l.bias_offset()..l.offset + l.param_len()].to_vec(),
            })
            .collect();
        Self {
            name: name.to_string(),
            gated_layer,
            layers,
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut params = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            let [output, input] = l.shape;
            if l.weights.len() != output * input || l.bias.len() != output {
                return Err(Error::Artifact(format!(
                    "checkpoint network `{}` layer {k}: shape [{output}, {input}] but {} weights and {} biases",
                    self.name,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            shapes.push(LayerShape {
                input,
                output,
                activation: l.activation,
                offset: params.len(),
            });
            params.extend_from_slice(&l.weights);
            params.extend_from_slice(&l.bias);
        }
        Mlp::from_parts(shapes, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub networks: Vec<NetworkRecord>,
    #[serde(default)]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            networks: Vec::new(),
            vectors: BTreeMap::new(),
        }
    }
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&NetworkRecord> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Artifact(format!("checkpoint has no network `{name}`")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Artifact(format!(
                "{}: unsupported checkpoint format {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
