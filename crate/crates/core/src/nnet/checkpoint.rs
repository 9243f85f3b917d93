//! JSON model checkpoints.
//!
//! ```json
//! {"format":"memaudit-mlp","version":1,"input_dim":8,"hidden_dims":[16],
//!  "config":{...},"best_epoch":12,"log":[...],"layers":[{"inputs":8,...}]}
//! ```
//!
//! Floats are written with round-trip precision, so reloading is exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EpochLog, Layer, MlpModel, NnetError, TrainConfig, TrainedModel};

const FORMAT: &str = "memaudit-mlp";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub layers: Vec<Layer>,
}

impl Checkpoint {
    pub fn new(model: &TrainedModel, config: &TrainConfig) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            input_dim: model.model.input_dim(),
            hidden_dims: model.model.hidden_dims(),
            config: config.clone(),
            best_epoch: model.best_epoch,
            log: model.log.clone(),
            layers: model.model.layers.clone(),
        }
    }

    /// Checks the header and that the layer shapes chain together.
    pub fn into_model(self) -> Result<(TrainedModel, TrainConfig), NnetError> {
        let fail = |m: String| Err(NnetError::Checkpoint(m));
        if self.format != FORMAT || self.version != VERSION {
            return fail(format!("unsupported format {:?} v{}", self.format, self.version));
        }
        self.config.validate()?;
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(1);
        if self.input_dim == 0 || self.layers.len() + 1 != widths.len() {
            return fail(format!("{} layers do not match widths {widths:?}", self.layers.len()));
        }
        for (i, (layer, w)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.inputs != w[0]
                || layer.outputs != w[1]
                || Some(layer.weights.len()) != w[0].checked_mul(w[1])
                || layer.biases.len() != w[1]
            {
                return fail(format!("layer {i} has inconsistent shape"));
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return fail(format!("layer {i} has non-finite parameters"));
            }
        }
        let model = TrainedModel {
            model: MlpModel {
                layers: self.layers,
                dropout_rate: self.config.dropout_rate,
            },
            log: self.log,
            best_epoch: self.best_epoch,
        };
        Ok((model, self.config))
    }
}

pub fn write_checkpoint<W: Write>(model: &TrainedModel, config: &TrainConfig, writer: W) -> Result<(), NnetError> {
    serde_json::to_writer(writer, &Checkpoint::new(model, config)).map_err(|e| NnetError::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<(TrainedModel, TrainConfig), NnetError> {
    let ckpt: Checkpoint = serde_json::from_reader(reader).map_err(|e| NnetError::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}
