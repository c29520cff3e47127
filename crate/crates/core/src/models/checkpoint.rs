//! JSON checkpoints: model config, an echo of the run config, and named
//! parameter tensors. Floats round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastModel, Model, ModelConfig, ParamStore};
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "vitalcast-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelConfig,
    pub n_channels: usize,
    /// Free-form copy of the configuration that produced the weights.
    pub config_echo: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config_echo: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            model: model.config(),
            n_channels: model.n_channels(),
            config_echo,
            params: model.params().clone(),
        }
    }

    /// Rebuilds the model and loads the stored weights.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(&self.model, self.n_channels, 0)?;
        model.params_mut().load_from(&self.params)?;
        Ok(model)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    if let Some((name, _)) = checkpoint.params.iter().find(|(_, t)| !t.is_finite()) {
        return Err(Error::Contract(format!("parameter `{name}` is not finite")));
    }
    let json = serde_json::to_vec(checkpoint)?;
    write_atomic(path, &json)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported format `{}` (expected `{CHECKPOINT_FORMAT}`)",
            ckpt.format
        )));
    }
    Ok(ckpt)
}
