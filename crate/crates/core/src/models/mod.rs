//! Forecasters mapping `[C × 72]` scaled inputs to 36-step forecasts.
//!
//! Batched inputs are `[B, C·72]` with the target channel first; outputs
//! are `[B, 36]`.

pub mod checkpoint;
pub mod nbeats;
pub mod nhits;
pub mod params;
pub mod persistence;
pub mod tft;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use nbeats::{NBeats, NBeatsConfig};
pub use nhits::{NHits, NHitsConfig};
pub use params::ParamStore;
pub use persistence::{persistence_forecast, Persistence};
pub use tft::{Tft, TftConfig};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::INPUT_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Persistence,
    #[serde(rename = "nbeats")]
    NBeats,
    #[serde(rename = "nhits")]
    NHits,
    Tft,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Persistence,
        ModelKind::NBeats,
        ModelKind::NHits,
        ModelKind::Tft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "persistence",
            ModelKind::NBeats => "nbeats",
            ModelKind::NHits => "nhits",
            ModelKind::Tft => "tft",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Persistence => "Persistence",
            ModelKind::NBeats => "N-BEATS",
            ModelKind::NHits => "N-HiTS",
            ModelKind::Tft => "TFT",
        }
    }

    pub fn is_trainable(self) -> bool {
        self != ModelKind::Persistence
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown model `{s}` (expected persistence, nbeats, nhits or tft)"
                ))
            })
    }
}

/// One forecaster.
pub trait ForecastModel {
    fn kind(&self) -> ModelKind;

    /// Input channels `C`.
    fn n_channels(&self) -> usize;

    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// Records the forward pass of `x [B, C·72]` on `g`, with `p` bound
    /// from [`ForecastModel::params`] in order. Dropout is active only when
    /// `rng` is given.
    fn forward(&self, g: &mut Graph, p: &[Var], x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var>;

    /// Evaluation-mode forecasts `[B, 36]`.
    fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params().bind_constant(&mut g);
        let x = g.constant(input.clone());
        let y = self.forward(&mut g, &p, x, None)?;
        Ok(g.value(y).clone())
    }

    /// Forecast for one `[C × 72]` input.
    fn forecast(&self, input: &[Vec<f64>]) -> Result<Vec<f64>> {
        let row = input.concat();
        let x = Tensor::new(&[1, row.len()], row)?;
        Ok(self.predict(&x)?.into_data())
    }
}

pub(crate) fn check_input(g: &Graph, x: Var, n_channels: usize) -> Result<()> {
    let s = g.value(x).shape();
    if s.len() != 2 || s[1] != n_channels * INPUT_LEN {
        return Err(Error::shape("model input", &[0, n_channels * INPUT_LEN], s));
    }
    Ok(())
}

/// Architecture selector with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Persistence,
    #[serde(rename = "nbeats")]
    NBeats(NBeatsConfig),
    #[serde(rename = "nhits")]
    NHits(NHitsConfig),
    Tft(TftConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Persistence => ModelKind::Persistence,
            ModelConfig::NBeats(_) => ModelKind::NBeats,
            ModelConfig::NHits(_) => ModelKind::NHits,
            ModelConfig::Tft(_) => ModelKind::Tft,
        }
    }

    /// Defaults for `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Persistence => ModelConfig::Persistence,
            ModelKind::NBeats => ModelConfig::NBeats(NBeatsConfig::default()),
            ModelKind::NHits => ModelConfig::NHits(NHitsConfig::default()),
            ModelKind::Tft => ModelConfig::Tft(TftConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Persistence => Ok(()),
            ModelConfig::NBeats(c) => c.validate(),
            ModelConfig::NHits(c) => c.validate(),
            ModelConfig::Tft(c) => c.validate(),
        }
    }
}

/// Any of the four forecasters.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Persistence(Persistence),
    NBeats(NBeats),
    NHits(NHits),
    Tft(Tft),
}

impl Model {
    /// Builds a freshly initialized model; `seed` drives initialization.
    pub fn new(config: &ModelConfig, n_channels: usize, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Persistence => Model::Persistence(Persistence::new(n_channels)),
            ModelConfig::NBeats(c) => Model::NBeats(NBeats::new(c.clone(), n_channels, seed)?),
            ModelConfig::NHits(c) => Model::NHits(NHits::new(c.clone(), n_channels, seed)?),
            ModelConfig::Tft(c) => Model::Tft(Tft::new(c.clone(), n_channels, seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Persistence(_) => ModelConfig::Persistence,
            Model::NBeats(m) => ModelConfig::NBeats(m.config.clone()),
            Model::NHits(m) => ModelConfig::NHits(m.config.clone()),
            Model::Tft(m) => ModelConfig::Tft(m.config.clone()),
        }
    }

    fn inner(&self) -> &dyn ForecastModel {
        match self {
            Model::Persistence(m) => m,
            Model::NBeats(m) => m,
            Model::NHits(m) => m,
            Model::Tft(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn ForecastModel {
        match self {
            Model::Persistence(m) => m,
            Model::NBeats(m) => m,
            Model::NHits(m) => m,
            Model::Tft(m) => m,
        }
    }
}

impl ForecastModel for Model {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn n_channels(&self) -> usize {
        self.inner().n_channels()
    }

    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().params_mut()
    }

    fn forward(&self, g: &mut Graph, p: &[Var], x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        self.inner().forward(g, p, x, rng)
    }
}
