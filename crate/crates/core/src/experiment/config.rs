//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! target = "mbp"          # hr | mbp
//! covariates = true
//!
//! [data]
//! source = "synthetic"    # synthetic | csv | sine
//! patients = 200
//!
//! [model]
//! kind = "nhits"          # persistence | nbeats | nhits | tft
//! hidden_width = 256
//!
//! [loss]
//! kind = "dilate"         # mse | dilate
//! alpha = 0.5
//! gamma = 0.01
//!
//! [training]
//! learning_rate = 1e-3
//! batch_size = 32
//! max_epochs = 100
//! patience = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Channel, ScalingSpec, SyntheticConfig};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::models::ModelConfig;
use crate::optim::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// Vitals and diagnosis tables in the documented CSV schemas.
    Csv { vitals: PathBuf, diagnoses: PathBuf },
    /// Generated cohort; `seed` defaults to the experiment seed.
    Synthetic {
        patients: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        missing_rate: f64,
        #[serde(default)]
        generator: SyntheticConfig,
    },
    /// Phase-shifted sine groups used for every split, for overfitting
    /// checks.
    Sine { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default)]
    pub scaling: ScalingSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: AdamConfig::default().learning_rate,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            max_steps: None,
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub target: Channel,
    #[serde(default)]
    pub covariates: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_loss() -> Loss {
    Loss::Mse
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative CSV paths resolve
    /// against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Csv { vitals, diagnoses } = &mut cfg.data.source {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [vitals, diagnoses] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.target == Channel::Rr {
            return Err(Error::Config("target: must be hr or mbp".into()));
        }
        match &self.data.source {
            DataSource::Csv { vitals, diagnoses } => {
                for (field, p) in [("data.vitals", vitals), ("data.diagnoses", diagnoses)] {
                    if !p.is_file() {
                        return Err(Error::Config(format!("{field}: file not found: {}", p.display())));
                    }
                }
            }
            DataSource::Synthetic {
                patients,
                missing_rate,
                ..
            } => {
                if *patients < 3 {
                    return Err(Error::Config(format!("data.patients: need at least 3, got {patients}")));
                }
                if !(0.0..1.0).contains(missing_rate) {
                    return Err(Error::Config(format!(
                        "data.missing_rate: must lie in [0, 1), got {missing_rate}"
                    )));
                }
            }
            DataSource::Sine { samples } => {
                if *samples == 0 {
                    return Err(Error::Config("data.samples: must be >= 1".into()));
                }
            }
        }
        self.data.scaling.validate()?;
        self.model
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        self.loss
            .validate()
            .map_err(|e| Error::Config(format!("loss: {e}")))?;
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "training.learning_rate: must be positive, got {}",
                t.learning_rate
            )));
        }
        for (field, v) in [
            ("training.batch_size", t.batch_size),
            ("training.max_epochs", t.max_epochs),
            ("training.patience", t.patience),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{field}: must be >= 1")));
            }
        }
        if t.max_steps == Some(0) {
            return Err(Error::Config("training.max_steps: must be >= 1".into()));
        }
        Ok(())
    }

    /// Input channels fed to the model.
    pub fn n_channels(&self) -> usize {
        if self.covariates {
            3
        } else {
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, NHitsConfig};

    const EXAMPLE: &str = r#"
seed = 7
target = "mbp"
covariates = true

[data]
source = "synthetic"
patients = 20

[model]
kind = "nhits"
hidden_width = 64

[loss]
kind = "dilate"
alpha = 0.5
gamma = 0.01

[training]
batch_size = 16
"#;

    #[test]
    fn parses_documented_example() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.target, Channel::Mbp);
        assert_eq!(cfg.n_channels(), 3);
        assert_eq!(cfg.model.kind(), ModelKind::NHits);
        match &cfg.model {
            ModelConfig::NHits(c) => assert_eq!(
                c,
                &NHitsConfig {
                    hidden_width: 64,
                    ..Default::default()
                }
            ),
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.training.batch_size, 16);
        assert_eq!(cfg.training.max_epochs, 100);
        assert_eq!(cfg.training.patience, 10);
        assert_eq!(cfg.loss.label(), "L-2");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn field_level_errors() {
        let bad = EXAMPLE.replace("batch_size = 16", "batch_size = 0");
        let err = ExperimentConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("training.batch_size"), "{err}");

        let bad = EXAMPLE.replace("alpha = 0.5", "alpha = 1.5");
        let err = ExperimentConfig::from_toml(&bad).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("loss"), "{err}");

        let bad = EXAMPLE.replace("target = \"mbp\"", "target = \"rr\"");
        assert!(ExperimentConfig::from_toml(&bad).unwrap().validate().is_err());

        let bad = EXAMPLE.replace("batch_size = 16", "batchsize = 16");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("batchsize"), "{err}");
    }

    #[test]
    fn missing_csv_names_path() {
        let text = EXAMPLE.replace(
            "source = \"synthetic\"\npatients = 20",
            "source = \"csv\"\nvitals = \"/nonexistent/vitals.csv\"\ndiagnoses = \"/nonexistent/dx.csv\"",
        );
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/vitals.csv"), "{err}");
    }
}
