//! Data preparation and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::autograd::Graph;
use crate::data::window::batch_tensors;
use crate::data::{
    build_groups, generate_synthetic, ingest_csv, ingest_diagnoses, make_window, sine_groups,
    split_dataset, synthetic_records, DatasetSplit, Exclusion, PatientGroup, WindowSample,
};
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::models::{ForecastModel, Model};
use crate::optim::Adam;

/// Windowed splits plus the groups dropped on the way.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: DatasetSplit<WindowSample>,
    pub exclusions: Vec<Exclusion>,
}

fn windows(groups: &DatasetSplit<PatientGroup>, cfg: &ExperimentConfig) -> Result<DatasetSplit<WindowSample>> {
    groups.try_map(|g| make_window(g, cfg.target, cfg.covariates, &cfg.data.scaling))
}

/// Loads or generates the cohort named by the config and splits it by
/// patient with the experiment seed.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (groups, exclusions) = match &cfg.data.source {
        DataSource::Csv { vitals, diagnoses } => {
            let records = ingest_csv(vitals)?;
            let dx = ingest_diagnoses(diagnoses)?;
            build_groups(&records, &dx, &cfg.data.scaling)
        }
        DataSource::Synthetic {
            patients,
            seed,
            missing_rate,
            generator,
        } => {
            let seed = seed.unwrap_or(cfg.seed);
            let groups = generate_synthetic(*patients, seed, generator);
            let (records, dx) = synthetic_records(&groups, *missing_rate, seed);
            build_groups(&records, &dx, &cfg.data.scaling)
        }
        DataSource::Sine { samples } => {
            let groups = sine_groups(*samples);
            let all = DatasetSplit {
                train: groups.clone(),
                validation: groups.clone(),
                test: groups,
            };
            return Ok(PreparedData {
                split: windows(&all, cfg)?,
                exclusions: Vec::new(),
            });
        }
    };
    if !exclusions.is_empty() {
        log::info!("{} groups excluded during preprocessing", exclusions.len());
    }
    let split = split_dataset(groups, cfg.seed)?;
    Ok(PreparedData {
        split: windows(&split, cfg)?,
        exclusions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Cumulative optimizer steps at the end of the epoch.
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub steps: usize,
}

/// Mean evaluation-mode loss over `samples`.
pub fn dataset_loss(model: &dyn ForecastModel, loss: &Loss, samples: &[WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot compute a loss on an empty set".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(256) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let (x, y) = batch_tensors(&refs)?;
        let pred = model.predict(&x)?;
        total += loss.value_and_grad(&pred, &y)?.0 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Adam on shuffled minibatches with early stopping on validation loss.
/// Fully determined by the config seed.
pub fn train_model(cfg: &ExperimentConfig, split: &DatasetSplit<WindowSample>) -> Result<TrainOutcome> {
    let mut model = Model::new(&cfg.model, cfg.n_channels(), cfg.seed)?;
    if !model.kind().is_trainable() {
        return Ok(TrainOutcome {
            model,
            log: Vec::new(),
            best_epoch: 0,
            steps: 0,
        });
    }
    if split.train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let validation = if split.validation.is_empty() {
        &split.train
    } else {
        &split.validation
    };
    let t = &cfg.training;
    let mut opt = Adam::new(t.adam(), model.params().tensors());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(3);

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut since_best = 0usize;
    let mut steps = 0usize;
    'epochs: for epoch in 1..=t.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut budget_hit = false;
        for (b, idx) in order.chunks(t.batch_size).enumerate() {
            let refs: Vec<&WindowSample> = idx.iter().map(|&i| &split.train[i]).collect();
            let (x, y) = batch_tensors(&refs)?;
            let mut g = Graph::new();
            let p = model.params().bind(&mut g);
            let xv = g.constant(x);
            let pred = model.forward(&mut g, &p, xv, Some(&mut dropout_rng))?;
            let l = cfg.loss.apply(&mut g, pred, &y)?;
            let value = g.value(l).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: b + 1 });
            }
            let mut grads = g.backward(l)?;
            let gs = model.params().gradients(&mut grads, &p);
            opt.step(model.params_mut().tensors_mut(), &gs)?;
            epoch_loss += value;
            batches += 1;
            steps += 1;
            if t.max_steps.is_some_and(|m| steps >= m) {
                budget_hit = true;
                break;
            }
        }
        let val_loss = dataset_loss(&model, &cfg.loss, validation)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: batches });
        }
        let entry = EpochLog {
            epoch,
            steps,
            train_loss: epoch_loss / batches as f64,
            val_loss,
        };
        log::info!(
            "epoch {epoch}: train {:.6e} val {:.6e}",
            entry.train_loss,
            entry.val_loss
        );
        log.push(entry);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params().clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if budget_hit || since_best >= t.patience {
            break 'epochs;
        }
    }
    model.params_mut().load_from(&best.2)?;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: best.1,
        steps,
    })
}

/// `epoch,steps,train_loss,val_loss`.
pub fn write_training_log(writer: impl std::io::Write, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in log {
        w.serialize(e)?;
    }
    if log.is_empty() {
        w.write_record(["epoch", "steps", "train_loss", "val_loss"])?;
    }
    w.flush().map_err(|e| Error::io("<training log>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Channel;
    use crate::experiment::config::{DataConfig, TrainingConfig};
    use crate::models::{ModelConfig, NBeatsConfig};

    fn sine_config(max_steps: usize) -> ExperimentConfig {
        ExperimentConfig {
            seed: 1,
            target: Channel::Hr,
            covariates: false,
            data: DataConfig {
                source: DataSource::Sine { samples: 4 },
                scaling: Default::default(),
            },
            model: ModelConfig::NBeats(NBeatsConfig {
                n_stacks: 1,
                blocks_per_stack: 1,
                hidden_width: 16,
                theta_dim: 4,
            }),
            loss: Loss::Mse,
            training: TrainingConfig {
                batch_size: 2,
                max_epochs: 1000,
                patience: 1000,
                max_steps: Some(max_steps),
                ..Default::default()
            },
        }
    }

    #[test]
    fn step_budget_and_determinism() {
        let cfg = sine_config(7);
        let data = prepare_data(&cfg).unwrap();
        assert_eq!(data.split.train.len(), 4);
        let a = train_model(&cfg, &data.split).unwrap();
        assert_eq!(a.steps, 7);
        assert_eq!(a.log.len(), 4);
        let b = train_model(&cfg, &data.split).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn keeps_best_validation_parameters() {
        let cfg = sine_config(40);
        let data = prepare_data(&cfg).unwrap();
        let out = train_model(&cfg, &data.split).unwrap();
        let best = out.log.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let restored = dataset_loss(&out.model, &cfg.loss, &data.split.validation).unwrap();
        assert_eq!(restored, best);
        assert_eq!(out.log[out.best_epoch - 1].val_loss, best);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let mut cfg = sine_config(10_000);
        cfg.training.learning_rate = 5.0;
        cfg.training.patience = 2;
        let data = prepare_data(&cfg).unwrap();
        match train_model(&cfg, &data.split) {
            Ok(out) => assert!(out.log.len() <= out.best_epoch + 2),
            Err(Error::NonFiniteLoss { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn synthetic_source_goes_through_pipeline() {
        let mut cfg = sine_config(1);
        cfg.data.source = DataSource::Synthetic {
            patients: 12,
            seed: None,
            missing_rate: 0.05,
            generator: Default::default(),
        };
        let a = prepare_data(&cfg).unwrap();
        let b = prepare_data(&cfg).unwrap();
        assert_eq!(a.split, b.split);
        assert!(!a.split.test.is_empty());
        assert!(a.split.train.iter().all(|s| s.input.iter().flatten().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn training_log_csv() {
        let log = vec![EpochLog {
            epoch: 1,
            steps: 3,
            train_loss: 0.5,
            val_loss: 0.25,
        }];
        let mut buf = Vec::new();
        write_training_log(&mut buf, &log).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,steps,train_loss,val_loss\n1,3,0.5,0.25\n");
    }
}
