//! The four command-line operations as library functions. Every output file
//! is rendered in memory first and then written atomically.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::table::render_results_table;
use super::train::{dataset_loss, prepare_data, train_model, write_training_log, TrainOutcome};
use crate::atomic::write_atomic;
use crate::data::window::input_channels;
use crate::data::{
    derive_mbp, generate_synthetic, synthetic_records, write_diagnoses, write_exclusion_log,
    write_vitals, Channel, ScalingSpec, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::eval::{compare_to_persistence, evaluate_model, write_horizon_csv, CrossoverSummary, EvalReport};
use crate::losses::Loss;
use crate::models::{load_checkpoint, save_checkpoint, Checkpoint, ForecastModel, Model, Persistence};
use crate::{HORIZON, INPUT_LEN, STEP_MINUTES};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const EXCLUSIONS_FILE: &str = "exclusions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const HORIZON_FILE: &str = "horizon_curve.csv";
pub const TABLE_FILE: &str = "results_table.txt";
pub const VITALS_FILE: &str = "vitals.csv";
pub const DIAGNOSES_FILE: &str = "diagnoses.csv";

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// The part of a config that a checkpoint must agree with. The training
/// schedule is left out so a checkpoint can be evaluated under a config
/// with different epochs or patience.
fn compatibility_key(cfg: &serde_json::Value) -> serde_json::Value {
    let mut v = cfg.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("training");
    }
    v
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub outcome: TrainOutcome,
    /// Evaluation-mode MSE of the restored model on the training split.
    pub final_train_mse: f64,
    pub checkpoint: PathBuf,
    pub split_sizes: [usize; 3],
    pub n_excluded: usize,
}

/// Trains the configured model and writes `checkpoint.json`,
/// `training_log.csv` and `exclusions.csv` into `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let split = &data.split;
    log::info!(
        "split: {} train / {} validation / {} test windows",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let outcome = train_model(cfg, split)?;
    let final_train_mse = dataset_loss(&outcome.model, &Loss::Mse, &split.train)?;
    let ckpt = Checkpoint::from_model(&outcome.model, serde_json::to_value(cfg)?);

    let log_bytes = to_bytes(|b| write_training_log(b, &outcome.log))?;
    let excl_bytes = to_bytes(|b| write_exclusion_log(b, &data.exclusions))?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &ckpt)?;
    write_atomic(out_dir.join(TRAINING_LOG_FILE), &log_bytes)?;
    write_atomic(out_dir.join(EXCLUSIONS_FILE), &excl_bytes)?;
    Ok(TrainSummary {
        outcome,
        final_train_mse,
        checkpoint,
        split_sizes: [split.train.len(), split.validation.len(), split.test.len()],
        n_excluded: data.exclusions.len(),
    })
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub seed: u64,
    pub n_test: usize,
    /// Persistence baseline first, then the evaluated model if trainable.
    pub reports: Vec<EvalReport>,
    pub crossovers: Vec<CrossoverSummary>,
}

/// Loads `path` and checks it against `cfg`.
pub fn load_compatible_model(cfg: &ExperimentConfig, path: &Path) -> Result<Model> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model != cfg.model || ckpt.n_channels != cfg.n_channels() {
        return Err(Error::CheckpointMismatch(format!(
            "{} holds a {} model with {} input channels, config asks for {} with {}",
            path.display(),
            ckpt.model.kind(),
            ckpt.n_channels,
            cfg.model.kind(),
            cfg.n_channels()
        )));
    }
    let want = compatibility_key(&serde_json::to_value(cfg)?);
    if compatibility_key(&ckpt.config_echo) != want {
        return Err(Error::CheckpointMismatch(format!(
            "{} was trained under a different data, target, covariate, loss or seed setting",
            path.display()
        )));
    }
    ckpt.to_model()
}

/// Evaluates the configured model on the test split next to the
/// persistence baseline and writes `metrics.json`, `horizon_curve.csv` and
/// `results_table.txt`. A checkpoint is required unless the configured
/// model is persistence.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>, out_dir: &Path) -> Result<MetricsDocument> {
    cfg.validate()?;
    let model = if cfg.model.kind().is_trainable() {
        let path = checkpoint.ok_or_else(|| {
            Error::Input(format!("a checkpoint is required to evaluate a {} model", cfg.model.kind()))
        })?;
        Some(load_compatible_model(cfg, path)?)
    } else {
        None
    };
    let data = prepare_data(cfg)?;
    let test = &data.split.test;
    let baseline = evaluate_model(&Persistence::new(cfg.n_channels()), test, None)?;
    let mut reports = vec![baseline.clone()];
    let mut crossovers = Vec::new();
    if let Some(m) = &model {
        let r = evaluate_model(m, test, Some(cfg.loss.mode()))?;
        crossovers = compare_to_persistence(std::slice::from_ref(&r), &baseline);
        reports.push(r);
    }
    let doc = MetricsDocument {
        seed: cfg.seed,
        n_test: test.len(),
        reports,
        crossovers,
    };
    let mut metrics = serde_json::to_vec_pretty(&doc)?;
    metrics.push(b'\n');
    let curve = to_bytes(|b| write_horizon_csv(b, &doc.reports))?;
    let table = render_results_table(&doc.reports);
    write_atomic(out_dir.join(METRICS_FILE), &metrics)?;
    write_atomic(out_dir.join(HORIZON_FILE), &curve)?;
    write_atomic(out_dir.join(TABLE_FILE), table.as_bytes())?;
    Ok(doc)
}

/// Where `cmd_forecast` gets its model from.
#[derive(Clone, Copy, Debug)]
pub enum ForecastSource<'a> {
    Checkpoint(&'a Path),
    /// The persistence baseline on the target channel alone.
    Persistence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub step: usize,
    pub minutes_ahead: i64,
    pub value: f64,
}

/// Reads the last 72 rows of `channels` from a CSV with named columns.
/// MBP may be given directly or as `sbp` and `dbp`; empty cells carry the
/// previous value forward. Returns physical values, one series per channel.
pub fn read_forecast_input(path: &Path, channels: &[Channel]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut sources = Vec::new();
    for &c in channels {
        let src = match (c, col(c.name())) {
            (_, Some(i)) => (i, None),
            (Channel::Mbp, None) => match (col("sbp"), col("dbp")) {
                (Some(s), Some(d)) => (s, Some(d)),
                _ => {
                    return Err(Error::Input(format!(
                        "{}: needs an `mbp` column or both `sbp` and `dbp`",
                        path.display()
                    )))
                }
            },
            (_, None) => {
                return Err(Error::Input(format!("{}: missing column `{}`", path.display(), c.name())))
            }
        };
        sources.push(src);
    }
    let parse = |s: &str, line: u64| -> Result<Option<f64>> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| Error::Row {
            path: path.to_path_buf(),
            line,
            message: format!("`{s}` is not a number"),
        })
    };
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(channels.len());
        for &(i, dbp) in &sources {
            let v = parse(record.get(i).unwrap_or(""), line)?;
            let v = match dbp {
                None => v,
                Some(d) => match (v, parse(record.get(d).unwrap_or(""), line)?) {
                    (Some(s), Some(d)) => Some(derive_mbp(s, d)?),
                    _ => None,
                },
            };
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < INPUT_LEN {
        return Err(Error::Input(format!(
            "{}: need at least {INPUT_LEN} rows (6 hours at 5-minute steps), found {}",
            path.display(),
            rows.len()
        )));
    }
    let mut out = vec![Vec::with_capacity(INPUT_LEN); channels.len()];
    let mut last: Vec<Option<f64>> = vec![None; channels.len()];
    for (k, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_some() {
                last[c] = *v;
            }
        }
        if k >= rows.len() - INPUT_LEN {
            for (c, v) in last.iter().enumerate() {
                let v = v.ok_or_else(|| {
                    Error::Input(format!(
                        "{}: no `{}` value at or before row {}",
                        path.display(),
                        channels[c].name(),
                        k + 1
                    ))
                })?;
                out[c].push(v);
            }
        }
    }
    Ok(out)
}

/// Scales a physical `[C × 72]` window, forecasts and maps the result back
/// to physical units of `target`.
pub fn forecast_physical(
    model: &dyn ForecastModel,
    channels: &[Channel],
    scaling: &ScalingSpec,
    window: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if window.len() != channels.len() || channels.len() != model.n_channels() {
        return Err(Error::shape("forecast window", &[model.n_channels()], &[window.len()]));
    }
    let scaled: Vec<Vec<f64>> = window
        .iter()
        .zip(channels)
        .map(|(s, &c)| scaling.scale_series(s, c))
        .collect();
    let out = model.forecast(&scaled)?;
    Ok(out.iter().map(|&v| scaling.unscale(v, channels[0])).collect())
}

/// 36-step physical-unit forecast of `target` from the tail of `input`.
pub fn cmd_forecast(source: ForecastSource<'_>, input: &Path, target: Channel) -> Result<Vec<ForecastRow>> {
    if target == Channel::Rr {
        return Err(Error::Input("target must be hr or mbp".into()));
    }
    let (model, scaling, covariates) = match source {
        ForecastSource::Persistence => (
            Model::Persistence(Persistence::new(1)),
            ScalingSpec::default(),
            false,
        ),
        ForecastSource::Checkpoint(path) => {
            let ckpt = load_checkpoint(path)?;
            let (scaling, trained_target) = match serde_json::from_value::<ExperimentConfig>(ckpt.config_echo.clone()) {
                Ok(cfg) => (cfg.data.scaling, Some(cfg.target)),
                Err(_) => (ScalingSpec::default(), None),
            };
            if let Some(t) = trained_target.filter(|&t| t != target) {
                return Err(Error::CheckpointMismatch(format!(
                    "{} forecasts {t}, asked for {target}",
                    path.display()
                )));
            }
            (ckpt.to_model()?, scaling, ckpt.n_channels > 1)
        }
    };
    let channels = input_channels(target, covariates);
    let window = read_forecast_input(input, &channels)?;
    let values = forecast_physical(&model, &channels, &scaling, &window)?;
    debug_assert_eq!(values.len(), HORIZON);
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(i, value)| ForecastRow {
            step: i + 1,
            minutes_ahead: STEP_MINUTES * (i as i64 + 1),
            value,
        })
        .collect())
}

/// `step,minutes_ahead,value`.
pub fn write_forecast_csv(writer: impl std::io::Write, rows: &[ForecastRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub patients: usize,
    pub seed: u64,
    pub missing_rate: f64,
    pub generator: SyntheticConfig,
}

/// Writes a synthetic cohort as `vitals.csv` and `diagnoses.csv`. Returns
/// the number of vitals rows and groups.
pub fn cmd_synth(opts: &SynthOptions, out_dir: &Path) -> Result<(usize, usize)> {
    if opts.patients == 0 {
        return Err(Error::Input("--patients must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&opts.missing_rate) {
        return Err(Error::Input(format!(
            "--missing-rate must lie in [0, 1), got {}",
            opts.missing_rate
        )));
    }
    let groups = generate_synthetic(opts.patients, opts.seed, &opts.generator);
    let (vitals, dx) = synthetic_records(&groups, opts.missing_rate, opts.seed);
    let v = to_bytes(|b| write_vitals(b, &vitals))?;
    let d = to_bytes(|b| write_diagnoses(b, &dx))?;
    write_atomic(out_dir.join(VITALS_FILE), &v)?;
    write_atomic(out_dir.join(DIAGNOSES_FILE), &d)?;
    Ok((vitals.len(), dx.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::{DataConfig, DataSource, TrainingConfig};
    use crate::models::{ModelConfig, NHitsConfig};

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            target: Channel::Mbp,
            covariates: true,
            data: DataConfig {
                source: DataSource::Synthetic {
                    patients: 10,
                    seed: None,
                    missing_rate: 0.02,
                    generator: Default::default(),
                },
                scaling: Default::default(),
            },
            model: ModelConfig::NHits(NHitsConfig {
                hidden_width: 16,
                theta_dim: 4,
                ..Default::default()
            }),
            loss: Loss::Mse,
            training: TrainingConfig {
                max_epochs: 2,
                batch_size: 8,
                ..Default::default()
            },
        }
    }

    fn write_window(path: &Path, rows: usize, header: &str, row: impl Fn(usize) -> String) {
        let mut text = format!("{header}\n");
        for i in 0..rows {
            text.push_str(&row(i));
            text.push('\n');
        }
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn train_then_evaluate_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        cmd_train(&cfg, &a).unwrap();
        cmd_train(&cfg, &b).unwrap();
        for f in [CHECKPOINT_FILE, TRAINING_LOG_FILE, EXCLUSIONS_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let ckpt = a.join(CHECKPOINT_FILE);
        let doc = cmd_evaluate(&cfg, Some(&ckpt), &a).unwrap();
        assert_eq!(doc.reports.len(), 2);
        assert_eq!(doc.crossovers.len(), 1);
        cmd_evaluate(&cfg, Some(&ckpt), &b).unwrap();
        for f in [METRICS_FILE, HORIZON_FILE, TABLE_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let csv = std::fs::read_to_string(a.join(HORIZON_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * HORIZON);
    }

    #[test]
    fn evaluate_rejects_mismatched_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        cmd_train(&cfg, dir.path()).unwrap();
        let ckpt = dir.path().join(CHECKPOINT_FILE);

        let mut other = cfg.clone();
        other.seed = 4;
        let err = cmd_evaluate(&other, Some(&ckpt), dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");

        let mut other = cfg.clone();
        other.covariates = false;
        let err = cmd_evaluate(&other, Some(&ckpt), dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");

        let mut other = cfg.clone();
        other.training.patience = 3;
        cmd_evaluate(&other, Some(&ckpt), dir.path()).unwrap();

        let err = cmd_evaluate(&cfg, None, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn persistence_evaluates_without_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.model = ModelConfig::Persistence;
        let doc = cmd_evaluate(&cfg, None, dir.path()).unwrap();
        assert_eq!(doc.reports.len(), 1);
        assert!(doc.crossovers.is_empty());
        let curve = std::fs::read_to_string(dir.path().join(HORIZON_FILE)).unwrap();
        assert_eq!(curve.lines().count(), 1 + HORIZON);
    }

    #[test]
    fn persistence_forecast_repeats_last_value() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("w.csv");
        write_window(&input, 80, "offset_min,hr,sbp,dbp,rr", |i| {
            format!("{},{},120,{},16", 5 * i, 70 + i % 7, if i == 79 { "" } else { "60" })
        });
        let rows = cmd_forecast(ForecastSource::Persistence, &input, Channel::Hr).unwrap();
        assert_eq!(rows.len(), HORIZON);
        let last = (70 + 79 % 7) as f64;
        assert!(rows.iter().all(|r| (r.value - last).abs() < 1e-9));
        let minutes: Vec<i64> = rows.iter().map(|r| r.minutes_ahead).collect();
        assert_eq!(minutes, (1..=36).map(|k| 5 * k).collect::<Vec<_>>());

        // The missing dbp on the final row forward-fills the derived MBP.
        let rows = cmd_forecast(ForecastSource::Persistence, &input, Channel::Mbp).unwrap();
        assert!((rows[0].value - 80.0).abs() < 1e-9);

        let mut buf = Vec::new();
        write_forecast_csv(&mut buf, &rows[..1]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("step,minutes_ahead,value\n1,5,"));
    }

    #[test]
    fn short_forecast_input_names_required_length() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("w.csv");
        write_window(&input, 71, "hr", |_| "80".into());
        let err = cmd_forecast(ForecastSource::Persistence, &input, Channel::Hr).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("72"), "{err}");
    }

    #[test]
    fn checkpoint_forecast_uses_covariates_and_checks_target() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        cmd_train(&cfg, dir.path()).unwrap();
        let ckpt = dir.path().join(CHECKPOINT_FILE);
        let input = dir.path().join("w.csv");
        write_window(&input, 72, "hr,mbp,rr", |i| format!("{},{},18", 80 + i % 3, 75 - i / 10));
        let rows = cmd_forecast(ForecastSource::Checkpoint(&ckpt), &input, Channel::Mbp).unwrap();
        assert_eq!(rows.len(), HORIZON);
        assert!(rows.iter().all(|r| r.value.is_finite()));
        let err = cmd_forecast(ForecastSource::Checkpoint(&ckpt), &input, Channel::Hr).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn synth_writes_loadable_tables() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            patients: 5,
            seed: 9,
            missing_rate: 0.1,
            generator: Default::default(),
        };
        let (_, groups) = cmd_synth(&opts, dir.path()).unwrap();
        let mut cfg = small_config();
        cfg.data.source = DataSource::Csv {
            vitals: dir.path().join(VITALS_FILE),
            diagnoses: dir.path().join(DIAGNOSES_FILE),
        };
        cfg.validate().unwrap();
        let data = prepare_data(&cfg).unwrap();
        let total = data.split.train.len() + data.split.validation.len() + data.split.test.len();
        assert_eq!(total + data.exclusions.len(), groups);
    }
}
