//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, non-finite loss),
//! 2 invalid config or input, 3 checkpoint incompatible with config.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vitalcast::data::{Channel, SyntheticConfig};
use vitalcast::experiment::commands::write_forecast_csv;
use vitalcast::experiment::{
    cmd_evaluate, cmd_forecast, cmd_synth, cmd_train, ExperimentConfig, ForecastSource, SynthOptions,
};
use vitalcast::models::{ModelConfig, ModelKind};
use vitalcast::{atomic::write_atomic, Error, Result};

#[derive(Parser)]
#[command(name = "vitalcast", version, about = "Multi-horizon ICU vital-sign forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model; writes checkpoint.json and training_log.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "VITALCAST_OUT_DIR")]
        out: PathBuf,
    },
    /// Score a checkpoint and the persistence baseline on the test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the configured model (`persistence` needs no checkpoint).
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long, env = "VITALCAST_OUT_DIR")]
        out: PathBuf,
    },
    /// Forecast 36 steps from the last 72 rows of a CSV window.
    Forecast {
        #[arg(long, required_unless_present = "model")]
        checkpoint: Option<PathBuf>,
        /// Use `persistence` instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        model: Option<ModelKind>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        target: Channel,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic cohort as vitals.csv and diagnoses.csv.
    Synth {
        #[arg(long)]
        patients: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
        #[arg(long, env = "VITALCAST_OUT_DIR")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = cmd_train(&cfg, &out)?;
            let [tr, va, te] = s.split_sizes;
            println!(
                "trained {} on {tr}/{va}/{te} windows ({} excluded): {} steps, best epoch {}, train MSE {:.6e}",
                cfg.model.kind(),
                s.n_excluded,
                s.outcome.steps,
                s.outcome.best_epoch,
                s.final_train_mse
            );
            println!("checkpoint: {}", s.checkpoint.display());
        }
        Command::Evaluate {
            config,
            checkpoint,
            model,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(kind) = model {
                if kind != cfg.model.kind() {
                    cfg.model = ModelConfig::default_for(kind);
                }
            }
            let doc = cmd_evaluate(&cfg, checkpoint.as_deref(), &out)?;
            for r in &doc.reports {
                println!("{:<12} MSE* {:>8.2}  DTW {:>8.4}", r.model.display_name(), r.mse_scaled, r.dtw);
            }
            for c in &doc.crossovers {
                println!("{} crossover vs persistence: {}", c.model.display_name(), c.crossover);
            }
        }
        Command::Forecast {
            checkpoint,
            model,
            input,
            target,
            out,
        } => {
            let source = match (&checkpoint, model) {
                (Some(p), _) => ForecastSource::Checkpoint(p),
                (None, Some(ModelKind::Persistence)) => ForecastSource::Persistence,
                (None, Some(k)) => {
                    return Err(Error::Input(format!("--model {k} needs --checkpoint")));
                }
                (None, None) => unreachable!("clap requires one of --checkpoint/--model"),
            };
            let rows = cmd_forecast(source, &input, target)?;
            let mut buf = Vec::new();
            write_forecast_csv(&mut buf, &rows)?;
            match out {
                Some(p) => write_atomic(p, &buf)?,
                None => std::io::stdout()
                    .write_all(&buf)
                    .map_err(|e| Error::Io {
                        path: "<stdout>".into(),
                        source: e,
                    })?,
            }
        }
        Command::Synth {
            patients,
            seed,
            missing_rate,
            out,
        } => {
            let opts = SynthOptions {
                patients,
                seed,
                missing_rate,
                generator: SyntheticConfig::default(),
            };
            let (rows, groups) = cmd_synth(&opts, &out)?;
            println!("wrote {rows} vitals rows and {groups} groups to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
