//! Train N-HiTS on a synthetic cohort with late deterioration ramps, then
//! compare its horizon-wise DTW curve with persistence.
//!
//! cargo run --release --example horizon_sweep -- [patients] [epochs]

use vitalcast::data::{Channel, SyntheticConfig};
use vitalcast::eval::{evaluate_model, first_crossover};
use vitalcast::experiment::{prepare_data, train_model, DataConfig, DataSource, ExperimentConfig, TrainingConfig};
use vitalcast::losses::Loss;
use vitalcast::models::{ModelConfig, NHitsConfig, Persistence};

fn main() -> vitalcast::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let patients = args.next().unwrap_or(200);
    let epochs = args.next().unwrap_or(30);

    let cfg = ExperimentConfig {
        seed: 11,
        target: Channel::Mbp,
        covariates: false,
        data: DataConfig {
            source: DataSource::Synthetic {
                patients,
                seed: None,
                missing_rate: 0.05,
                generator: SyntheticConfig::default(),
            },
            scaling: Default::default(),
        },
        model: ModelConfig::NHits(NHitsConfig {
            hidden_width: 64,
            theta_dim: 16,
            ..Default::default()
        }),
        loss: Loss::Mse,
        training: TrainingConfig {
            max_epochs: epochs,
            patience: 5,
            ..Default::default()
        },
    };
    let data = prepare_data(&cfg)?;
    let test = &data.split.test;
    println!(
        "{} train / {} validation / {} test windows",
        data.split.train.len(),
        data.split.validation.len(),
        test.len()
    );
    let trained = train_model(&cfg, &data.split)?;
    println!("stopped after {} epochs, best {}", trained.log.len(), trained.best_epoch);

    let model = evaluate_model(&trained.model, test, Some(cfg.loss.mode()))?;
    let base = evaluate_model(&Persistence::new(1), test, None)?;
    println!("{:>3} {:>12} {:>12}", "h", "persistence", "nhits");
    for (h, (p, m)) in base.horizon_curve.iter().zip(&model.horizon_curve).enumerate() {
        let mark = if m < p { "*" } else { "" };
        println!("{:>3} {p:>12.6} {m:>12.6} {mark}", h + 1);
    }
    println!("crossover: {}", first_crossover(&model.horizon_curve, &base.horizon_curve));
    Ok(())
}
