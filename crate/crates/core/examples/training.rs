//! Config-driven train → evaluate round trip, ending in a results table.
//!
//! cargo run --release --example training

use vitalcast::eval::Crossover;
use vitalcast::experiment::{cmd_evaluate, cmd_train, render_results_table, ExperimentConfig};

const CONFIG: &str = r#"
seed = 3
target = "hr"
covariates = true

[data]
source = "synthetic"
patients = 60

[model]
kind = "nbeats"
hidden_width = 64
theta_dim = 16

[loss]
kind = "dilate"
alpha = 0.5
gamma = 0.01

[training]
max_epochs = 15
patience = 4
"#;

fn main() -> vitalcast::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    cfg.validate()?;
    let out = std::env::temp_dir().join("vitalcast-training-example");

    let summary = cmd_train(&cfg, &out)?;
    for e in &summary.outcome.log {
        println!("epoch {:>2}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("best epoch {}, train MSE {:.3e}", summary.outcome.best_epoch, summary.final_train_mse);

    let doc = cmd_evaluate(&cfg, Some(&summary.checkpoint), &out)?;
    print!("\n{}", render_results_table(&doc.reports));
    for c in &doc.crossovers {
        match c.crossover {
            Crossover::At(h) => println!("\n{} first beats persistence at h = {h}", c.model.display_name()),
            Crossover::Never => println!("\n{} never beats persistence within the horizon", c.model.display_name()),
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
