//! N-BEATS with the generic basis: per-block backcasts and forecasts, and
//! the doubly-residual identity that the model output is the sum of the
//! block forecasts.

use vitalcast::models::{ForecastModel, NBeats, NBeatsConfig};
use vitalcast::{Tensor, HORIZON, INPUT_LEN};

fn main() -> vitalcast::Result<()> {
    let model = NBeats::new(NBeatsConfig::default(), 1, 7)?;
    println!("{} parameters in {} tensors", model.params().count(), model.params().len());

    let history: Vec<f64> = (0..INPUT_LEN).map(|t| 0.45 + 0.05 * (t as f64 / 9.0).sin()).collect();
    let x = Tensor::new(&[1, INPUT_LEN], history)?;
    let (forecast, blocks) = model.trace(&x)?;

    for (i, b) in blocks.iter().enumerate() {
        let residual: f64 = b.input.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "block {i}: ‖input‖ {residual:.4}, forecast[0] {:+.5}, forecast[35] {:+.5}",
            b.forecast.data()[0],
            b.forecast.data()[HORIZON - 1]
        );
    }
    let summed: f64 = blocks.iter().map(|b| b.forecast.data()[0]).sum();
    println!("model forecast[0] {:+.5} = sum of blocks {summed:+.5}", forecast.data()[0]);
    Ok(())
}
