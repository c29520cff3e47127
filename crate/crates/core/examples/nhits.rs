//! N-HiTS: multi-rate max pooling of the input and coarse forecasts that are
//! interpolated to the full horizon.

use vitalcast::models::{ForecastModel, NHits, NHitsConfig};
use vitalcast::{Tensor, INPUT_LEN};

fn main() -> vitalcast::Result<()> {
    let cfg = NHitsConfig::default();
    println!("kernels {:?}, coarse forecast lengths {:?}", cfg.pool_kernels, cfg.coarse_lengths);
    // Target channel plus two covariates.
    let model = NHits::new(cfg, 3, 3)?;
    println!("{} parameters", model.params().count());

    let mut row = Vec::with_capacity(3 * INPUT_LEN);
    for (base, amp) in [(0.30, 0.02), (0.45, 0.03), (0.18, 0.01)] {
        row.extend((0..INPUT_LEN).map(|t| base + amp * (t as f64 / 12.0).cos()));
    }
    let x = Tensor::new(&[1, 3 * INPUT_LEN], row)?;
    let (forecast, blocks) = model.trace(&x)?;
    for (i, b) in blocks.iter().enumerate() {
        let f = b.forecast.data();
        // Low-resolution blocks produce piecewise-linear forecasts.
        let roughness: f64 = f.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum();
        println!("block {i}: second-difference mass {roughness:.5}");
    }
    println!("forecast head: {:?}", &forecast.data()[..4]);
    Ok(())
}
