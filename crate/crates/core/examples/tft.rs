//! Temporal Fusion Transformer point forecaster: variable-selection weights
//! per input channel and causal attention of the decoder steps.

use vitalcast::models::{Tft, TftConfig};
use vitalcast::{Tensor, GROUP_LEN, HORIZON, INPUT_LEN};

fn main() -> vitalcast::Result<()> {
    let model = Tft::new(TftConfig::default(), 3, 5)?;
    let mut row = Vec::with_capacity(3 * INPUT_LEN);
    for (base, amp) in [(0.40, 0.04), (0.30, 0.01), (0.17, 0.02)] {
        row.extend((0..INPUT_LEN).map(|t| base + amp * (t as f64 / 8.0).sin()));
    }
    let trace = model.trace(&Tensor::new(&[1, 3 * INPUT_LEN], row)?)?;

    let w = trace.selection_weights.data();
    let mean: Vec<f64> = (0..3)
        .map(|c| (0..INPUT_LEN).map(|t| w[t * 3 + c]).sum::<f64>() / INPUT_LEN as f64)
        .collect();
    println!("mean selection weights (target, cov1, cov2): {mean:.3?}");

    let head = &trace.attention[0];
    for step in [0, HORIZON / 2, HORIZON - 1] {
        let a = &head.data()[step * GROUP_LEN..(step + 1) * GROUP_LEN];
        let visible = INPUT_LEN + step + 1;
        let future: f64 = a[visible..].iter().sum();
        let (argmax, _) = a.iter().enumerate().fold((0, 0.0), |m, (j, &v)| if v > m.1 { (j, v) } else { m });
        println!("decoder step {step:>2}: attends {visible} positions, peak at {argmax}, future mass is zero: {}", future == 0.0);
    }
    println!("forecast head: {:?}", &trace.forecast.data()[..4]);
    Ok(())
}
