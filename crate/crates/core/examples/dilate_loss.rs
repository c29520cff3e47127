//! Soft-DTW, the expected alignment and the DILATE loss on two short
//! sequences, including how γ trades smoothness against hard DTW.

use vitalcast::eval::hard_dtw;
use vitalcast::losses::{dilate_value_and_grad, expected_path, omega_squared, soft_dtw, squared_cost, temporal_loss, DilateConfig};

fn main() -> vitalcast::Result<()> {
    let truth = [0.2, 0.2, 0.6, 0.6, 0.3];
    // Same shape, one step late.
    let late = [0.2, 0.2, 0.2, 0.6, 0.6];

    println!("hard DTW: {:.6}", hard_dtw(&late, &truth)?);
    for gamma in [1.0, 0.1, 0.01, 0.001] {
        let stats = soft_dtw(&squared_cost(&late, &truth), gamma)?;
        println!("soft-DTW γ={gamma:<6} {:.6}", stats.value());
    }

    let stats = soft_dtw(&squared_cost(&late, &truth), 0.01)?;
    let e = expected_path(&stats);
    println!("\nexpected alignment (γ = 0.01):");
    for i in 0..e.rows() {
        let row: Vec<String> = (0..e.cols()).map(|j| format!("{:.2}", e.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
    println!("temporal term ⟨E, Ω⟩ = {:.6}", temporal_loss(&e, &omega_squared(truth.len()))?);

    for alpha in [1.0, 0.5, 0.0] {
        let cfg = DilateConfig { alpha, gamma: 0.01 };
        let (terms, grad) = dilate_value_and_grad(&late, &truth, &cfg)?;
        let g: Vec<String> = grad.iter().map(|v| format!("{v:+.3}")).collect();
        println!(
            "α={alpha}: loss {:.5} (shape {:.5}, temporal {:.5}) ∂/∂ŷ [{}]",
            terms.loss,
            terms.shape,
            terms.temporal,
            g.join(", ")
        );
    }
    Ok(())
}
