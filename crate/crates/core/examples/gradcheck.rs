//! Checks reverse-mode gradients of a small N-HiTS model under the DILATE
//! loss against central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vitalcast::autograd::Graph;
use vitalcast::gradcheck::{finite_difference_gradient, relative_error};
use vitalcast::losses::{DilateConfig, Loss};
use vitalcast::models::{ForecastModel, NHits, NHitsConfig};
use vitalcast::{Tensor, HORIZON, INPUT_LEN};

fn main() -> vitalcast::Result<()> {
    let model = NHits::new(NHitsConfig { hidden_width: 16, theta_dim: 4, ..Default::default() }, 1, 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Tensor::uniform(&[2, INPUT_LEN], 0.3, &mut rng).map(|v| v + 0.5);
    let y = Tensor::uniform(&[2, HORIZON], 0.3, &mut rng).map(|v| v + 0.5);
    let loss = Loss::Dilate(DilateConfig { alpha: 0.5, gamma: 0.1 });

    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let xv = g.constant(x.clone());
    let pred = model.forward(&mut g, &p, xv, None)?;
    let l = loss.apply(&mut g, pred, &y)?;
    let mut grads = g.backward(l)?;
    let analytic = model.params().gradients(&mut grads, &p);

    for (i, name) in model.params().names().iter().enumerate().filter(|(_, n)| n.ends_with("weight")) {
        let numeric = finite_difference_gradient(
            |w| {
                let mut m = model.clone();
                m.params_mut().tensors_mut()[i] = w.clone();
                let pred = m.predict(&x).unwrap();
                loss.value_and_grad(&pred, &y).unwrap().0
            },
            &model.params().tensors()[i],
            1e-6,
        );
        println!("{name:<28} relative error {:.2e}", relative_error(&analytic[i], &numeric));
    }
    Ok(())
}
