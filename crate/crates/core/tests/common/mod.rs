//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitalcast::autograd::Graph;
use vitalcast::losses::Loss;
use vitalcast::models::ForecastModel;
use vitalcast::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_series(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

/// Every monotone alignment path from `(0,0)` to `(m−1,n−1)` with steps
/// ↓, →, ↘, as lists of visited cells.
pub fn all_paths(m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(i: usize, j: usize, m: usize, n: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        cur.push((i, j));
        if i == m - 1 && j == n - 1 {
            out.push(cur.clone());
        } else {
            if i + 1 < m {
                walk(i + 1, j, m, n, cur, out);
            }
            if j + 1 < n {
                walk(i, j + 1, m, n, cur, out);
            }
            if i + 1 < m && j + 1 < n {
                walk(i + 1, j + 1, m, n, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, m, n, &mut Vec::new(), &mut out);
    out
}

/// Path costs `⟨A, Δ⟩` with squared local cost.
pub fn path_costs(a: &[f64], b: &[f64], paths: &[Vec<(usize, usize)>]) -> Vec<f64> {
    paths
        .iter()
        .map(|p| p.iter().map(|&(i, j)| (a[i] - b[j]).powi(2)).sum())
        .collect()
}

/// `−γ log Σ_A exp(−⟨A,Δ⟩/γ)` by enumeration, shifted for stability.
pub fn brute_soft_dtw(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let costs = path_costs(a, b, &all_paths(a.len(), b.len()));
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let z: f64 = costs.iter().map(|c| (-(c - best) / gamma).exp()).sum();
    best - gamma * z.ln()
}

/// `min_A ⟨A,Δ⟩` by enumeration.
pub fn brute_hard_dtw(a: &[f64], b: &[f64]) -> f64 {
    path_costs(a, b, &all_paths(a.len(), b.len()))
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// `(1/Z) Σ_A ⟨A,Ω⟩ exp(−⟨A,Δ⟩/γ)` with `Ω(i,j) = (i−j)²/k²`.
pub fn brute_temporal(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let k = a.len();
    let paths = all_paths(k, b.len());
    let costs = path_costs(a, b, &paths);
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut num = 0.0;
    for (p, c) in paths.iter().zip(&costs) {
        let w = (-(c - best) / gamma).exp();
        let omega: f64 = p
            .iter()
            .map(|&(i, j)| (i as f64 - j as f64).powi(2) / (k * k) as f64)
            .sum();
        z += w;
        num += w * omega;
    }
    num / z
}

/// All parameters of a model as one flat vector.
pub fn flatten_params(model: &dyn ForecastModel) -> Tensor {
    let data: Vec<f64> = model.params().tensors().iter().flat_map(|t| t.data().to_vec()).collect();
    Tensor::vector(data)
}

pub fn unflatten_params(model: &mut dyn ForecastModel, flat: &Tensor) {
    let mut offset = 0;
    for t in model.params_mut().tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat.data()[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len());
}

/// Loss of `model` on `(x, y)` and its analytic gradient w.r.t. all
/// parameters, flattened.
pub fn model_loss_grad(model: &dyn ForecastModel, loss: &Loss, x: &Tensor, y: &Tensor) -> (f64, Tensor) {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let xv = g.constant(x.clone());
    let pred = model.forward(&mut g, &p, xv, None).unwrap();
    let l = loss.apply(&mut g, pred, y).unwrap();
    let value = g.value(l).item();
    let mut grads = g.backward(l).unwrap();
    let flat: Vec<f64> = model
        .params()
        .gradients(&mut grads, &p)
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect();
    (value, Tensor::vector(flat))
}

pub fn model_loss(model: &dyn ForecastModel, loss: &Loss, x: &Tensor, y: &Tensor) -> f64 {
    let pred = model.predict(x).unwrap();
    loss.value_and_grad(&pred, y).unwrap().0
}
