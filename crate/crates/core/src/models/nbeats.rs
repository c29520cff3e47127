//! N-BEATS with the generic basis.
//!
//! Each block runs four ReLU layers, projects to backcast and forecast
//! coefficients θ, and expands them against learned basis rows. Blocks are
//! doubly residual: block `l+1` sees `x_l − x̂_l` and the model forecast is
//! the sum of block forecasts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Linear, Mlp, ParamStore};
use super::{check_input, ForecastModel, ModelKind};
use crate::autograd::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{HORIZON, INPUT_LEN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NBeatsConfig {
    pub n_stacks: usize,
    pub blocks_per_stack: usize,
    pub hidden_width: usize,
    pub theta_dim: usize,
}

impl Default for NBeatsConfig {
    fn default() -> Self {
        Self {
            n_stacks: 3,
            blocks_per_stack: 1,
            hidden_width: 256,
            theta_dim: 32,
        }
    }
}

impl NBeatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stacks == 0 || self.blocks_per_stack == 0 || self.hidden_width == 0 || self.theta_dim == 0 {
            return Err(Error::Config(format!("n-beats sizes must all be positive: {self:?}")));
        }
        Ok(())
    }
}

/// FC stack, θ heads and basis expansions of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisBlock {
    pub fc: Mlp,
    pub theta_b: Linear,
    pub theta_f: Linear,
    pub basis_b: Linear,
    pub basis_f: Linear,
}

impl BasisBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_len: usize,
        hidden: usize,
        theta_dim: usize,
        backcast_len: usize,
        forecast_len: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fc = Mlp::new(
            store,
            name,
            &[input_len, hidden, hidden, hidden, hidden],
            Activation::Relu,
            rng,
        );
        Self {
            fc,
            theta_b: Linear::new(store, &format!("{name}.theta_b"), hidden, theta_dim, true, rng),
            theta_f: Linear::new(store, &format!("{name}.theta_f"), hidden, theta_dim, true, rng),
            basis_b: Linear::new(store, &format!("{name}.basis_b"), theta_dim, backcast_len, false, rng),
            basis_f: Linear::new(store, &format!("{name}.basis_f"), theta_dim, forecast_len, false, rng),
        }
    }

    /// Returns `(θ_b, θ_f)`.
    pub fn thetas(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<(Var, Var)> {
        let h = self.fc.forward(g, p, x)?;
        Ok((self.theta_b.forward(g, p, h)?, self.theta_f.forward(g, p, h)?))
    }

    /// `Σ_i θ_i v_i` for both heads: `(backcast, forecast)`.
    pub fn expand(&self, g: &mut Graph, p: &[Var], theta_b: Var, theta_f: Var) -> Result<(Var, Var)> {
        Ok((
            self.basis_b.forward(g, p, theta_b)?,
            self.basis_f.forward(g, p, theta_f)?,
        ))
    }

    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<(Var, Var)> {
        let (tb, tf) = self.thetas(g, p, x)?;
        self.expand(g, p, tb, tf)
    }
}

/// Per-block values from one forward pass.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub input: Tensor,
    pub backcast: Tensor,
    pub forecast: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NBeats {
    pub config: NBeatsConfig,
    n_channels: usize,
    store: ParamStore,
    blocks: Vec<BasisBlock>,
}

pub(crate) fn block_name(stack: usize, block: usize) -> String {
    format!("stack{stack}.block{block}")
}

impl NBeats {
    pub fn new(config: NBeatsConfig, n_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let len = n_channels * INPUT_LEN;
        let mut blocks = Vec::new();
        for s in 0..config.n_stacks {
            for b in 0..config.blocks_per_stack {
                blocks.push(BasisBlock::new(
                    &mut store,
                    &block_name(s, b),
                    len,
                    config.hidden_width,
                    config.theta_dim,
                    len,
                    HORIZON,
                    &mut rng,
                ));
            }
        }
        Ok(Self {
            config,
            n_channels,
            store,
            blocks,
        })
    }

    pub fn blocks(&self) -> &[BasisBlock] {
        &self.blocks
    }

    fn run(&self, g: &mut Graph, p: &[Var], x: Var, trace: &mut Vec<[Var; 3]>) -> Result<Var> {
        check_input(g, x, self.n_channels)?;
        let mut residual = x;
        let mut total: Option<Var> = None;
        for block in &self.blocks {
            let (back, fore) = block.forward(g, p, residual)?;
            trace.push([residual, back, fore]);
            residual = g.sub(residual, back)?;
            total = Some(match total {
                Some(t) => g.add(t, fore)?,
                None => fore,
            });
        }
        Ok(total.expect("at least one block"))
    }

    /// Forward pass that also reports each block's input, backcast and
    /// forecast.
    pub fn trace(&self, input: &Tensor) -> Result<(Tensor, Vec<BlockTrace>)> {
        let mut g = Graph::new();
        let p = self.store.bind_constant(&mut g);
        let x = g.constant(input.clone());
        let mut raw = Vec::new();
        let out = self.run(&mut g, &p, x, &mut raw)?;
        Ok((g.value(out).clone(), collect_trace(&g, &raw)))
    }
}

pub(crate) fn collect_trace(g: &Graph, raw: &[[Var; 3]]) -> Vec<BlockTrace> {
    raw.iter()
        .map(|[i, b, f]| BlockTrace {
            input: g.value(*i).clone(),
            backcast: g.value(*b).clone(),
            forecast: g.value(*f).clone(),
        })
        .collect()
}

impl ForecastModel for NBeats {
    fn kind(&self) -> ModelKind {
        ModelKind::NBeats
    }

    fn n_channels(&self) -> usize {
        self.n_channels
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, p: &[Var], x: Var, _rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        self.run(g, p, x, &mut Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradient, relative_error};

    fn small(n_stacks: usize) -> NBeatsConfig {
        NBeatsConfig {
            n_stacks,
            blocks_per_stack: 1,
            hidden_width: 16,
            theta_dim: 4,
        }
    }

    fn input(rows: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(&[rows, c * INPUT_LEN], 1.0, &mut rng).map(|v| 0.5 + 0.4 * v)
    }

    #[test]
    fn output_shape_and_finiteness() {
        for c in [1, 3] {
            let m = NBeats::new(small(2), c, 1).unwrap();
            let y = m.predict(&input(4, c, 2)).unwrap();
            assert_eq!(y.shape(), &[4, HORIZON]);
            assert!(y.is_finite());
        }
    }

    #[test]
    fn zero_theta_f_gives_zero_forecast() {
        let m = NBeats::new(small(1), 1, 3).unwrap();
        let block = &m.blocks()[0];
        let mut g = Graph::new();
        let p = m.params().bind_constant(&mut g);
        let tb = g.constant(Tensor::zeros(&[1, 4]));
        let tf = g.constant(Tensor::zeros(&[1, 4]));
        let (_, f) = block.expand(&mut g, &p, tb, tf).unwrap();
        assert!(g.value(f).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_theta_selects_basis_row() {
        let m = NBeats::new(small(1), 1, 3).unwrap();
        let block = &m.blocks()[0];
        let basis = &m.params().tensors()[block.basis_f.w];
        for j in 0..4 {
            let mut g = Graph::new();
            let p = m.params().bind_constant(&mut g);
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let tb = g.constant(Tensor::zeros(&[1, 4]));
            let tf = g.constant(Tensor::new(&[1, 4], e).unwrap());
            let (_, f) = block.expand(&mut g, &p, tb, tf).unwrap();
            assert_eq!(g.value(f).data(), basis.row(j));
        }
    }

    #[test]
    fn single_block_forecast_is_model_forecast() {
        let m = NBeats::new(small(1), 1, 4).unwrap();
        let x = input(2, 1, 5);
        let (y, trace) = m.trace(&x).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(y, trace[0].forecast);
    }

    #[test]
    fn forecast_is_sum_of_block_forecasts() {
        let m = NBeats::new(small(3), 3, 6).unwrap();
        let x = input(3, 3, 7);
        let (y, trace) = m.trace(&x).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            let s: f64 = trace.iter().map(|t| t.forecast.data()[i]).sum();
            assert!((v - s).abs() < 1e-12);
        }
        for w in trace.windows(2) {
            for i in 0..x.len() {
                let expect = w[0].input.data()[i] - w[0].backcast.data()[i];
                assert!((w[1].input.data()[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_basis_collapses_to_identity_residuals() {
        let mut m = NBeats::new(small(3), 1, 8).unwrap();
        let basis: Vec<usize> = m
            .blocks()
            .iter()
            .flat_map(|b| [b.basis_b.w, b.basis_f.w])
            .collect();
        for i in basis {
            let t = &mut m.params_mut().tensors_mut()[i];
            *t = Tensor::zeros(t.shape());
        }
        let x = input(2, 1, 9);
        let (y, trace) = m.trace(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        for t in &trace {
            assert_eq!(t.input, x);
        }
    }

    #[test]
    fn first_layer_gradient_matches_finite_differences() {
        let m = NBeats::new(small(2), 1, 10).unwrap();
        let x = input(2, 1, 11);
        let w_idx = m.blocks()[0].fc.layers[0].w;

        let loss_at = |w: &Tensor| {
            let mut mm = m.clone();
            mm.params_mut().tensors_mut()[w_idx] = w.clone();
            let y = mm.predict(&x).unwrap();
            y.data().iter().enumerate().map(|(i, v)| v * (1.0 + i as f64 * 0.01)).sum::<f64>()
        };
        let mut g = Graph::new();
        let p = m.params().bind(&mut g);
        let xv = g.constant(x.clone());
        let y = m.forward(&mut g, &p, xv, None).unwrap();
        let weights = Tensor::new(
            &[2, HORIZON],
            (0..2 * HORIZON).map(|i| 1.0 + i as f64 * 0.01).collect(),
        )
        .unwrap();
        let wv = g.constant(weights);
        let prod = g.mul(y, wv).unwrap();
        let l = g.sum(prod);
        let grads = g.backward(l).unwrap();
        let analytic = grads.get(p[w_idx]).unwrap().clone();
        let numeric = finite_difference_gradient(loss_at, &m.params().tensors()[w_idx], 1e-6);
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn rejects_wrong_width() {
        let m = NBeats::new(small(1), 3, 0).unwrap();
        assert!(m.predict(&input(1, 1, 0)).is_err());
    }
}
