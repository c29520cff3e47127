//! N-HiTS: N-BEATS blocks behind per-channel max pooling, with coarse
//! forecasts and backcasts upsampled by linear interpolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nbeats::{block_name, collect_trace, BasisBlock, BlockTrace};
use super::params::ParamStore;
use super::{check_input, ForecastModel, ModelKind};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{HORIZON, INPUT_LEN};

/// One entry per stack in `pool_kernels` and `coarse_lengths`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NHitsConfig {
    pub pool_kernels: Vec<usize>,
    pub coarse_lengths: Vec<usize>,
    pub blocks_per_stack: usize,
    pub hidden_width: usize,
    pub theta_dim: usize,
}

impl Default for NHitsConfig {
    fn default() -> Self {
        Self {
            pool_kernels: vec![8, 4, 1],
            coarse_lengths: vec![6, 12, 36],
            blocks_per_stack: 1,
            hidden_width: 256,
            theta_dim: 32,
        }
    }
}

impl NHitsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_kernels.is_empty() || self.pool_kernels.len() != self.coarse_lengths.len() {
            return Err(Error::Config(format!(
                "pool_kernels ({}) and coarse_lengths ({}) need one entry per stack",
                self.pool_kernels.len(),
                self.coarse_lengths.len()
            )));
        }
        if self.pool_kernels.contains(&0) {
            return Err(Error::Config("pool kernels must be >= 1".into()));
        }
        if self.coarse_lengths.iter().any(|&m| m == 0 || m > HORIZON) {
            return Err(Error::Config(format!(
                "coarse lengths must lie in 1..={HORIZON}, got {:?}",
                self.coarse_lengths
            )));
        }
        if self.blocks_per_stack == 0 || self.hidden_width == 0 || self.theta_dim == 0 {
            return Err(Error::Config(format!("n-hits sizes must all be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct HierBlock {
    inner: BasisBlock,
    kernel: usize,
    coarse_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NHits {
    pub config: NHitsConfig,
    n_channels: usize,
    store: ParamStore,
    blocks: Vec<HierBlock>,
}

impl NHits {
    pub fn new(config: NHitsConfig, n_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut blocks = Vec::new();
        for (s, (&kernel, &coarse_len)) in
            config.pool_kernels.iter().zip(&config.coarse_lengths).enumerate()
        {
            let pooled = n_channels * INPUT_LEN.div_ceil(kernel);
            for b in 0..config.blocks_per_stack {
                let inner = BasisBlock::new(
                    &mut store,
                    &block_name(s, b),
                    pooled,
                    config.hidden_width,
                    config.theta_dim,
                    pooled,
                    coarse_len,
                    &mut rng,
                );
                blocks.push(HierBlock {
                    inner,
                    kernel,
                    coarse_len,
                });
            }
        }
        Ok(Self {
            config,
            n_channels,
            store,
            blocks,
        })
    }

    /// `(backcast [B, C·72], forecast [B, 36])` of one block.
    fn block_forward(&self, blk: &HierBlock, g: &mut Graph, p: &[Var], x: Var) -> Result<(Var, Var)> {
        let batch = g.value(x).rows();
        let c = self.n_channels;
        let per_channel = g.reshape(x, &[batch * c, INPUT_LEN])?;
        let pooled = g.max_pool_1d(per_channel, blk.kernel)?;
        let plen = g.value(pooled).last_dim();
        let flat = g.reshape(pooled, &[batch, c * plen])?;
        let (back, fore) = blk.inner.forward(g, p, flat)?;
        debug_assert_eq!(g.value(fore).last_dim(), blk.coarse_len);
        let back = g.reshape(back, &[batch * c, plen])?;
        let back = g.interpolate_linear(back, INPUT_LEN)?;
        let back = g.reshape(back, &[batch, c * INPUT_LEN])?;
        let fore = g.interpolate_linear(fore, HORIZON)?;
        Ok((back, fore))
    }

    fn run(&self, g: &mut Graph, p: &[Var], x: Var, trace: &mut Vec<[Var; 3]>) -> Result<Var> {
        check_input(g, x, self.n_channels)?;
        let mut residual = x;
        let mut total: Option<Var> = None;
        for blk in &self.blocks {
            let (back, fore) = self.block_forward(blk, g, p, residual)?;
            trace.push([residual, back, fore]);
            residual = g.sub(residual, back)?;
            total = Some(match total {
                Some(t) => g.add(t, fore)?,
                None => fore,
            });
        }
        Ok(total.expect("at least one block"))
    }

    pub fn trace(&self, input: &Tensor) -> Result<(Tensor, Vec<BlockTrace>)> {
        let mut g = Graph::new();
        let p = self.store.bind_constant(&mut g);
        let x = g.constant(input.clone());
        let mut raw = Vec::new();
        let out = self.run(&mut g, &p, x, &mut raw)?;
        Ok((g.value(out).clone(), collect_trace(&g, &raw)))
    }
}

impl ForecastModel for NHits {
    fn kind(&self) -> ModelKind {
        ModelKind::NHits
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
    use crate::models::nbeats::{NBeats, NBeatsConfig};

    fn input(rows: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(&[rows, c * INPUT_LEN], 1.0, &mut rng).map(|v| 0.5 + 0.4 * v)
    }

    fn small(kernels: Vec<usize>, coarse: Vec<usize>) -> NHitsConfig {
        NHitsConfig {
            pool_kernels: kernels,
            coarse_lengths: coarse,
            blocks_per_stack: 1,
            hidden_width: 16,
            theta_dim: 4,
        }
    }

    #[test]
    fn default_pooled_lengths() {
        let m = NHits::new(NHitsConfig::default(), 1, 0).unwrap();
        let first = &m.blocks[0].inner.fc.layers[0];
        assert_eq!(first.fan_in, 9);
        assert_eq!(m.blocks[1].inner.fc.layers[0].fan_in, 18);
        assert_eq!(m.blocks[2].inner.fc.layers[0].fan_in, 72);
    }

    #[test]
    fn shapes_for_any_valid_config() {
        for (k, mlen) in [(vec![8, 4, 1], vec![6, 12, 36]), (vec![5, 3], vec![1, 7]), (vec![72], vec![2])] {
            for c in [1, 3] {
                let m = NHits::new(small(k.clone(), mlen.clone()), c, 1).unwrap();
                let y = m.predict(&input(3, c, 2)).unwrap();
                assert_eq!(y.shape(), &[3, HORIZON]);
                assert!(y.is_finite());
            }
        }
    }

    #[test]
    fn unit_kernels_match_nbeats_with_shared_weights() {
        let nh = NHits::new(small(vec![1, 1, 1], vec![36, 36, 36]), 3, 5).unwrap();
        let mut nb = NBeats::new(
            NBeatsConfig {
                n_stacks: 3,
                blocks_per_stack: 1,
                hidden_width: 16,
                theta_dim: 4,
            },
            3,
            99,
        )
        .unwrap();
        nb.params_mut().load_from(nh.params()).unwrap();
        let x = input(4, 3, 6);
        let a = nh.predict(&x).unwrap();
        let b = nb.predict(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn forecast_is_sum_of_block_forecasts() {
        let m = NHits::new(small(vec![8, 4, 1], vec![6, 12, 36]), 1, 7).unwrap();
        let (y, trace) = m.trace(&input(2, 1, 8)).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            let s: f64 = trace.iter().map(|t| t.forecast.data()[i]).sum();
            assert!((v - s).abs() < 1e-12);
        }
        assert!(trace.iter().all(|t| t.backcast.shape() == [2, INPUT_LEN]));
    }

    #[test]
    fn two_point_coarse_forecast_is_a_ramp() {
        let m = NHits::new(small(vec![8], vec![2]), 1, 0).unwrap();
        let blk = &m.blocks[0];
        let mut g = Graph::new();
        let coarse = g.constant(Tensor::from_rows(&[vec![0.0, 2.0]]).unwrap());
        let up = g.interpolate_linear(coarse, HORIZON).unwrap();
        assert_eq!(blk.coarse_len, 2);
        for (i, v) in g.value(up).data().iter().enumerate() {
            assert!((v - 2.0 * i as f64 / 35.0).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(small(vec![0], vec![6]).validate().is_err());
        assert!(small(vec![2], vec![37]).validate().is_err());
        assert!(small(vec![2, 1], vec![6]).validate().is_err());
    }
}
