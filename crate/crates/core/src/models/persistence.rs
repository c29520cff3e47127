//! Repeats the last observed target value across the horizon.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::{check_input, ForecastModel, ModelKind};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::{HORIZON, INPUT_LEN};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Persistence {
    n_channels: usize,
    store: ParamStore,
}

impl Persistence {
    pub fn new(n_channels: usize) -> Self {
        Self {
            n_channels: n_channels.max(1),
            store: ParamStore::new(),
        }
    }
}

/// `[last; horizon]` for a single series.
pub fn persistence_forecast(series: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let last = *series
        .last()
        .ok_or_else(|| Error::Contract("persistence needs a non-empty input".into()))?;
    Ok(vec![last; horizon])
}

impl ForecastModel for Persistence {
    fn kind(&self) -> ModelKind {
        ModelKind::Persistence
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

    fn forward(&self, g: &mut Graph, _p: &[Var], x: Var, _rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        check_input(g, x, self.n_channels)?;
        let (rows, width) = (g.value(x).rows(), g.value(x).last_dim());
        let index: Vec<usize> = (0..rows)
            .flat_map(|r| std::iter::repeat_n(r * width + INPUT_LEN - 1, HORIZON))
            .collect();
        g.gather(x, Rc::new(index), &[rows, HORIZON])
    }
}
