//! Training objectives with analytic gradients.

pub mod dilate;
pub mod soft_dtw;

use serde::{Deserialize, Serialize};

pub use dilate::{dilate_backward, dilate_loss, dilate_value_and_grad, DilateConfig, DilateTerms};
pub use soft_dtw::{
    expected_path, omega_squared, soft_dtw, squared_cost, temporal_loss, AlignmentStats,
    CostMatrix, Matrix,
};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("mse_loss", &[pred.len()], &[target.len()]));
    }
    let k = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / k)
}

/// `2 (ŷ − y*) / k`.
pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("mse_grad", &[pred.len()], &[target.len()]));
    }
    let k = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(a, b)| 2.0 * (a - b) / k)
        .collect())
}

/// Training objective selector (`L-1` = MSE, `L-2` = DILATE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Dilate(DilateConfig),
}

/// Table column for a training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "L-1")]
    L1,
    #[serde(rename = "L-2")]
    L2,
}

impl LossMode {
    pub fn label(self) -> &'static str {
        match self {
            LossMode::L1 => "L-1",
            LossMode::L2 => "L-2",
        }
    }
}

impl Loss {
    pub fn mode(&self) -> LossMode {
        match self {
            Loss::Mse => LossMode::L1,
            Loss::Dilate(_) => LossMode::L2,
        }
    }

    pub fn label(&self) -> &'static str {
        self.mode().label()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Loss::Mse => Ok(()),
            Loss::Dilate(cfg) => cfg.validate(),
        }
    }

    /// Per-sample loss averaged over the rows of `pred` / `target` (`[batch, k]`).
    pub fn value_and_grad(&self, pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
        if pred.shape() != target.shape() {
            return Err(Error::shape("loss", pred.shape(), target.shape()));
        }
        let rows = pred.rows();
        let mut total = 0.0;
        let mut grad = Vec::with_capacity(pred.len());
        for r in 0..rows {
            let (p, t) = (pred.row(r), target.row(r));
            let (v, g) = match self {
                Loss::Mse => (mse_loss(p, t)?, mse_grad(p, t)?),
                Loss::Dilate(cfg) => {
                    let (terms, g) = dilate_value_and_grad(p, t, cfg)?;
                    (terms.loss, g)
                }
            };
            total += v;
            grad.extend(g.into_iter().map(|x| x / rows as f64));
        }
        Ok((total / rows as f64, Tensor::new(pred.shape(), grad)?))
    }

    /// Records the batch-mean loss of `pred` against `target` on `graph`.
    pub fn apply(&self, graph: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
        let (value, grad) = self.value_and_grad(graph.value(pred), target)?;
        graph.scalar_with_grad(pred, value, grad)
    }
}
