//! DILATE: `α · soft-DTW + (1 − α) · ⟨A*_γ, Ω⟩`.

use serde::{Deserialize, Serialize};

use super::soft_dtw::{expected_path_tangent, omega_squared, soft_dtw, squared_cost};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DilateConfig {
    /// Weight of the shape term, in `[0, 1]`.
    pub alpha: f64,
    /// Soft-min smoothing, `> 0`.
    pub gamma: f64,
}

impl Default for DilateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 0.01,
        }
    }
}

impl DilateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!(
                "DILATE alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "DILATE gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Value of the loss and its two terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DilateTerms {
    pub loss: f64,
    pub shape: f64,
    pub temporal: f64,
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("dilate", &[pred.len()], &[target.len()]));
    }
    Ok(())
}

pub fn dilate_loss(pred: &[f64], target: &[f64], cfg: &DilateConfig) -> Result<DilateTerms> {
    Ok(dilate_value_and_grad(pred, target, cfg)?.0)
}

/// Gradient of the full objective w.r.t. `pred`.
pub fn dilate_backward(pred: &[f64], target: &[f64], cfg: &DilateConfig) -> Result<Vec<f64>> {
    Ok(dilate_value_and_grad(pred, target, cfg)?.1)
}

/// Loss terms and `∂loss/∂pred` in one pass.
///
/// The temporal term depends on `Δ` through the expected alignment, so its
/// gradient w.r.t. `Δ` is the Hessian-vector product `H·Ω`.
pub fn dilate_value_and_grad(
    pred: &[f64],
    target: &[f64],
    cfg: &DilateConfig,
) -> Result<(DilateTerms, Vec<f64>)> {
    cfg.validate()?;
    check_lengths(pred, target)?;
    let k = pred.len();
    let delta = squared_cost(pred, target);
    let stats = soft_dtw(&delta, cfg.gamma)?;
    let omega = omega_squared(k);
    let (temporal, expected, hvp) = expected_path_tangent(&stats, &omega);
    let shape = stats.value();
    let alpha = cfg.alpha;
    let loss = alpha * shape + (1.0 - alpha) * temporal;

    let mut grad = vec![0.0; k];
    for (i, gi) in grad.iter_mut().enumerate() {
        for j in 0..k {
            let g_delta = alpha * expected.get(i, j) + (1.0 - alpha) * hvp.get(i, j);
            *gi += g_delta * 2.0 * (pred[i] - target[j]);
        }
    }
    Ok((
        DilateTerms {
            loss,
            shape,
            temporal,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradient, relative_error};
    use crate::losses::soft_dtw::{expected_path, temporal_loss};
    use crate::Tensor;

    const PRED: [f64; 5] = [0.1, 0.6, 0.35, 0.8, 0.2];
    const TRUTH: [f64; 5] = [0.3, 0.5, 0.7, 0.1, 0.4];

    #[test]
    fn endpoints_select_single_terms() {
        let gamma = 0.1;
        let shape = soft_dtw(&squared_cost(&PRED, &TRUTH), gamma).unwrap();
        let e = expected_path(&shape);
        let temporal = temporal_loss(&e, &omega_squared(5)).unwrap();
        let a1 = dilate_loss(&PRED, &TRUTH, &DilateConfig { alpha: 1.0, gamma }).unwrap();
        let a0 = dilate_loss(&PRED, &TRUTH, &DilateConfig { alpha: 0.0, gamma }).unwrap();
        assert_eq!(a1.loss, shape.value());
        assert!((a0.loss - temporal).abs() < 1e-15);
    }

    #[test]
    fn identical_sequences_vanish() {
        // neighbours differ by >= 0.5 so off-diagonal paths carry ~e^{-25} mass
        let y = [0.0, 0.6, 0.1, 0.7, 0.2, 0.9];
        let t = dilate_loss(&y, &y, &DilateConfig::default()).unwrap();
        assert!(t.loss.abs() < 1e-3, "{t:?}");
        let g = dilate_backward(&y, &y, &DilateConfig::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
    }

    #[test]
    fn alpha_one_gradient_is_soft_dtw_gradient() {
        let cfg = DilateConfig {
            alpha: 1.0,
            gamma: 0.1,
        };
        let g = dilate_backward(&PRED, &TRUTH, &cfg).unwrap();
        let stats = soft_dtw(&squared_cost(&PRED, &TRUTH), 0.1).unwrap();
        let e = expected_path(&stats);
        for (i, gi) in g.iter().enumerate() {
            let manual: f64 = (0..5).map(|j| e.get(i, j) * 2.0 * (PRED[i] - TRUTH[j])).sum();
            assert!((gi - manual).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for alpha in [0.0, 0.25, 0.5, 1.0] {
            for gamma in [0.1, 0.01] {
                let cfg = DilateConfig { alpha, gamma };
                let analytic = Tensor::vector(dilate_backward(&PRED, &TRUTH, &cfg).unwrap());
                let numeric = finite_difference_gradient(
                    |p| dilate_loss(p.data(), &TRUTH, &cfg).unwrap().loss,
                    &Tensor::vector(PRED.to_vec()),
                    1e-5,
                );
                let err = relative_error(&analytic, &numeric);
                assert!(err < 1e-4, "alpha {alpha} gamma {gamma}: {err}");
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_lengths() {
        let bad = DilateConfig {
            alpha: 1.5,
            gamma: 0.1,
        };
        assert!(matches!(dilate_loss(&PRED, &TRUTH, &bad), Err(Error::Parameter(_))));
        let bad = DilateConfig {
            alpha: 0.5,
            gamma: 0.0,
        };
        assert!(dilate_loss(&PRED, &TRUTH, &bad).is_err());
        assert!(dilate_loss(&PRED, &TRUTH[..3], &DilateConfig::default()).is_err());
    }
}
