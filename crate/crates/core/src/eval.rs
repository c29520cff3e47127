//! Evaluation metrics: MSE, hard DTW, horizon sweeps and the persistence
//! crossover.
//!
//! All metrics are computed on the scaled `[0, 1]` axis.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Channel, WindowSample};
use crate::error::{Error, Result};
use crate::losses::LossMode;
use crate::models::{ForecastModel, ModelKind};
use crate::tensor::Tensor;
use crate::{HORIZON, INPUT_LEN};

/// Classical DTW with squared local cost and steps ↓, →, ↘.
pub fn hard_dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract(format!(
            "hard_dtw needs non-empty inputs, got lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = b.len();
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for &ai in a {
        cur[0] = f64::INFINITY;
        for j in 1..=n {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = (ai - b[j - 1]).powi(2) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n])
}

/// Metrics of one (model, target, covariates, loss) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub target: Channel,
    pub covariates: bool,
    /// `None` for untrained baselines.
    pub loss: Option<LossMode>,
    pub mse: f64,
    /// `mse × 1e4`.
    pub mse_scaled: f64,
    pub dtw: f64,
    /// Mean DTW over the first `h` steps, `h = 1..=36`.
    pub horizon_curve: Vec<f64>,
    pub n_samples: usize,
}

/// Batched evaluation-mode forecasts, one row per sample.
pub fn predict_samples(model: &dyn ForecastModel, samples: &[WindowSample]) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let width = model.n_channels() * INPUT_LEN;
        let mut data = Vec::with_capacity(chunk.len() * width);
        for s in chunk {
            data.extend(s.flat_input());
        }
        let x = Tensor::new(&[chunk.len(), data.len() / chunk.len()], data)?;
        let y = model.predict(&x)?;
        out.extend((0..chunk.len()).map(|r| y.row(r).to_vec()));
    }
    Ok(out)
}

/// `(mse, horizon curve)` for forecasts against targets.
pub fn score_forecasts(forecasts: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if forecasts.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty test set".into()));
    }
    if forecasts.len() != targets.len() {
        return Err(Error::shape("score_forecasts", &[forecasts.len()], &[targets.len()]));
    }
    let n = forecasts.len() as f64;
    let mut mse = 0.0;
    let mut curve = vec![0.0; HORIZON];
    for (f, t) in forecasts.iter().zip(targets) {
        if f.len() != HORIZON || t.len() != HORIZON {
            return Err(Error::shape("score_forecasts", &[f.len()], &[t.len()]));
        }
        mse += f.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / HORIZON as f64;
        for (h, c) in curve.iter_mut().enumerate() {
            *c += hard_dtw(&f[..=h], &t[..=h])?;
        }
    }
    curve.iter_mut().for_each(|c| *c /= n);
    Ok((mse / n, curve))
}

/// Mean DTW of the first `h` forecast steps for `h = 1..=36`.
pub fn horizon_sweep(model: &dyn ForecastModel, samples: &[WindowSample]) -> Result<Vec<f64>> {
    let forecasts = predict_samples(model, samples)?;
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.clone()).collect();
    Ok(score_forecasts(&forecasts, &targets)?.1)
}

/// Scores `model` on `samples`; the reported DTW is the full-horizon end
/// of the horizon curve.
pub fn evaluate_model(
    model: &dyn ForecastModel,
    samples: &[WindowSample],
    loss: Option<LossMode>,
) -> Result<EvalReport> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Contract("cannot evaluate an empty test set".into()))?;
    let forecasts = predict_samples(model, samples)?;
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.clone()).collect();
    let (mse, curve) = score_forecasts(&forecasts, &targets)?;
    Ok(EvalReport {
        model: model.kind(),
        target: first.target_channel,
        covariates: !first.covariate_channels.is_empty(),
        loss,
        mse,
        mse_scaled: mse * 1e4,
        dtw: curve[HORIZON - 1],
        horizon_curve: curve,
        n_samples: samples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crossover {
    /// First horizon (1-based) where the model is strictly below the baseline.
    At(usize),
    Never,
}

impl fmt::Display for Crossover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossover::At(h) => write!(f, "{h}"),
            Crossover::Never => f.write_str("never"),
        }
    }
}

pub fn first_crossover(curve: &[f64], baseline: &[f64]) -> Crossover {
    curve
        .iter()
        .zip(baseline)
        .position(|(m, p)| m < p)
        .map_or(Crossover::Never, |i| Crossover::At(i + 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverSummary {
    pub model: ModelKind,
    pub covariates: bool,
    pub loss: Option<LossMode>,
    pub crossover: Crossover,
}

/// First horizon at which each report's curve drops below the baseline's.
pub fn compare_to_persistence(reports: &[EvalReport], persistence: &EvalReport) -> Vec<CrossoverSummary> {
    reports
        .iter()
        .map(|r| CrossoverSummary {
            model: r.model,
            covariates: r.covariates,
            loss: r.loss,
            crossover: first_crossover(&r.horizon_curve, &persistence.horizon_curve),
        })
        .collect()
}

/// Label used for a report in plot data, e.g. `nhits/L-2/wc`.
pub fn series_label(r: &EvalReport) -> String {
    let mut label = r.model.name().to_string();
    if let Some(l) = r.loss {
        label.push('/');
        label.push_str(l.label());
    }
    if r.model.is_trainable() {
        label.push_str(if r.covariates { "/wc" } else { "/woc" });
    }
    label
}

/// `horizon_step,model,dtw`, 36 rows per report.
pub fn write_horizon_csv(writer: impl std::io::Write, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["horizon_step", "model", "dtw"])?;
    for r in reports {
        let label = series_label(r);
        for (h, v) in r.horizon_curve.iter().enumerate() {
            w.write_record([(h + 1).to_string(), label.clone(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<horizon csv>", e))?;
    Ok(())
}
