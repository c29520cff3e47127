//! Plain-text results table: one row per (model, covariate mode), MSE* and
//! DTW columns split by training loss, one column block per target.

use std::fmt::Write;

use crate::data::Channel;
use crate::eval::EvalReport;
use crate::losses::LossMode;
use crate::models::ModelKind;

const MISSING: &str = "—";
const TARGETS: [Channel; 2] = [Channel::Mbp, Channel::Hr];
const ROW_ORDER: [ModelKind; 4] = [
    ModelKind::Persistence,
    ModelKind::NHits,
    ModelKind::NBeats,
    ModelKind::Tft,
];
const MODEL_W: usize = 12;
const COV_W: usize = 6;
const CELL_W: usize = 7;

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| MISSING.to_string(), |v| format!("{v:.2}"))
}

fn pad(s: &str, w: usize) -> String {
    let n = s.chars().count();
    if n >= w {
        s.to_string()
    } else {
        format!("{}{s}", " ".repeat(w - n))
    }
}

fn find<'a>(
    reports: &'a [EvalReport],
    model: ModelKind,
    covariates: Option<bool>,
    target: Channel,
    mode: LossMode,
) -> Option<&'a EvalReport> {
    // The last matching report wins so later runs override earlier ones.
    reports.iter().rev().find(|r| {
        r.model == model
            && r.target == target
            && covariates.is_none_or(|c| r.covariates == c)
            && (r.loss.is_none() || r.loss == Some(mode))
    })
}

/// Renders the reports as a fixed-width grid. Targets without any report
/// are left out; missing cells are shown as `—`. MSE* is MSE × 1e4.
pub fn render_results_table(reports: &[EvalReport]) -> String {
    let targets: Vec<Channel> = TARGETS
        .into_iter()
        .filter(|t| reports.iter().any(|r| r.target == *t))
        .collect();
    let mut rows: Vec<(ModelKind, Option<bool>)> = Vec::new();
    for kind in ROW_ORDER {
        if kind.is_trainable() {
            for cov in [true, false] {
                if reports.iter().any(|r| r.model == kind && r.covariates == cov) {
                    rows.push((kind, Some(cov)));
                }
            }
        } else if reports.iter().any(|r| r.model == kind) {
            rows.push((kind, None));
        }
    }

    let block_w = 4 * (CELL_W + 1) + 1;
    let mut out = String::new();
    let lead = format!("{:<MODEL_W$} {:<COV_W$} ", "", "");
    let _ = write!(out, "{:<MODEL_W$} {:<COV_W$} ", "Models", "Cov.");
    for t in &targets {
        let _ = write!(out, "|{:^w$}", t.display_name(), w = block_w - 1);
    }
    out.push('\n');
    out.push_str(&lead);
    for _ in &targets {
        let half = 2 * (CELL_W + 1) - 1;
        let _ = write!(out, "|{:^half$}|{:^half$} ", "MSE*", "DTW");
    }
    out.push('\n');
    out.push_str(&lead);
    for _ in &targets {
        out.push('|');
        for mode in [LossMode::L1, LossMode::L2, LossMode::L1, LossMode::L2] {
            let _ = write!(out, "{} ", pad(mode.label(), CELL_W));
        }
    }
    out.push('\n');
    let rule_len = MODEL_W + COV_W + 2 + targets.len() * block_w;
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');

    for (kind, cov) in rows {
        let cov_label = match cov {
            None => "-",
            Some(true) => "W C",
            Some(false) => "W/o C",
        };
        let _ = write!(out, "{:<MODEL_W$} {:<COV_W$} ", kind.display_name(), cov_label);
        for &t in &targets {
            out.push('|');
            let pick = |mode| find(reports, kind, cov, t, mode);
            let mse = [LossMode::L1, LossMode::L2].map(|m| pick(m).map(|r| r.mse_scaled));
            let dtw = [LossMode::L1, LossMode::L2].map(|m| pick(m).map(|r| r.dtw));
            for v in mse.into_iter().chain(dtw) {
                let _ = write!(out, "{} ", pad(&cell(v), CELL_W));
            }
        }
        out.push('\n');
    }
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}
