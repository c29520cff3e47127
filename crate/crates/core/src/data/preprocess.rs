//! Grid alignment, imputation, filtering, scaling and exclusion screens.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ingest::{DiagnosisLabel, DiagnosisRecord, RawVitalRecord};
use super::Channel;
use crate::error::{Error, Result};
use crate::{GROUP_LEN, STEP_MINUTES};

/// Longest tolerated run of missing samples, in minutes.
pub const MAX_GAP_MINUTES: i64 = 25;
/// Groups with any scaled channel below this sample standard deviation are dropped.
pub const LOW_VARIANCE_THRESHOLD: f64 = 0.0025;
/// Width of the centered moving-average filter.
pub const FILTER_WIDTH: usize = 5;

/// One 9-hour segment ending at a diagnosis offset, in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientGroup {
    pub patient_id: String,
    pub group_id: String,
    /// `[HR, MBP, RR]`, each with [`GROUP_LEN`] samples.
    pub channels: [Vec<f64>; 3],
    pub diagnosis_offset_min: i64,
    pub label: DiagnosisLabel,
}

impl PatientGroup {
    pub fn channel(&self, c: Channel) -> &[f64] {
        &self.channels[c.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    GapTooLong,
    LowVariance,
    LeadingMissing,
    SbpBelowDbp,
}

impl ExclusionReason {
    pub fn code(self) -> &'static str {
        match self {
            ExclusionReason::GapTooLong => "gap_too_long",
            ExclusionReason::LowVariance => "low_variance",
            ExclusionReason::LeadingMissing => "leading_missing",
            ExclusionReason::SbpBelowDbp => "sbp_lt_dbp",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub group_id: String,
    pub reason: ExclusionReason,
}

/// Writes the `group_id,reason_code` exclusion log.
pub fn write_exclusion_log(writer: impl std::io::Write, exclusions: &[Exclusion]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group_id", "reason_code"])?;
    for e in exclusions {
        w.write_record([e.group_id.as_str(), e.reason.code()])?;
    }
    w.flush().map_err(|e| Error::io("<exclusion log>", e))?;
    Ok(())
}

/// `dbp + (sbp − dbp) / 3`.
pub fn derive_mbp(sbp: f64, dbp: f64) -> Result<f64> {
    if sbp < dbp {
        return Err(Error::DataQuality(format!(
            "systolic {sbp} below diastolic {dbp}"
        )));
    }
    if dbp < 0.0 {
        return Err(Error::DataQuality(format!("negative diastolic {dbp}")));
    }
    Ok(dbp + (sbp - dbp) / 3.0)
}

/// Fills each missing sample with the last observed value.
///
/// Runs longer than `max_gap_min` minutes (strictly more than
/// `max_gap_min / 5` consecutive samples) and series that start with a
/// missing sample are rejected.
pub fn impute_forward_fill(
    series: &[Option<f64>],
    max_gap_min: i64,
) -> Result<Vec<f64>, ExclusionReason> {
    let max_run = (max_gap_min / STEP_MINUTES) as usize;
    let mut out = Vec::with_capacity(series.len());
    let mut last: Option<f64> = None;
    let mut run = 0;
    for v in series {
        match (v, last) {
            (Some(x), _) => {
                run = 0;
                last = Some(*x);
                out.push(*x);
            }
            (None, None) => return Err(ExclusionReason::LeadingMissing),
            (None, Some(prev)) => {
                run += 1;
                if run > max_run {
                    return Err(ExclusionReason::GapTooLong);
                }
                out.push(prev);
            }
        }
    }
    Ok(out)
}

/// Centered moving average of width [`FILTER_WIDTH`]; windows are truncated
/// at the edges and averaged over the samples they contain.
pub fn low_pass_filter(series: &[f64]) -> Vec<f64> {
    let half = FILTER_WIDTH / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_std(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let ss: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Fixed clinical scaling ranges per channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    /// beats per minute
    pub hr: (f64, f64),
    /// mmHg
    pub mbp: (f64, f64),
    /// breaths per minute
    pub rr: (f64, f64),
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            hr: (0.0, 300.0),
            mbp: (0.0, 190.0),
            rr: (0.0, 100.0),
        }
    }
}

impl ScalingSpec {
    pub fn range(&self, channel: Channel) -> (f64, f64) {
        match channel {
            Channel::Hr => self.hr,
            Channel::Mbp => self.mbp,
            Channel::Rr => self.rr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in Channel::ALL {
            let (lo, hi) = self.range(c);
            if !(hi > lo) {
                return Err(Error::Config(format!(
                    "scaling range for {c} must have max > min, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Maps a physical value into `[0, 1]`; out-of-range values are clamped
    /// with a warning.
    pub fn scale(&self, value: f64, channel: Channel) -> f64 {
        let (lo, hi) = self.range(channel);
        let clamped = value.clamp(lo, hi);
        if clamped != value {
            log::warn!("{channel} value {value} outside [{lo}, {hi}], clamped");
        }
        (clamped - lo) / (hi - lo)
    }

    pub fn unscale(&self, value: f64, channel: Channel) -> f64 {
        let (lo, hi) = self.range(channel);
        value * (hi - lo) + lo
    }

    pub fn scale_series(&self, series: &[f64], channel: Channel) -> Vec<f64> {
        series.iter().map(|&v| self.scale(v, channel)).collect()
    }
}

/// Drops groups in which any channel's scaled sample standard deviation is
/// strictly below `threshold`.
pub fn exclude_low_variance(
    groups: Vec<PatientGroup>,
    scaling: &ScalingSpec,
    threshold: f64,
) -> (Vec<PatientGroup>, Vec<Exclusion>) {
    let mut kept = Vec::with_capacity(groups.len());
    let mut dropped = Vec::new();
    for g in groups {
        let flat = Channel::ALL
            .iter()
            .any(|&c| sample_std(&scaling.scale_series(g.channel(c), c)) < threshold);
        if flat {
            dropped.push(Exclusion {
                group_id: g.group_id.clone(),
                reason: ExclusionReason::LowVariance,
            });
        } else {
            kept.push(g);
        }
    }
    (kept, dropped)
}

/// Per-slot raw values of one group before imputation.
struct GridSlots {
    hr: Vec<Option<f64>>,
    sbp: Vec<Option<f64>>,
    dbp: Vec<Option<f64>>,
    rr: Vec<Option<f64>>,
}

/// Snaps records onto the 5-minute grid of [`GROUP_LEN`] slots that ends at
/// `end_offset`. A record lands in the nearest slot; later records in the
/// same slot overwrite earlier ones.
fn align(records: &[&RawVitalRecord], end_offset: i64) -> GridSlots {
    let start = end_offset - STEP_MINUTES * (GROUP_LEN as i64 - 1);
    let mut slots = GridSlots {
        hr: vec![None; GROUP_LEN],
        sbp: vec![None; GROUP_LEN],
        dbp: vec![None; GROUP_LEN],
        rr: vec![None; GROUP_LEN],
    };
    for r in records {
        let rel = r.offset_min - start;
        let slot = (rel as f64 / STEP_MINUTES as f64).round();
        if slot < 0.0 || slot >= GROUP_LEN as f64 {
            continue;
        }
        let s = slot as usize;
        slots.hr[s] = r.hr.or(slots.hr[s]);
        slots.sbp[s] = r.sbp.or(slots.sbp[s]);
        slots.dbp[s] = r.dbp.or(slots.dbp[s]);
        slots.rr[s] = r.rr.or(slots.rr[s]);
    }
    slots
}

fn assemble(
    records: &[&RawVitalRecord],
    diag: &DiagnosisRecord,
) -> Result<PatientGroup, ExclusionReason> {
    let slots = align(records, diag.diagnosis_offset_min);
    let mut mbp = Vec::with_capacity(GROUP_LEN);
    for (s, d) in slots.sbp.iter().zip(&slots.dbp) {
        mbp.push(match (s, d) {
            (Some(s), Some(d)) => {
                Some(derive_mbp(*s, *d).map_err(|_| ExclusionReason::SbpBelowDbp)?)
            }
            _ => None,
        });
    }
    let hr = impute_forward_fill(&slots.hr, MAX_GAP_MINUTES)?;
    let mbp = impute_forward_fill(&mbp, MAX_GAP_MINUTES)?;
    let rr = impute_forward_fill(&slots.rr, MAX_GAP_MINUTES)?;
    Ok(PatientGroup {
        patient_id: diag.patient_id.clone(),
        group_id: diag.group_id.clone(),
        channels: [
            low_pass_filter(&hr),
            low_pass_filter(&mbp),
            low_pass_filter(&rr),
        ],
        diagnosis_offset_min: diag.diagnosis_offset_min,
        label: diag.label,
    })
}

/// Builds filtered groups for every diagnosis and applies all exclusion
/// screens. Output order follows the (sorted) diagnosis records.
pub fn build_groups(
    records: &[RawVitalRecord],
    diagnoses: &[DiagnosisRecord],
    scaling: &ScalingSpec,
) -> (Vec<PatientGroup>, Vec<Exclusion>) {
    let mut by_patient: BTreeMap<&str, Vec<&RawVitalRecord>> = BTreeMap::new();
    for r in records {
        by_patient.entry(r.patient_id.as_str()).or_default().push(r);
    }
    let mut groups = Vec::new();
    let mut exclusions = Vec::new();
    for d in diagnoses {
        let recs = by_patient
            .get(d.patient_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        match assemble(recs, d) {
            Ok(g) => groups.push(g),
            Err(reason) => exclusions.push(Exclusion {
                group_id: d.group_id.clone(),
                reason,
            }),
        }
    }
    let (kept, low_var) = exclude_low_variance(groups, scaling, LOW_VARIANCE_THRESHOLD);
    exclusions.extend(low_var);
    (kept, exclusions)
}
