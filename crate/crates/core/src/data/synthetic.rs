//! Synthetic cohorts shaped like the preprocessed ICU groups.
//!
//! Each channel is `baseline + slope·t + amp·sin(2πt/period + phase)` plus
//! Gaussian noise. Deteriorating groups add a linear ramp (MBP falls, HR and
//! RR rise) that starts inside the input window and saturates after
//! `ramp_steps`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ingest::{DiagnosisLabel, DiagnosisRecord, RawVitalRecord};
use super::preprocess::{PatientGroup, ScalingSpec};
use super::Channel;
use crate::{GROUP_LEN, STEP_MINUTES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Multiplier on the per-channel noise standard deviations (1.5 bpm,
    /// 1.5 mmHg, 0.7 breaths/min). Zero gives the analytic trajectory.
    pub noise_scale: f64,
    /// Probability that a group carries a deterioration ramp.
    pub deterioration_prob: f64,
    /// Ramp magnitudes at saturation, `[HR rise, MBP drop, RR rise]`.
    pub ramp_magnitude: [f64; 3],
    pub ramp_steps: usize,
    /// Ramp onset is drawn uniformly from this step range.
    pub ramp_onset: (usize, usize),
    pub max_groups_per_patient: usize,
    pub scaling: ScalingSpec,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            noise_scale: 1.0,
            deterioration_prob: 1.0,
            ramp_magnitude: [25.0, 20.0, 6.0],
            ramp_steps: 60,
            ramp_onset: (24, 60),
            max_groups_per_patient: 3,
            scaling: ScalingSpec::default(),
        }
    }
}

const NOISE_STD: [f64; 3] = [1.5, 1.5, 0.7];
const RAMP_SIGN: [f64; 3] = [1.0, -1.0, 1.0];

/// Parameters of one group's analytic trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub baseline: [f64; 3],
    pub slope: [f64; 3],
    pub amplitude: [f64; 3],
    pub period: [f64; 3],
    pub phase: [f64; 3],
    pub ramp_onset: Option<usize>,
}

impl Trajectory {
    fn draw(rng: &mut ChaCha8Rng, patient_baseline: [f64; 3], cfg: &SyntheticConfig) -> Self {
        let mut t = Trajectory {
            baseline: [0.0; 3],
            slope: [0.0; 3],
            amplitude: [0.0; 3],
            period: [0.0; 3],
            phase: [0.0; 3],
            ramp_onset: None,
        };
        let amp_range = [(3.0, 8.0), (1.5, 4.0), (1.0, 3.0)];
        let slope_bound = [0.03, 0.02, 0.01];
        for c in 0..3 {
            t.baseline[c] = patient_baseline[c] * rng.random_range(0.95..1.05);
            t.slope[c] = rng.random_range(-slope_bound[c]..slope_bound[c]);
            t.amplitude[c] = rng.random_range(amp_range[c].0..amp_range[c].1);
            t.period[c] = rng.random_range(24.0..72.0);
            t.phase[c] = rng.random_range(0.0..TAU);
        }
        if rng.random_bool(cfg.deterioration_prob.clamp(0.0, 1.0)) {
            let (lo, hi) = cfg.ramp_onset;
            t.ramp_onset = Some(if hi > lo { rng.random_range(lo..hi) } else { lo });
        }
        t
    }

    /// Noise-free value of channel `c` at step `t`.
    pub fn value(&self, c: usize, t: usize, cfg: &SyntheticConfig) -> f64 {
        let tf = t as f64;
        let mut v = self.baseline[c]
            + self.slope[c] * tf
            + self.amplitude[c] * (TAU * tf / self.period[c] + self.phase[c]).sin();
        if let Some(onset) = self.ramp_onset {
            let frac = ((tf - onset as f64) / cfg.ramp_steps.max(1) as f64).clamp(0.0, 1.0);
            v += RAMP_SIGN[c] * cfg.ramp_magnitude[c] * frac;
        }
        v
    }
}

/// Draws the per-group trajectories: `(patient_id, group index, trajectory)`.
pub fn synthetic_trajectories(
    n_patients: usize,
    seed: u64,
    cfg: &SyntheticConfig,
) -> Vec<(String, usize, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_groups = cfg.max_groups_per_patient.max(1);
    let mut out = Vec::new();
    for p in 0..n_patients {
        let patient_id = format!("p{p:04}");
        let base = [
            rng.random_range(70.0..100.0),
            rng.random_range(65.0..90.0),
            rng.random_range(14.0..22.0),
        ];
        let n_groups = rng.random_range(1..=max_groups);
        for k in 0..n_groups {
            out.push((patient_id.clone(), k, Trajectory::draw(&mut rng, base, cfg)));
        }
    }
    out
}

/// Generates `n_patients` patients with 1 to `max_groups_per_patient` groups
/// each. Deterministic in `seed`.
pub fn generate_synthetic(n_patients: usize, seed: u64, cfg: &SyntheticConfig) -> Vec<PatientGroup> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    synthetic_trajectories(n_patients, seed, cfg)
        .into_iter()
        .map(|(patient_id, k, traj)| {
            let channels: [Vec<f64>; 3] = std::array::from_fn(|c| {
                let noise = Normal::new(0.0, NOISE_STD[c] * cfg.noise_scale.max(0.0))
                    .expect("finite std");
                let (lo, hi) = cfg.scaling.range(Channel::ALL[c]);
                (0..GROUP_LEN)
                    .map(|t| {
                        (traj.value(c, t, cfg) + noise.sample(&mut noise_rng)).clamp(lo, hi)
                    })
                    .collect()
            });
            PatientGroup {
                group_id: format!("{patient_id}-g{k}"),
                patient_id,
                channels,
                diagnosis_offset_min: group_end_offset(k),
                label: if traj.ramp_onset.is_some() {
                    DiagnosisLabel::SepticShock
                } else {
                    DiagnosisLabel::Sepsis
                },
            }
        })
        .collect()
}

/// Groups of one patient are laid end to end after a one-hour lead-in.
fn group_end_offset(k: usize) -> i64 {
    let span = STEP_MINUTES * GROUP_LEN as i64;
    60 + span * (k as i64 + 1) - STEP_MINUTES
}

/// Pulse pressure used to split MBP into systolic and diastolic values.
const PULSE_PRESSURE: f64 = 40.0;

/// Expands groups back into raw vitals and diagnosis rows, dropping each
/// measurement independently with probability `missing_rate`. The first and
/// last slots of every group are always kept.
pub fn synthetic_records(
    groups: &[PatientGroup],
    missing_rate: f64,
    seed: u64,
) -> (Vec<RawVitalRecord>, Vec<DiagnosisRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = missing_rate.clamp(0.0, 1.0);
    let mut vitals = Vec::with_capacity(groups.len() * GROUP_LEN);
    let mut diagnoses = Vec::with_capacity(groups.len());
    for g in groups {
        let start = g.diagnosis_offset_min - STEP_MINUTES * (GROUP_LEN as i64 - 1);
        for t in 0..GROUP_LEN {
            let edge = t == 0 || t == GROUP_LEN - 1;
            let mut keep = |v: f64| (edge || !rng.random_bool(p)).then_some(v);
            let mbp = g.channels[1][t];
            let bp_kept = keep(mbp).is_some();
            vitals.push(RawVitalRecord {
                patient_id: g.patient_id.clone(),
                offset_min: start + STEP_MINUTES * t as i64,
                hr: keep(g.channels[0][t]),
                sbp: bp_kept.then_some(mbp + 2.0 * PULSE_PRESSURE / 3.0),
                dbp: bp_kept.then_some(mbp - PULSE_PRESSURE / 3.0),
                rr: keep(g.channels[2][t]),
            });
        }
        diagnoses.push(DiagnosisRecord {
            patient_id: g.patient_id.clone(),
            group_id: g.group_id.clone(),
            diagnosis_offset_min: g.diagnosis_offset_min,
            label: g.label,
        });
    }
    (vitals, diagnoses)
}

/// Eight single-channel sine groups for overfitting checks.
pub fn sine_groups(n: usize) -> Vec<PatientGroup> {
    (0..n)
        .map(|i| {
            let phase = i as f64 * 0.7;
            let wave = |base: f64, amp: f64, period: f64| -> Vec<f64> {
                (0..GROUP_LEN)
                    .map(|t| base + amp * (TAU * t as f64 / period + phase).sin())
                    .collect()
            };
            PatientGroup {
                patient_id: format!("sine{i}"),
                group_id: format!("sine{i}-g0"),
                channels: [wave(90.0, 20.0, 36.0), wave(80.0, 15.0, 48.0), wave(18.0, 4.0, 30.0)],
                diagnosis_offset_min: group_end_offset(0),
                label: DiagnosisLabel::Sepsis,
            }
        })
        .collect()
}
