//! Input/target windows and patient-level splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::{PatientGroup, ScalingSpec};
use super::Channel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{GROUP_LEN, HORIZON, INPUT_LEN};

/// One training pair on the scaled `[0, 1]` axis.
///
/// `input[0]` is always the target channel; covariates follow in
/// [`Channel::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub input: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub target_channel: Channel,
    pub covariate_channels: Vec<Channel>,
    pub group_id: String,
    pub patient_id: String,
}

impl WindowSample {
    pub fn n_channels(&self) -> usize {
        self.input.len()
    }

    /// Channel-major flattening, `[C·72]`.
    pub fn flat_input(&self) -> Vec<f64> {
        self.input.concat()
    }
}

/// Input channel order for a target with or without covariates.
pub fn input_channels(target: Channel, with_covariates: bool) -> Vec<Channel> {
    let mut out = vec![target];
    if with_covariates {
        out.extend(Channel::ALL.iter().copied().filter(|&c| c != target));
    }
    out
}

/// First 72 steps as input, last 36 steps of the target channel as target.
pub fn make_window(
    group: &PatientGroup,
    target: Channel,
    with_covariates: bool,
    scaling: &ScalingSpec,
) -> Result<WindowSample> {
    if let Some(c) = group.channels.iter().find(|c| c.len() != GROUP_LEN) {
        return Err(Error::Contract(format!(
            "group {} has {} samples, expected {GROUP_LEN}",
            group.group_id,
            c.len()
        )));
    }
    let channels = input_channels(target, with_covariates);
    let input = channels
        .iter()
        .map(|&c| scaling.scale_series(&group.channel(c)[..INPUT_LEN], c))
        .collect();
    let target_series = scaling.scale_series(&group.channel(target)[INPUT_LEN..], target);
    debug_assert_eq!(target_series.len(), HORIZON);
    Ok(WindowSample {
        input,
        target: target_series,
        target_channel: target,
        covariate_channels: channels[1..].to_vec(),
        group_id: group.group_id.clone(),
        patient_id: group.patient_id.clone(),
    })
}

/// Stacks samples into `([n, C·72] inputs, [n, 36] targets)`.
pub fn batch_tensors(samples: &[&WindowSample]) -> Result<(Tensor, Tensor)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let width = samples[0].n_channels() * INPUT_LEN;
    let mut x = Vec::with_capacity(n * width);
    let mut y = Vec::with_capacity(n * HORIZON);
    for s in samples {
        let flat = s.flat_input();
        if flat.len() != width {
            return Err(Error::shape("batch", &[width], &[flat.len()]));
        }
        x.extend(flat);
        y.extend_from_slice(&s.target);
    }
    Ok((Tensor::new(&[n, width], x)?, Tensor::new(&[n, HORIZON], y)?))
}

/// Patient-disjoint train / validation / test partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

impl<T> DatasetSplit<T> {
    pub fn try_map<U>(&self, f: impl Fn(&T) -> Result<U>) -> Result<DatasetSplit<U>> {
        Ok(DatasetSplit {
            train: self.train.iter().map(&f).collect::<Result<_>>()?,
            validation: self.validation.iter().map(&f).collect::<Result<_>>()?,
            test: self.test.iter().map(&f).collect::<Result<_>>()?,
        })
    }
}

/// Shuffles patients with `seed` and fills train, validation and test in
/// turn until each reaches its 80 / 90 / 100 % share of the group count.
/// Validation and test each receive at least one patient.
pub fn split_dataset(groups: Vec<PatientGroup>, seed: u64) -> Result<DatasetSplit<PatientGroup>> {
    let mut by_patient: BTreeMap<String, Vec<PatientGroup>> = BTreeMap::new();
    for g in groups {
        by_patient.entry(g.patient_id.clone()).or_default().push(g);
    }
    if by_patient.len() < 3 {
        return Err(Error::Contract(format!(
            "need at least 3 patients to split, got {}",
            by_patient.len()
        )));
    }
    let total: usize = by_patient.values().map(Vec::len).sum();
    let mut patients: Vec<Vec<PatientGroup>> = by_patient.into_values().collect();
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_patients = patients.len();
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let mut assigned = 0usize;
    for (i, groups) in patients.into_iter().enumerate() {
        let remaining = n_patients - i;
        let frac = assigned as f64 / total as f64;
        let val_empty = split.validation.is_empty();
        let part = if frac < 0.8 && remaining > 2 {
            &mut split.train
        } else if (frac < 0.9 && remaining > 1) || val_empty {
            &mut split.validation
        } else {
            &mut split.test
        };
        assigned += groups.len();
        part.extend(groups);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DiagnosisLabel;
    use std::collections::HashSet;

    fn group(patient: &str, idx: usize) -> PatientGroup {
        let ramp: Vec<f64> = (0..GROUP_LEN).map(|i| 60.0 + i as f64 * 0.5).collect();
        PatientGroup {
            patient_id: patient.into(),
            group_id: format!("{patient}-{idx}"),
            channels: [ramp.clone(), ramp.clone(), ramp.iter().map(|v| v / 4.0).collect()],
            diagnosis_offset_min: 540 * (idx as i64 + 1),
            label: DiagnosisLabel::Sepsis,
        }
    }

    #[test]
    fn window_shapes() {
        let s = ScalingSpec::default();
        let g = group("p", 0);
        let w = make_window(&g, Channel::Mbp, false, &s).unwrap();
        assert_eq!(w.input.len(), 1);
        assert_eq!(w.input[0].len(), 72);
        assert_eq!(w.target.len(), 36);
        let w3 = make_window(&g, Channel::Hr, true, &s).unwrap();
        assert_eq!(w3.input.len(), 3);
        assert_eq!(w3.covariate_channels, vec![Channel::Mbp, Channel::Rr]);
        for (h, v) in w.target.iter().enumerate() {
            assert_eq!(*v, s.scale(g.channel(Channel::Mbp)[72 + h], Channel::Mbp));
        }
        assert!(w3.input.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let mut g = group("p", 0);
        g.channels[1].pop();
        assert!(make_window(&g, Channel::Hr, false, &ScalingSpec::default()).is_err());
    }

    #[test]
    fn ten_patients_split_eight_one_one() {
        let groups = (0..10).map(|i| group(&format!("p{i}"), 0)).collect();
        let s = split_dataset(groups, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_and_patient_disjoint() {
        let mut groups = Vec::new();
        for p in 0..30 {
            for k in 0..(1 + p % 5) {
                groups.push(group(&format!("p{p}"), k));
            }
        }
        let a = split_dataset(groups.clone(), 11).unwrap();
        let b = split_dataset(groups.clone(), 11).unwrap();
        assert_eq!(a, b);
        let ids = |v: &[PatientGroup]| v.iter().map(|g| g.patient_id.clone()).collect::<HashSet<_>>();
        let (tr, va, te) = (ids(&a.train), ids(&a.validation), ids(&a.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        // patient p4 has 5 groups, all in one partition
        let homes = [&a.train, &a.validation, &a.test]
            .iter()
            .filter(|part| part.iter().any(|g| g.patient_id == "p4"))
            .count();
        assert_eq!(homes, 1);
    }

    #[test]
    fn too_few_patients() {
        let groups = vec![group("a", 0), group("b", 0)];
        assert!(split_dataset(groups, 0).is_err());
        let three = vec![group("a", 0), group("b", 0), group("c", 0)];
        let s = split_dataset(three, 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 1, 1));
    }
}
