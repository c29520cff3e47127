//! From raw vitals rows to scaled windows: grid alignment, MBP derivation,
//! forward fill, low-pass filtering, exclusion screens and a patient-level
//! split.

use std::collections::BTreeMap;

use vitalcast::data::{
    build_groups, generate_synthetic, make_window, split_dataset, synthetic_records, Channel, ScalingSpec,
    SyntheticConfig,
};

fn main() -> vitalcast::Result<()> {
    let groups = generate_synthetic(40, 1, &SyntheticConfig::default());
    // Drop 35% of measurements to exercise imputation and the gap screen.
    let (vitals, diagnoses) = synthetic_records(&groups, 0.35, 1);
    println!("{} vitals rows, {} diagnosis rows", vitals.len(), diagnoses.len());

    let scaling = ScalingSpec::default();
    let (kept, excluded) = build_groups(&vitals, &diagnoses, &scaling);
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &excluded {
        *reasons.entry(e.reason.code()).or_default() += 1;
    }
    println!("kept {} groups, excluded {}: {reasons:?}", kept.len(), excluded.len());

    let split = split_dataset(kept, 42)?;
    let windows = split.try_map(|g| make_window(g, Channel::Mbp, true, &scaling))?;
    println!(
        "windows: {} train / {} validation / {} test",
        windows.train.len(),
        windows.validation.len(),
        windows.test.len()
    );
    let w = &windows.train[0];
    println!(
        "{}: channels {:?} + {:?}, last input MBP {:.4} scaled = {:.1} mmHg",
        w.group_id,
        w.target_channel,
        w.covariate_channels,
        w.input[0][71],
        scaling.unscale(w.input[0][71], Channel::Mbp)
    );
    Ok(())
}
