//! From raw vital-sign records to scaled, windowed, patient-disjoint splits.
//!
//! The chain is: [`ingest`] CSV rows → [`preprocess::build_groups`] (grid
//! alignment, MBP derivation, forward fill, low-pass filter, low-variance
//! screen) → [`window::make_window`] → [`window::split_dataset`]. When the
//! credentialed source tables are unavailable, [`synthetic`] generates
//! cohorts with the same shape.

pub mod ingest;
pub mod preprocess;
pub mod synthetic;
pub mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ingest::{
    ingest_csv, ingest_diagnoses, write_diagnoses, write_vitals, DiagnosisLabel, DiagnosisRecord,
    RawVitalRecord,
};
pub use preprocess::{
    build_groups, derive_mbp, exclude_low_variance, impute_forward_fill, low_pass_filter,
    sample_std, write_exclusion_log, Exclusion, ExclusionReason, PatientGroup, ScalingSpec,
};
pub use synthetic::{
    generate_synthetic, sine_groups, synthetic_records, synthetic_trajectories, SyntheticConfig,
    Trajectory,
};
pub use window::{make_window, split_dataset, DatasetSplit, WindowSample};

use crate::error::Error;

/// Vital-sign channels in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Hr,
    Mbp,
    Rr,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Hr, Channel::Mbp, Channel::Rr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Hr => "hr",
            Channel::Mbp => "mbp",
            Channel::Rr => "rr",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Channel::Hr => "Heart Rate",
            Channel::Mbp => "Mean Blood Pressure",
            Channel::Rr => "Respiration Rate",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hr" => Ok(Channel::Hr),
            "mbp" => Ok(Channel::Mbp),
            "rr" => Ok(Channel::Rr),
            other => Err(Error::Parameter(format!(
                "unknown channel `{other}` (expected hr, mbp or rr)"
            ))),
        }
    }
}
