//! CSV ingestion for the vitals and diagnosis tables.
//!
//! Vitals: `patient_id,offset_min,hr,sbp,dbp,rr` with empty cells for
//! missing measurements. Diagnoses:
//! `patient_id,group_id,diagnosis_offset_min,label` with
//! `label ∈ {sepsis, septic_shock}`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VITALS_HEADER: [&str; 6] = ["patient_id", "offset_min", "hr", "sbp", "dbp", "rr"];
pub const DIAGNOSIS_HEADER: [&str; 4] =
    ["patient_id", "group_id", "diagnosis_offset_min", "label"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawVitalRecord {
    pub patient_id: String,
    /// Minutes since ICU admission.
    pub offset_min: i64,
    pub hr: Option<f64>,
    pub sbp: Option<f64>,
    pub dbp: Option<f64>,
    pub rr: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisLabel {
    Sepsis,
    SepticShock,
}

impl fmt::Display for DiagnosisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosisLabel::Sepsis => "sepsis",
            DiagnosisLabel::SepticShock => "septic_shock",
        })
    }
}

impl FromStr for DiagnosisLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sepsis" => Ok(DiagnosisLabel::Sepsis),
            "septic_shock" => Ok(DiagnosisLabel::SepticShock),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRecord {
    pub patient_id: String,
    pub group_id: String,
    pub diagnosis_offset_min: i64,
    pub label: DiagnosisLabel,
}

fn open(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(reader)
}

fn row_error(path: &Path, record: &csv::StringRecord, message: String) -> Error {
    Error::Row {
        path: path.to_path_buf(),
        line: record.position().map_or(0, |p| p.line()),
        message,
    }
}

fn parse_opt(path: &Path, record: &csv::StringRecord, idx: usize) -> Result<Option<f64>> {
    let cell = &record[idx];
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(row_error(
            path,
            record,
            format!("column `{}`: `{cell}` is not a number", VITALS_HEADER[idx]),
        )),
    }
}

fn parse_int(path: &Path, record: &csv::StringRecord, idx: usize, column: &str) -> Result<i64> {
    record[idx].parse::<i64>().map_err(|_| {
        row_error(
            path,
            record,
            format!("column `{column}`: `{}` is not an integer", &record[idx]),
        )
    })
}

/// Reads a vitals CSV, sorted by `(patient_id, offset_min)`.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<RawVitalRecord>> {
    let path = path.as_ref();
    let mut reader = open(path, &VITALS_HEADER)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        out.push(RawVitalRecord {
            patient_id: record[0].to_owned(),
            offset_min: parse_int(path, &record, 1, "offset_min")?,
            hr: parse_opt(path, &record, 2)?,
            sbp: parse_opt(path, &record, 3)?,
            dbp: parse_opt(path, &record, 4)?,
            rr: parse_opt(path, &record, 5)?,
        });
    }
    out.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then(a.offset_min.cmp(&b.offset_min))
    });
    Ok(out)
}

/// Reads a diagnosis CSV, sorted by `(patient_id, diagnosis_offset_min)`.
pub fn ingest_diagnoses(path: impl AsRef<Path>) -> Result<Vec<DiagnosisRecord>> {
    let path = path.as_ref();
    let mut reader = open(path, &DIAGNOSIS_HEADER)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let label = record[3]
            .parse::<DiagnosisLabel>()
            .map_err(|m| row_error(path, &record, m))?;
        out.push(DiagnosisRecord {
            patient_id: record[0].to_owned(),
            group_id: record[1].to_owned(),
            diagnosis_offset_min: parse_int(path, &record, 2, "diagnosis_offset_min")?,
            label,
        });
    }
    out.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then(a.diagnosis_offset_min.cmp(&b.diagnosis_offset_min))
    });
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_vitals(writer: impl std::io::Write, records: &[RawVitalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VITALS_HEADER)?;
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.offset_min.to_string(),
            cell(r.hr),
            cell(r.sbp),
            cell(r.dbp),
            cell(r.rr),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<vitals csv>", e))?;
    Ok(())
}

pub fn write_diagnoses(writer: impl std::io::Write, records: &[DiagnosisRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DIAGNOSIS_HEADER)?;
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.group_id.clone(),
            r.diagnosis_offset_min.to_string(),
            r.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<diagnosis csv>", e))?;
    Ok(())
}
