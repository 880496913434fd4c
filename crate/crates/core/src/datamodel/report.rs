use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State emitted for one second of the report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReportedState {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl ReportedState {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportedState::On => "ON",
            ReportedState::Off => "OFF",
            ReportedState::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl fmt::Display for ReportedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondRecord {
    /// Seconds from the start of the recording to the end of the window.
    pub t: f64,
    pub decision: f64,
    pub certainty: f64,
    pub state: ReportedState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub minutes_on: f64,
    pub minutes_off: f64,
    pub minutes_inconclusive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub hop_s: f64,
    pub certainty_threshold: f64,
    pub records: Vec<SecondRecord>,
    pub summary: DurationSummary,
}

impl StateReport {
    /// Builds a report and its duration summary from per-second records.
    pub fn new(hop_s: f64, certainty_threshold: f64, records: Vec<SecondRecord>) -> Result<Self> {
        if !(hop_s > 0.0) {
            return Err(Error::invariant("report hop must be positive"));
        }
        let mut counts = [0usize; 3];
        for r in &records {
            if !(0.0..=1.0).contains(&r.certainty) || !r.decision.is_finite() {
                return Err(Error::invariant(format!("record at t={} is out of range", r.t)));
            }
            let inconclusive = r.certainty < certainty_threshold;
            if inconclusive != (r.state == ReportedState::Inconclusive) {
                return Err(Error::invariant(format!(
                    "record at t={}: state {} inconsistent with certainty {}",
                    r.t, r.state, r.certainty
                )));
            }
            counts[r.state as usize] += 1;
        }
        let minutes = |n: usize| n as f64 * hop_s / 60.0;
        Ok(Self {
            hop_s,
            certainty_threshold,
            records,
            summary: DurationSummary {
                minutes_on: minutes(counts[ReportedState::On as usize]),
                minutes_off: minutes(counts[ReportedState::Off as usize]),
                minutes_inconclusive: minutes(counts[ReportedState::Inconclusive as usize]),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration_minutes(&self) -> f64 {
        self.records.len() as f64 * self.hop_s / 60.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn write_report(report: &StateReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            writeln!(out, "t,decision,certainty,state")?;
            for r in &report.records {
                writeln!(out, "{},{},{},{}", r.t, r.decision, r.certainty, r.state)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON report and re-checks its invariants.
pub fn read_report(path: impl AsRef<Path>) -> Result<StateReport> {
    let text = std::fs::read_to_string(path)?;
    let raw: StateReport = serde_json::from_str(&text)?;
    let rebuilt = StateReport::new(raw.hop_s, raw.certainty_threshold, raw.records)?;
    if rebuilt.summary != raw.summary {
        return Err(Error::invariant("report summary does not match its records"));
    }
    Ok(rebuilt)
}
