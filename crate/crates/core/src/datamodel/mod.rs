//! Core domain types shared by every pipeline stage.
//!
//! Constructors validate their invariants and reject violations; nothing is
//! clamped silently. All types are immutable after construction.

mod model;
mod recording_csv;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{read_model, write_model, Normalization, SvmModel, MODEL_FORMAT_VERSION};
pub use recording_csv::{read_recording, write_recording, CsvFormat};
pub use report::{read_report, write_report, DurationSummary, ReportFormat, ReportedState, SecondRecord, StateReport};

/// Nominal sampling rate of the gyroscope units.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 128.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorId {
    Wrist,
    Ankle,
}

impl SensorId {
    pub const ALL: [SensorId; 2] = [SensorId::Wrist, SensorId::Ankle];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorId::Wrist => "wrist",
            SensorId::Ankle => "ankle",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wrist" => Ok(SensorId::Wrist),
            "ankle" => Ok(SensorId::Ankle),
            other => Err(Error::invalid(format!("unknown sensor id {other:?}"))),
        }
    }
}

/// Medication state. OFF is coded +1 for the classifier, ON is −1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MedState {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

impl MedState {
    pub fn class_sign(self) -> f64 {
        match self {
            MedState::Off => 1.0,
            MedState::On => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MedState::On => "ON",
            MedState::Off => "OFF",
        }
    }
}

impl fmt::Display for MedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MedState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ON" => Ok(MedState::On),
            "OFF" => Ok(MedState::Off),
            other => Err(Error::invalid(format!("unknown state {other:?}"))),
        }
    }
}

/// The seven daily-living activities of the recording protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Resting,
    Walking,
    Drinking,
    Dressing,
    HairBrushing,
    UnpackingGroceries,
    CuttingFood,
}

impl Activity {
    pub const ALL: [Activity; 7] = [
        Activity::Resting,
        Activity::Walking,
        Activity::Drinking,
        Activity::Dressing,
        Activity::HairBrushing,
        Activity::UnpackingGroceries,
        Activity::CuttingFood,
    ];

    /// Activities that can be performed during an office visit; training data
    /// comes only from these.
    pub const OFFICE: [Activity; 4] = [
        Activity::Walking,
        Activity::Resting,
        Activity::Drinking,
        Activity::Dressing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Resting => "resting",
            Activity::Walking => "walking",
            Activity::Drinking => "drinking",
            Activity::Dressing => "dressing",
            Activity::HairBrushing => "hair_brushing",
            Activity::UnpackingGroceries => "unpacking_groceries",
            Activity::CuttingFood => "cutting_food",
        }
    }

    pub fn is_office(self) -> bool {
        Self::OFFICE.contains(&self)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Activity::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown activity {s:?}")))
    }
}

/// Three-axis angular velocity (deg/s) from one sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorStream {
    sensor: SensorId,
    axes: [Vec<f64>; 3],
}

impl SensorStream {
    pub fn new(sensor: SensorId, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::invariant(format!(
                "{sensor}: axis lengths differ ({}, {}, {})",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        for (name, axis) in ["x", "y", "z"].iter().zip([&x, &y, &z]) {
            if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
                return Err(Error::invariant(format!(
                    "{sensor}: non-finite {name} value at sample {i}"
                )));
            }
        }
        Ok(Self {
            sensor,
            axes: [x, y, z],
        })
    }

    pub fn sensor(&self) -> SensorId {
        self.sensor
    }

    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.axes[0], &self.axes[1], &self.axes[2]]
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.axes[i]
    }

    pub fn into_axes(self) -> [Vec<f64>; 3] {
        self.axes
    }
}

/// A multi-sensor gyroscope recording with optional per-sample labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    sample_rate_hz: f64,
    start_time_s: f64,
    streams: Vec<SensorStream>,
    truth: Option<Vec<MedState>>,
    activities: Option<Vec<Activity>>,
}

impl Recording {
    pub fn new(
        sample_rate_hz: f64,
        start_time_s: f64,
        mut streams: Vec<SensorStream>,
        truth: Option<Vec<MedState>>,
        activities: Option<Vec<Activity>>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invariant(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::invariant("start time must be finite"));
        }
        if streams.is_empty() {
            return Err(Error::invariant("recording has no sensor streams"));
        }
        streams.sort_by_key(|s| s.sensor());
        for pair in streams.windows(2) {
            if pair[0].sensor() == pair[1].sensor() {
                return Err(Error::invariant(format!(
                    "duplicate stream for sensor {}",
                    pair[0].sensor()
                )));
            }
        }
        let len = streams[0].len();
        if let Some(s) = streams.iter().find(|s| s.len() != len) {
            return Err(Error::invariant(format!(
                "stream lengths differ: {} has {} samples, {} has {len}",
                s.sensor(),
                s.len(),
                streams[0].sensor()
            )));
        }
        if let Some(t) = &truth {
            if t.len() != len {
                return Err(Error::invariant(format!(
                    "state labels cover {} samples, streams have {len}",
                    t.len()
                )));
            }
        }
        if let Some(a) = &activities {
            if a.len() != len {
                return Err(Error::invariant(format!(
                    "activity labels cover {} samples, streams have {len}",
                    a.len()
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            start_time_s,
            streams,
            truth,
            activities,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn len_samples(&self) -> usize {
        self.streams[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.len_samples() as f64 / self.sample_rate_hz
    }

    /// Streams ordered wrist first.
    pub fn streams(&self) -> &[SensorStream] {
        &self.streams
    }

    pub fn sensors(&self) -> Vec<SensorId> {
        self.streams.iter().map(|s| s.sensor()).collect()
    }

    pub fn stream(&self, sensor: SensorId) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.sensor() == sensor)
    }

    pub fn truth(&self) -> Option<&[MedState]> {
        self.truth.as_deref()
    }

    pub fn activities(&self) -> Option<&[Activity]> {
        self.activities.as_deref()
    }

    /// Restricts the recording to `sensors`, failing if any is missing.
    pub fn select_sensors(&self, sensors: &[SensorId]) -> Result<Recording> {
        if sensors.is_empty() {
            return Err(Error::invalid("sensor subset is empty"));
        }
        let mut streams = Vec::with_capacity(sensors.len());
        for &sensor in sensors {
            let s = self.stream(sensor).ok_or_else(|| {
                Error::SensorMismatch(format!(
                    "recording has sensors [{}] but {sensor} is required",
                    join_sensors(&self.sensors())
                ))
            })?;
            streams.push(s.clone());
        }
        Recording::new(
            self.sample_rate_hz,
            self.start_time_s,
            streams,
            self.truth.clone(),
            self.activities.clone(),
        )
    }

    /// Returns a copy with every stream replaced by `f(stream)`.
    pub fn map_streams<F>(&self, f: F) -> Result<Recording>
    where
        F: Fn(&SensorStream) -> Result<SensorStream>,
    {
        let streams = self.streams.iter().map(f).collect::<Result<Vec<_>>>()?;
        Recording::new(
            self.sample_rate_hz,
            self.start_time_s,
            streams,
            self.truth.clone(),
            self.activities.clone(),
        )
    }
}

pub(crate) fn join_sensors(sensors: &[SensorId]) -> String {
    sensors
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

/// One window of one sensor; the unit of feature extraction.
#[derive(Clone, Copy, Debug)]
pub struct SignalWindow<'a> {
    pub sensor: SensorId,
    pub axes: [&'a [f64]; 3],
    pub start_sample: usize,
    pub label: Option<MedState>,
    pub activity: Option<Activity>,
}

impl SignalWindow<'_> {
    pub fn len(&self) -> usize {
        self.axes[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
