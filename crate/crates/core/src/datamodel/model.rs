use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::SensorId;
use crate::calibrate::PlattParams;
use crate::error::{Error, Result};
use crate::features::FEATURES_PER_SENSOR;
use crate::svm::{KernelSpec, TrainedSvm};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-feature z-score parameters estimated on the training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Column mean and population standard deviation; constant columns get
    /// scale 1.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// Everything needed to turn a recording into a per-second state report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub sample_rate_hz: f64,
    /// Sensor blocks of the feature space, wrist first.
    pub sensors: Vec<SensorId>,
    /// Retained columns of the combined feature space, ascending.
    pub feature_mask: Vec<usize>,
    pub feature_names: Vec<String>,
    pub normalization: Normalization,
    pub svm: TrainedSvm,
    pub platt: PlattParams,
    pub certainty_threshold: f64,
}

impl SvmModel {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invariant("sample_rate_hz must be positive"));
        }
        if self.sensors.is_empty() || self.sensors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invariant("sensors must be non-empty, unique and wrist first"));
        }
        let width = FEATURES_PER_SENSOR * self.sensors.len();
        let d = self.feature_mask.len();
        if d == 0 {
            return Err(Error::invariant("feature_mask is empty"));
        }
        if self.feature_mask.windows(2).any(|w| w[0] >= w[1]) || self.feature_mask[d - 1] >= width {
            return Err(Error::invariant(format!(
                "feature_mask must be strictly increasing indices below {width}"
            )));
        }
        if self.feature_names.len() != d
            || self.normalization.mean.len() != d
            || self.normalization.scale.len() != d
        {
            return Err(Error::invariant("feature names/normalization do not match feature_mask"));
        }
        if self
            .normalization
            .scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
            || self.normalization.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::invariant("normalization scale must be positive and finite"));
        }
        if !(0.5..=1.0).contains(&self.certainty_threshold) {
            return Err(Error::invariant(format!(
                "certainty_threshold {} outside [0.5, 1]",
                self.certainty_threshold
            )));
        }
        if !(self.platt.a.is_finite() && self.platt.b.is_finite()) {
            return Err(Error::invariant("Platt parameters must be finite"));
        }
        self.svm.validate(d)
    }

    /// Signed decision values for rows of the full (unmasked, unnormalized)
    /// feature matrix of this model's sensors.
    pub fn decision_values(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let width = FEATURES_PER_SENSOR * self.sensors.len();
        if features.ncols() != width {
            return Err(Error::SensorMismatch(format!(
                "feature matrix has {} columns, model expects {width}",
                features.ncols()
            )));
        }
        let masked = features.select(Axis(1), &self.feature_mask);
        let z = self.normalization.apply(masked.view());
        self.svm.decision_values(z.view())
    }

    pub fn kernel(&self) -> KernelSpec {
        self.svm.kernel
    }
}

pub fn write_model(model: &SvmModel, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<SvmModel> {
    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
    }
    let text = fs::read_to_string(path)?;
    let probe: Probe = serde_json::from_str(&text)?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: probe.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let model: SvmModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}
