//! Per-window feature extraction.
//!
//! Each sensor contributes 69 features: 22 per axis for X, Y and Z, then the
//! three pairwise cross-axis correlations. With two sensors the wrist block
//! comes first.

mod entropy;
mod spectral;
mod temporal;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::datamodel::{SensorId, SignalWindow};
use crate::error::{Error, Result};
use crate::preprocess::Segments;

pub use entropy::{
    count_template_matches, gini_index, sample_entropy, sample_entropy_from_counts, shannon_entropy,
    HistogramSpec, TemplateMatches, SAMPLE_ENTROPY_M, SAMPLE_ENTROPY_R,
};
pub use spectral::{band_power, high_freq_fraction, psd_peaks, spectral_entropy, Periodogram, PsdPeaks};
pub use temporal::{
    autocorr_features, autocorrelation, average_jerk, basic_stats, cross_correlation, AutocorrFeatures,
    BasicStats,
};

pub const FEATURES_PER_AXIS: usize = 22;
pub const CROSS_AXIS_FEATURES: usize = 3;
pub const FEATURES_PER_SENSOR: usize = 3 * FEATURES_PER_AXIS + CROSS_AXIS_FEATURES;
pub const REGISTRY_VERSION: u32 = 1;

/// Frequency bands of features 1–3.
pub const BANDS_HZ: [(f64, f64); 3] = [(1.0, 4.0), (4.0, 6.0), (0.5, 15.0)];

const AXIS_FEATURE_NAMES: [&str; FEATURES_PER_AXIS] = [
    "band_power_1_4hz",
    "band_power_4_6hz",
    "band_power_0.5_15hz",
    "high_freq_fraction",
    "spectral_entropy",
    "psd_peak",
    "dominant_frequency",
    "psd_second_peak",
    "secondary_frequency",
    "average_jerk",
    "std",
    "peak_to_peak",
    "mean",
    "autocorr_num_peaks",
    "autocorr_peak_sum",
    "autocorr_first_peak_lag",
    "autocorr_first_peak",
    "skewness",
    "kurtosis",
    "shannon_entropy",
    "gini_index",
    "sample_entropy",
];

const AXES: [&str; 3] = ["x", "y", "z"];
const AXIS_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureDescriptor {
    /// Column in the combined feature space.
    pub index: usize,
    /// Feature kind, 1–25.
    pub id: usize,
    pub name: String,
    /// `x`, `y`, `z` or an axis pair such as `xy`.
    pub axis: String,
    pub sensor: SensorId,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureRegistry {
    pub version: u32,
    pub features: Vec<FeatureDescriptor>,
}

impl FeatureRegistry {
    pub fn new(sensors: &[SensorId]) -> Self {
        let mut features = Vec::with_capacity(FEATURES_PER_SENSOR * sensors.len());
        for &sensor in sensors {
            for axis in AXES {
                for (k, name) in AXIS_FEATURE_NAMES.iter().enumerate() {
                    features.push(FeatureDescriptor {
                        index: features.len(),
                        id: k + 1,
                        name: format!("{sensor}.{axis}.{name}"),
                        axis: axis.to_string(),
                        sensor,
                    });
                }
            }
            for (k, (a, b)) in AXIS_PAIRS.iter().enumerate() {
                let axis = format!("{}{}", AXES[*a], AXES[*b]);
                features.push(FeatureDescriptor {
                    index: features.len(),
                    id: FEATURES_PER_AXIS + k + 1,
                    name: format!("{sensor}.{axis}.cross_correlation"),
                    axis,
                    sensor,
                });
            }
        }
        Self {
            version: REGISTRY_VERSION,
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

/// Column of feature kind `id` (1–22) on `axis` (0–2) within one sensor block.
pub fn axis_feature_column(id: usize, axis: usize) -> usize {
    assert!((1..=FEATURES_PER_AXIS).contains(&id) && axis < 3);
    axis * FEATURES_PER_AXIS + id - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub sensor: SensorId,
    pub values: Vec<f64>,
    /// Entries whose raw value was undefined and replaced by 0.
    pub flagged: Vec<usize>,
}

/// Raw (possibly NaN) values of the 22 per-axis features.
fn axis_features(x: &[f64], sample_rate_hz: f64) -> [f64; FEATURES_PER_AXIS] {
    let p = Periodogram::new(x, sample_rate_hz);
    let peaks = psd_peaks(&p);
    let stats = temporal::basic_stats_raw(x);
    let ac = temporal::autocorr_features_raw(x);
    let hist = HistogramSpec::default();
    [
        p.band_power(BANDS_HZ[0].0, BANDS_HZ[0].1),
        p.band_power(BANDS_HZ[1].0, BANDS_HZ[1].1),
        p.band_power(BANDS_HZ[2].0, BANDS_HZ[2].1),
        spectral::high_freq_fraction_raw(&p),
        spectral::spectral_entropy_raw(&p),
        peaks.peak,
        peaks.frequency,
        peaks.second_peak,
        peaks.second_frequency,
        average_jerk(x, sample_rate_hz),
        stats.std,
        stats.peak_to_peak,
        stats.mean,
        ac.num_peaks,
        ac.sum_peaks,
        ac.first_peak_lag,
        ac.first_peak_value,
        stats.skewness,
        stats.kurtosis,
        shannon_entropy(x, &hist),
        gini_index(x, &hist),
        entropy::sample_entropy_raw(x, SAMPLE_ENTROPY_M, SAMPLE_ENTROPY_R),
    ]
}

/// The 69-value feature vector of one sensor window. Undefined values are
/// replaced by 0 and their indices recorded in `flagged`.
pub fn extract(window: &SignalWindow<'_>, sample_rate_hz: f64) -> FeatureVector {
    let mut values = Vec::with_capacity(FEATURES_PER_SENSOR);
    for axis in window.axes {
        values.extend(axis_features(axis, sample_rate_hz));
    }
    for (a, b) in AXIS_PAIRS {
        values.push(temporal::cross_correlation_raw(window.axes[a], window.axes[b]));
    }
    let mut flagged = Vec::new();
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            *v = 0.0;
            flagged.push(i);
        }
    }
    FeatureVector {
        sensor: window.sensor,
        values,
        flagged,
    }
}

/// Rows are windows; columns are the registry of `sensors`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub sensors: Vec<SensorId>,
    pub values: Array2<f64>,
    /// `(row, column)` of every replaced non-finite value.
    pub flagged: Vec<(usize, usize)>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn registry(&self) -> FeatureRegistry {
        FeatureRegistry::new(&self.sensors)
    }
}

/// Extracts and concatenates features of index-aligned windows, one list
/// per sensor (wrist first).
pub fn extract_windows(
    per_sensor: &[Vec<SignalWindow<'_>>],
    sample_rate_hz: f64,
) -> Result<FeatureMatrix> {
    let Some(first) = per_sensor.first() else {
        return Err(Error::invalid("no sensor windows"));
    };
    let rows = first.len();
    let sensors: Vec<SensorId> = per_sensor
        .iter()
        .map(|w| w.first().map(|w| w.sensor))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::invalid("empty window list"))?;
    if sensors.windows(2).any(|s| s[0] >= s[1]) {
        return Err(Error::invalid("sensor windows must be unique and ordered wrist first"));
    }
    for list in per_sensor {
        if list.len() != rows
            || list
                .iter()
                .zip(first)
                .any(|(a, b)| a.start_sample != b.start_sample || a.len() != b.len())
        {
            return Err(Error::invalid("misaligned sensor windows"));
        }
    }

    let width = FEATURES_PER_SENSOR * sensors.len();
    let row_vectors: Vec<Vec<FeatureVector>> = (0..rows)
        .into_par_iter()
        .map(|i| per_sensor.iter().map(|l| extract(&l[i], sample_rate_hz)).collect())
        .collect();
    let mut values = Array2::zeros((rows, width));
    let mut flagged = Vec::new();
    for (i, vectors) in row_vectors.into_iter().enumerate() {
        for (s, fv) in vectors.into_iter().enumerate() {
            let offset = s * FEATURES_PER_SENSOR;
            for (j, v) in fv.values.into_iter().enumerate() {
                values[[i, offset + j]] = v;
            }
            flagged.extend(fv.flagged.into_iter().map(|j| (i, offset + j)));
        }
    }
    Ok(FeatureMatrix {
        sensors,
        values,
        flagged,
    })
}

pub fn extract_matrix(segments: &Segments<'_>) -> Result<FeatureMatrix> {
    extract_windows(&segments.windows, segments.sample_rate_hz)
}
