//! Per-subject training: screening, hyperparameter search, feature
//! elimination and certainty calibration.

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::calibrate::{certainty, cv_decision_values, platt_fit, rejection_table, select_threshold, FoldScheme, ThresholdRow};
use crate::datamodel::{Activity, MedState, Normalization, Recording, SensorId, SvmModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result, StageContext};
use crate::featselect::{screen, FeatureScreenResult};
use crate::features::{extract_matrix, FeatureRegistry};
use crate::preprocess::{filter_recording, segment, SegmentConfig};
use crate::svm::{class_labels, grid_search, rfe, GridSearchResult, RfeStep, CV_FOLDS, CV_SEED};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RfeTracePoint {
    pub features: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub sensors: Vec<SensorId>,
    pub windows_off: usize,
    pub windows_on: usize,
    pub screened_features: usize,
    pub screen_fallback: bool,
    pub selected_features: Vec<String>,
    pub kernel: &'static str,
    pub c: f64,
    pub gamma: Option<f64>,
    pub grid_cv_accuracy: f64,
    pub rfe_cv_accuracy: f64,
    pub rfe_trace: Vec<RfeTracePoint>,
    pub calibration_folds: FoldScheme,
    pub platt_a: f64,
    pub platt_b: f64,
    pub platt_converged: bool,
    pub certainty_threshold: f64,
    pub training_rejection_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutput {
    pub model: SvmModel,
    pub summary: TrainingSummary,
    pub screen: FeatureScreenResult,
    /// Names of every column of the full feature space.
    pub feature_names: Vec<String>,
    pub grid: GridSearchResult,
    pub rfe_trace: Vec<RfeStep>,
    /// Out-of-fold decision values of the training windows.
    pub cv_decisions: Vec<f64>,
    pub labels: Vec<MedState>,
    pub certainties: Vec<f64>,
    pub threshold_table: Vec<ThresholdRow>,
}

/// Trains a subject model from a labelled recording using the given sensors.
pub fn train_model(recording: &Recording, sensors: &[SensorId]) -> Result<TrainingOutput> {
    let mut sensors = sensors.to_vec();
    sensors.sort();
    sensors.dedup();
    if sensors.is_empty() {
        return Err(Error::invalid("no sensors selected")).stage("input");
    }
    let selected = recording.select_sensors(&sensors).stage("input")?;
    if selected.truth().is_none() {
        return Err(Error::invalid("training recording has no state labels")).stage("input");
    }
    let filtered = filter_recording(&selected).stage("preprocess")?;
    let segments = segment(&filtered, &SegmentConfig::default()).stage("segment")?;
    let labels: Vec<MedState> = segments
        .labels()
        .into_iter()
        .collect::<Option<_>>()
        .expect("labelled recording yields labelled windows");
    let activities: Vec<Activity> = segments
        .activities()
        .into_iter()
        .map(|a| a.unwrap_or(Activity::Resting))
        .collect();
    let windows_off = labels.iter().filter(|&&l| l == MedState::Off).count();
    let windows_on = labels.len() - windows_off;
    if windows_off == 0 {
        return Err(Error::SingleClass { missing: "OFF" }).stage("input");
    }
    if windows_on == 0 {
        return Err(Error::SingleClass { missing: "ON" }).stage("input");
    }
    let features = extract_matrix(&segments).stage("features")?;
    let registry = FeatureRegistry::new(&features.sensors);
    let names = registry.names();
    let y = class_labels(&labels);

    let screened = screen(features.values.view(), &labels).stage("screening")?;
    let kept = screened.selected();
    let x_kept = features.values.select(Axis(1), &kept);
    let normalization = Normalization::fit(x_kept.view());
    let z = normalization.apply(x_kept.view());

    let grid = grid_search(z.view(), &y).stage("grid search")?;
    let rfe_out = rfe(z.view(), &y, grid.best, CV_FOLDS, CV_SEED).stage("feature elimination")?;
    let mask: Vec<usize> = rfe_out.subset.iter().map(|&i| kept[i]).collect();
    let z_final: Array2<f64> = z.select(Axis(1), &rfe_out.subset);
    let normalization = Normalization {
        mean: rfe_out.subset.iter().map(|&i| normalization.mean[i]).collect(),
        scale: rfe_out.subset.iter().map(|&i| normalization.scale[i]).collect(),
    };

    let cv = cv_decision_values(z_final.view(), &y, &activities, grid.best).stage("calibration")?;
    let fit = platt_fit(&cv.values, &y).stage("calibration")?;
    let certainties: Vec<f64> = cv.values.iter().map(|&d| certainty(d, fit.params)).collect();
    let threshold = select_threshold(&certainties).stage("calibration")?;
    let threshold_table = rejection_table(&certainties);
    let rejection = threshold_table
        .iter()
        .find(|r| r.threshold == threshold)
        .map_or(0.0, |r| r.rejection_rate);

    let model = SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        sample_rate_hz: recording.sample_rate_hz(),
        sensors: features.sensors.clone(),
        feature_names: mask.iter().map(|&i| names[i].clone()).collect(),
        feature_mask: mask,
        normalization,
        svm: rfe_out.model,
        platt: fit.params,
        certainty_threshold: threshold,
    };
    model.validate().stage("model")?;

    let summary = TrainingSummary {
        sensors: model.sensors.clone(),
        windows_off,
        windows_on,
        screened_features: kept.len(),
        screen_fallback: screened.fallback,
        selected_features: model.feature_names.clone(),
        kernel: grid.best.kernel.name(),
        c: grid.best.c,
        gamma: grid.best.kernel.gamma(),
        grid_cv_accuracy: grid.best_accuracy,
        rfe_cv_accuracy: rfe_out.accuracy,
        rfe_trace: rfe_out
            .trace
            .iter()
            .map(|s| RfeTracePoint {
                features: s.features.len(),
                accuracy: s.accuracy,
            })
            .collect(),
        calibration_folds: cv.scheme,
        platt_a: fit.params.a,
        platt_b: fit.params.b,
        platt_converged: fit.converged,
        certainty_threshold: threshold,
        training_rejection_rate: rejection,
    };
    log::info!(
        "trained {} model on {} features (CV accuracy {:.3}), threshold {:.2}",
        summary.kernel,
        model.feature_mask.len(),
        summary.rfe_cv_accuracy,
        threshold
    );
    Ok(TrainingOutput {
        model,
        summary,
        screen: screened,
        feature_names: names,
        grid,
        rfe_trace: rfe_out.trace,
        cv_decisions: cv.values,
        labels,
        certainties,
        threshold_table,
    })
}
