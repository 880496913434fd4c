//! Test-time pipeline: decision smoothing, state prediction, certainty
//! censoring, reporting and evaluation.

use serde::{Deserialize, Serialize};

use crate::calibrate::{certainty, PlattParams};
use crate::datamodel::{Activity, MedState, Recording, ReportedState, SecondRecord, StateReport, SvmModel};
use crate::error::{Error, Result, StageContext};
use crate::features::extract_matrix;
use crate::preprocess::{filter_recording, segment, SegmentConfig};

pub const FIRST_STAGE_WIDTH: usize = 5;
pub const SECOND_STAGE_WIDTH: usize = 40;

/// Average over `[i − before, i + after]`, shrunk at the edges to the
/// samples that exist.
pub fn moving_average(d: &[f64], before: usize, after: usize) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            let base = d[lo];
            // Averaging deviations from one member keeps constant runs exact.
            let dev: f64 = d[lo..=hi].iter().map(|v| v - base).sum();
            base + dev / (hi - lo + 1) as f64
        })
        .collect()
}

/// Two-stage centered moving average: width 5, then width 40 (window
/// `[n − 20, n + 19]`). Output length equals input length.
pub fn smooth(d: &[f64]) -> Vec<f64> {
    let first = moving_average(d, FIRST_STAGE_WIDTH / 2, FIRST_STAGE_WIDTH / 2);
    moving_average(&first, SECOND_STAGE_WIDTH / 2, SECOND_STAGE_WIDTH / 2 - 1)
}

/// OFF iff the smoothed decision is strictly positive.
pub fn predict_state(m: f64) -> MedState {
    if m > 0.0 {
        MedState::Off
    } else {
        MedState::On
    }
}

pub fn predict_states(m: &[f64]) -> Vec<MedState> {
    m.iter().map(|&v| predict_state(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensoredSecond {
    pub state: ReportedState,
    pub certainty: f64,
}

fn reported(state: MedState) -> ReportedState {
    match state {
        MedState::On => ReportedState::On,
        MedState::Off => ReportedState::Off,
    }
}

/// Predicted state and certainty per second; seconds with certainty below
/// `threshold` become INCONCLUSIVE.
pub fn censor(m: &[f64], params: PlattParams, threshold: f64) -> Vec<CensoredSecond> {
    m.iter()
        .map(|&v| {
            let p = certainty(v, params);
            CensoredSecond {
                state: if p < threshold {
                    ReportedState::Inconclusive
                } else {
                    reported(predict_state(v))
                },
                certainty: p,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PositiveClass {
    #[default]
    On,
    Off,
}

impl PositiveClass {
    fn state(self) -> MedState {
        match self {
            PositiveClass::On => MedState::On,
            PositiveClass::Off => MedState::Off,
        }
    }
}

impl std::str::FromStr for PositiveClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ON" => Ok(PositiveClass::On),
            "OFF" => Ok(PositiveClass::Off),
            _ => Err(Error::invalid(format!("positive class must be ON or OFF, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub positive_class: PositiveClass,
    pub seconds: usize,
    pub inconclusive_seconds: usize,
    pub counts: ConfusionCounts,
    /// Over conclusive seconds only.
    pub accuracy: f64,
    /// `None` when the truth has no positive seconds among conclusive ones.
    pub sensitivity: Option<f64>,
    /// `None` when the truth has no negative seconds among conclusive ones.
    pub specificity: Option<f64>,
    pub inconclusive_rate: f64,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate(report: &StateReport, truth: &[MedState], positive: PositiveClass) -> Result<EvaluationResult> {
    if truth.len() != report.records.len() {
        return Err(Error::invalid(format!(
            "truth covers {} seconds but the report has {}",
            truth.len(),
            report.records.len()
        )));
    }
    let pos = positive.state();
    let mut counts = ConfusionCounts::default();
    let mut inconclusive = 0;
    for (r, &t) in report.records.iter().zip(truth) {
        let predicted = match r.state {
            ReportedState::Inconclusive => {
                inconclusive += 1;
                continue;
            }
            ReportedState::On => MedState::On,
            ReportedState::Off => MedState::Off,
        };
        match (predicted == pos, t == pos) {
            (true, true) => counts.true_positive += 1,
            (false, false) => counts.true_negative += 1,
            (true, false) => counts.false_positive += 1,
            (false, true) => counts.false_negative += 1,
        }
    }
    let conclusive = counts.total();
    if conclusive == 0 {
        return Err(Error::invalid("no conclusive seconds to evaluate"));
    }
    Ok(EvaluationResult {
        positive_class: positive,
        seconds: truth.len(),
        inconclusive_seconds: inconclusive,
        counts,
        accuracy: (counts.true_positive + counts.true_negative) as f64 / conclusive as f64,
        sensitivity: ratio(counts.true_positive, counts.true_positive + counts.false_negative),
        specificity: ratio(counts.true_negative, counts.true_negative + counts.false_positive),
        inconclusive_rate: inconclusive as f64 / truth.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityAccuracy {
    pub activity: Activity,
    pub seconds: usize,
    pub conclusive: usize,
    pub correct: usize,
    /// `None` when the activity has no conclusive seconds.
    pub accuracy: Option<f64>,
}

/// Accuracy over conclusive seconds for each of the seven activities.
pub fn activity_table(report: &StateReport, truth: &[MedState], activities: &[Activity]) -> Result<Vec<ActivityAccuracy>> {
    if truth.len() != report.records.len() || activities.len() != report.records.len() {
        return Err(Error::invalid(format!(
            "report has {} seconds but truth/activities cover {}/{}",
            report.records.len(),
            truth.len(),
            activities.len()
        )));
    }
    Ok(Activity::ALL
        .iter()
        .map(|&activity| {
            let (mut seconds, mut conclusive, mut correct) = (0, 0, 0);
            for ((r, &t), &a) in report.records.iter().zip(truth).zip(activities) {
                if a != activity {
                    continue;
                }
                seconds += 1;
                if r.state != ReportedState::Inconclusive {
                    conclusive += 1;
                    if r.state == reported(t) {
                        correct += 1;
                    }
                }
            }
            ActivityAccuracy {
                activity,
                seconds,
                conclusive,
                correct,
                accuracy: ratio(correct, conclusive),
            }
        })
        .collect())
}

/// Report plus the per-second labels of a labelled recording.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub report: StateReport,
    pub raw_decisions: Vec<f64>,
    pub truth: Option<Vec<MedState>>,
    pub activities: Option<Vec<Activity>>,
}

pub fn run_pipeline_detailed(recording: &Recording, model: &SvmModel) -> Result<PipelineOutput> {
    if (recording.sample_rate_hz() - model.sample_rate_hz).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "recording sampled at {} Hz, model trained at {} Hz",
            recording.sample_rate_hz(),
            model.sample_rate_hz
        )))
        .stage("input");
    }
    let selected = recording.select_sensors(&model.sensors).stage("input")?;
    let filtered = filter_recording(&selected).stage("preprocess")?;
    let segments = segment(&filtered, &SegmentConfig::default()).stage("segment")?;
    let features = extract_matrix(&segments).stage("features")?;
    let raw = model.decision_values(features.values.view()).stage("decision")?;
    let m = smooth(&raw);
    let censored = censor(&m, model.platt, model.certainty_threshold);
    let records = segments
        .end_times_s()
        .into_iter()
        .zip(&m)
        .zip(&censored)
        .map(|((t, &decision), c)| SecondRecord {
            t,
            decision,
            certainty: c.certainty,
            state: c.state,
        })
        .collect();
    let report = StateReport::new(segments.hop_s(), model.certainty_threshold, records).stage("report")?;
    let truth = segments.labels().into_iter().collect::<Option<Vec<_>>>();
    let activities = segments.activities().into_iter().collect::<Option<Vec<_>>>();
    Ok(PipelineOutput {
        report,
        raw_decisions: raw,
        truth,
        activities,
    })
}

/// Filters, segments and classifies a recording into a per-second report.
pub fn run_pipeline(recording: &Recording, model: &SvmModel) -> Result<StateReport> {
    run_pipeline_detailed(recording, model).map(|o| o.report)
}

/// Number of label changes in a sequence.
pub fn transitions<T: PartialEq>(states: &[T]) -> usize {
    states.windows(2).filter(|w| w[0] != w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct_average(d: &[f64], i: usize, before: usize, after: usize) -> f64 {
        let lo = i.saturating_sub(before);
        let hi = (i + after).min(d.len() - 1);
        d[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
    }

    #[test]
    fn constant_input_is_unchanged() {
        for c in [0.1, -3.7, 1e-3] {
            let d = vec![c; 77];
            assert!(smooth(&d).iter().all(|&m| m == c));
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let d: Vec<f64> = (0..120).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let first: Vec<f64> = (0..d.len()).map(|i| direct_average(&d, i, 2, 2)).collect();
        let second: Vec<f64> = (0..d.len()).map(|i| direct_average(&first, i, 20, 19)).collect();
        for (a, b) in smooth(&d).iter().zip(&second) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_outlier_cannot_flip_sign() {
        let mut d = vec![1.0; 100];
        d[50] = -1.0;
        assert!(smooth(&d).iter().all(|&m| m > 0.0));
    }

    #[test]
    fn state_rule() {
        assert_eq!(predict_states(&[0.3, -0.2, 0.0]), vec![MedState::Off, MedState::On, MedState::On]);
    }

    #[test]
    fn censor_examples() {
        let p = PlattParams { a: -2.0, b: 0.0 };
        let c = censor(&[1.0, 0.1], p, 0.80);
        assert_eq!(c[0].state, ReportedState::Off);
        assert!((c[0].certainty - 0.8808).abs() < 1e-4);
        assert_eq!(c[1].state, ReportedState::Inconclusive);
        assert!((c[1].certainty - 0.5498).abs() < 1e-4);
    }

    fn report_from(states: &[ReportedState]) -> StateReport {
        let records = states
            .iter()
            .enumerate()
            .map(|(i, &s)| SecondRecord {
                t: i as f64 + 5.0,
                decision: if s == ReportedState::Off { 1.0 } else { -1.0 },
                certainty: if s == ReportedState::Inconclusive { 0.5 } else { 0.9 },
                state: s,
            })
            .collect();
        StateReport::new(1.0, 0.6, records).unwrap()
    }

    #[test]
    fn evaluation_counting() {
        use ReportedState::*;
        let truth: Vec<MedState> = (0..100).map(|i| if i < 50 { MedState::On } else { MedState::Off }).collect();
        let mut states: Vec<ReportedState> = truth.iter().map(|&t| reported(t)).collect();
        let r = evaluate(&report_from(&states), &truth, PositiveClass::On).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity, r.inconclusive_rate), (1.0, Some(1.0), Some(1.0), 0.0));

        let all_on = vec![On; 100];
        let r = evaluate(&report_from(&all_on), &truth, PositiveClass::On).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (0.5, Some(1.0), Some(0.0)));

        states[0] = Inconclusive;
        states[99] = Inconclusive;
        states[10] = Off;
        states[20] = Off;
        states[60] = On;
        let r = evaluate(&report_from(&states), &truth, PositiveClass::On).unwrap();
        assert_eq!(r.accuracy, 95.0 / 98.0);
        assert_eq!(r.inconclusive_rate, 0.02);
        let c = r.counts;
        assert_eq!(r.sensitivity, Some(c.true_positive as f64 / (c.true_positive + c.false_negative) as f64));

        let off = evaluate(&report_from(&states), &truth, PositiveClass::Off).unwrap();
        assert_eq!(off.sensitivity, r.specificity);
    }

    #[test]
    fn evaluation_errors() {
        let rep = report_from(&[ReportedState::Inconclusive; 3]);
        assert!(evaluate(&rep, &[MedState::On; 3], PositiveClass::On).is_err());
        let rep = report_from(&[ReportedState::On; 3]);
        assert!(evaluate(&rep, &[MedState::On; 2], PositiveClass::On).is_err());
        let r = evaluate(&rep, &[MedState::On; 3], PositiveClass::On).unwrap();
        assert_eq!(r.specificity, None);
    }

    #[test]
    fn activity_table_has_seven_rows() {
        let truth = vec![MedState::Off; 4];
        let acts = vec![Activity::Walking, Activity::Walking, Activity::Resting, Activity::Drinking];
        let rep = report_from(&[ReportedState::Off, ReportedState::On, ReportedState::Off, ReportedState::Inconclusive]);
        let t = activity_table(&rep, &truth, &acts).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t[0].activity, Activity::ALL[0]);
        let walking = t.iter().find(|r| r.activity == Activity::Walking).unwrap();
        assert_eq!(walking.accuracy, Some(0.5));
        let drinking = t.iter().find(|r| r.activity == Activity::Drinking).unwrap();
        assert_eq!(drinking.accuracy, None);
    }

    proptest! {
        #[test]
        fn length_and_range_preserved(d in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
            let m = smooth(&d);
            prop_assert_eq!(m.len(), d.len());
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }

        #[test]
        fn shift_equivariant_in_interior(d in proptest::collection::vec(-10.0f64..10.0, 120..160), k in 1usize..10) {
            let shifted: Vec<f64> = d[k..].to_vec();
            let a = smooth(&d);
            let b = smooth(&shifted);
            // Indices whose full 44-sample support lies inside both series.
            for i in 22 + k..d.len() - 22 {
                prop_assert_eq!(a[i], b[i - k]);
            }
        }

        #[test]
        fn censoring_only_removes_seconds(m in proptest::collection::vec(-3.0f64..3.0, 1..50),
                                          a in -5.0f64..-0.1, b in -1.0f64..1.0, th in 0.5f64..0.9) {
            let p = PlattParams { a, b };
            let states = predict_states(&m);
            for (c, s) in censor(&m, p, th).iter().zip(&states) {
                prop_assert!(c.state == ReportedState::Inconclusive || c.state == reported(*s));
            }
        }
    }
}
