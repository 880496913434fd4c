use std::sync::OnceLock;

use medstate_core::datamodel::{
    read_model, write_model, write_report, Activity, MedState, Recording, ReportFormat, ReportedState, SensorId,
    SensorStream, SvmModel,
};
use medstate_core::inference::{evaluate, predict_states, run_pipeline, run_pipeline_detailed, smooth, transitions, PositiveClass};
use medstate_core::synthgen::{generate, training_schedule, ActivityBlock, Phase, SessionSchedule, SubjectProfile, TremorSite};
use medstate_core::training::train_model;
use medstate_core::Error;
use ndarray::Array2;
use proptest::prelude::*;

const SEED: u64 = 41;

fn profile() -> SubjectProfile {
    SubjectProfile {
        tremor_site: TremorSite::Wrist,
        tremor_frequency_hz: 5.0,
        off_tremor_amplitude: 35.0,
        on_attenuation: 0.05,
        bradykinesia_factor: 0.55,
        noise_floor: 1.0,
        seed: SEED,
    }
}

struct Fixture {
    training: Recording,
    model: SvmModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let training = generate(&profile(), &training_schedule(SEED), 128.0).unwrap();
        let model = train_model(&training, &SensorId::ALL).unwrap().model;
        Fixture { training, model }
    })
}

/// Ten minutes OFF then ten minutes ON, spread over the office activities.
fn ten_and_ten() -> Recording {
    let blocks = |_: MedState| {
        Activity::ALL
            .iter()
            .filter(|a| a.is_office())
            .map(|&activity| ActivityBlock {
                activity,
                duration_s: 150.0,
            })
            .collect()
    };
    let schedule = SessionSchedule {
        start_time_s: 0.0,
        stream: 7,
        phases: vec![
            Phase {
                state: MedState::Off,
                activities: blocks(MedState::Off),
            },
            Phase {
                state: MedState::On,
                activities: blocks(MedState::On),
            },
        ],
    };
    generate(&profile(), &schedule, 128.0).unwrap()
}

#[test]
fn summary_minutes_match_ten_minutes_each() {
    let f = fixture();
    let out = run_pipeline_detailed(&ten_and_ten(), &f.model).unwrap();
    let truth = out.truth.unwrap();
    let minutes = |s: MedState| truth.iter().filter(|&&t| t == s).count() as f64 / 60.0;
    let summary = out.report.summary;
    assert!((summary.minutes_off - minutes(MedState::Off)).abs() <= 1.0, "{summary:?}");
    assert!((summary.minutes_on - minutes(MedState::On)).abs() <= 1.0, "{summary:?}");
    let total = summary.minutes_on + summary.minutes_off + summary.minutes_inconclusive;
    assert!((total - out.report.duration_minutes()).abs() < 1e-9);
}

#[test]
fn smoothing_never_adds_transitions_on_synthetic_data() {
    let f = fixture();
    for rec in [ten_and_ten(), f.training.clone()] {
        let out = run_pipeline_detailed(&rec, &f.model).unwrap();
        let raw = predict_states(&out.raw_decisions);
        let smoothed = predict_states(&smooth(&out.raw_decisions));
        assert!(transitions(&smoothed) <= transitions(&raw));
    }
}

#[test]
fn metrics_match_confusion_counts() {
    let f = fixture();
    let out = run_pipeline_detailed(&ten_and_ten(), &f.model).unwrap();
    let truth = out.truth.unwrap();
    let r = evaluate(&out.report, &truth, PositiveClass::On).unwrap();
    let c = r.counts;
    assert_eq!(c.total() + r.inconclusive_seconds, r.seconds);
    assert_eq!(r.accuracy, (c.true_positive + c.true_negative) as f64 / c.total() as f64);
    assert_eq!(r.sensitivity, Some(c.true_positive as f64 / (c.true_positive + c.false_negative) as f64));
    assert_eq!(r.specificity, Some(c.true_negative as f64 / (c.true_negative + c.false_positive) as f64));
    assert_eq!(r.inconclusive_rate, r.inconclusive_seconds as f64 / r.seconds as f64);
}

#[test]
fn training_and_reports_are_byte_identical() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = train_model(&f.training, &SensorId::ALL).unwrap().model;
    write_model(&f.model, dir.path().join("a.json")).unwrap();
    write_model(&again, dir.path().join("b.json")).unwrap();
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));

    let rec = ten_and_ten();
    for (name, format) in [("r1.json", ReportFormat::Json), ("r1.csv", ReportFormat::Csv)] {
        let other = name.replace("r1", "r2");
        write_report(&run_pipeline(&rec, &f.model).unwrap(), dir.path().join(name), format).unwrap();
        write_report(&run_pipeline(&rec, &again).unwrap(), dir.path().join(&other), format).unwrap();
        assert_eq!(read(name), read(&other));
    }
}

#[test]
fn model_round_trip_preserves_decisions() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    write_model(&f.model, &path).unwrap();
    let back = read_model(&path).unwrap();
    let width = f.model.sensors.len() * 69;
    let probe = Array2::from_shape_fn((25, width), |(i, j)| ((i * 37 + j * 11) % 23) as f64 - 11.0);
    let a = f.model.decision_values(probe.view()).unwrap();
    let b = back.decision_values(probe.view()).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() <= 1e-12);
    }
}

#[test]
fn short_recording_is_rejected_with_stage() {
    let f = fixture();
    let axes = || vec![0.5; 600];
    let streams = SensorId::ALL
        .iter()
        .map(|&s| SensorStream::new(s, axes(), axes(), axes()).unwrap())
        .collect();
    let rec = Recording::new(128.0, 0.0, streams, None, None).unwrap();
    let err = run_pipeline(&rec, &f.model).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("too short"), "{msg}");
    assert!(matches!(err, Error::Stage { .. }));
}

#[test]
fn unlabelled_recording_reports_without_truth() {
    let f = fixture();
    let rec = ten_and_ten();
    let streams = rec.streams().to_vec();
    let unlabelled = Recording::new(128.0, 0.0, streams, None, None).unwrap();
    let out = run_pipeline_detailed(&unlabelled, &f.model).unwrap();
    assert!(out.truth.is_none());
    assert_eq!(out.report.len(), rec.len_samples() / 128 - 4);
}

#[test]
fn wrist_only_recording_mismatches_two_sensor_model() {
    let f = fixture();
    let wrist = ten_and_ten().select_sensors(&[SensorId::Wrist]).unwrap();
    let msg = run_pipeline(&wrist, &f.model).unwrap_err().to_string();
    assert!(msg.contains("sensor mismatch"), "{msg}");
}

#[test]
fn single_class_training_names_missing_class() {
    let f = fixture();
    let n = f.training.len_samples();
    let truth = f.training.truth().unwrap();
    let off_end = truth.iter().position(|&t| t == MedState::On).unwrap_or(n);
    let streams = f
        .training
        .streams()
        .iter()
        .map(|s| {
            let [x, y, z] = s.axes();
            SensorStream::new(s.sensor(), x[..off_end].to_vec(), y[..off_end].to_vec(), z[..off_end].to_vec()).unwrap()
        })
        .collect();
    let rec = Recording::new(128.0, 0.0, streams, Some(truth[..off_end].to_vec()), None).unwrap();
    let msg = train_model(&rec, &SensorId::ALL).unwrap_err().to_string();
    assert!(msg.contains("no ON windows"), "{msg}");
}

#[test]
fn single_sensor_models_train() {
    let f = fixture();
    for sensor in SensorId::ALL {
        let out = train_model(&f.training, &[sensor]).unwrap();
        assert_eq!(out.model.sensors, vec![sensor]);
        assert!(out.model.feature_mask.iter().all(|&i| i < 69));
        assert!((0.5..=0.9).contains(&out.model.certainty_threshold));
    }
}

proptest! {
    #[test]
    fn negating_decisions_flips_states(d in proptest::collection::vec(-5.0f64..5.0, 1..120)) {
        let m = smooth(&d);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let mn = smooth(&neg);
        for ((a, b), v) in predict_states(&m).iter().zip(predict_states(&mn)).zip(&m) {
            if *v != 0.0 {
                prop_assert_ne!(*a, b);
            }
        }
    }

    #[test]
    fn positive_class_switch_swaps_rates(flags in proptest::collection::vec(0u8..3, 10..80)) {
        use medstate_core::datamodel::{SecondRecord, StateReport};
        let truth: Vec<MedState> = (0..flags.len()).map(|i| if i % 3 == 0 { MedState::Off } else { MedState::On }).collect();
        let records: Vec<SecondRecord> = flags
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let state = [ReportedState::On, ReportedState::Off, ReportedState::Inconclusive][f as usize];
                SecondRecord { t: i as f64 + 5.0, decision: 0.1, certainty: if f == 2 { 0.5 } else { 0.9 }, state }
            })
            .collect();
        let report = StateReport::new(1.0, 0.6, records).unwrap();
        if let (Ok(on), Ok(off)) = (evaluate(&report, &truth, PositiveClass::On), evaluate(&report, &truth, PositiveClass::Off)) {
            prop_assert_eq!(on.sensitivity, off.specificity);
            prop_assert_eq!(on.specificity, off.sensitivity);
            prop_assert_eq!(on.accuracy, off.accuracy);
        }
    }
}
