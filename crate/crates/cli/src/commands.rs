use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use medstate_core::calibrate::{sigmoid_curve, write_rows};
use medstate_core::datamodel::{
    read_model, read_recording, read_report, write_model, write_recording, write_report, CsvFormat, MedState,
    Recording, ReportFormat, SvmModel, DEFAULT_SAMPLE_RATE_HZ,
};
use medstate_core::features::{extract_matrix, FeatureRegistry};
use medstate_core::inference::{activity_table, evaluate as score, run_pipeline_detailed, ActivityAccuracy, EvaluationResult, PositiveClass};
use medstate_core::preprocess::{filter_recording, segment, SegmentConfig};
use medstate_core::synthgen::{default_profile, study_with_profile, SubjectProfile};
use medstate_core::training::train_model;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FileConfig, SensorChoice, Shared};

const SIGMOID_POINTS: usize = 201;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory for `subject_<seed>.{training,testing}.csv` and the profile.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Seed of the first subject.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of subjects, seeded consecutively from `--seed`.
    #[arg(long)]
    subjects: Option<u64>,
    /// JSON subject profile replacing the seeded default (single subject).
    #[arg(long, value_name = "FILE")]
    profile: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labelled training recordings, one model per file.
    #[arg(required = true, value_name = "RECORDING")]
    inputs: Vec<PathBuf>,
    /// Directory for the model and its training diagnostics.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Sample rate of the recordings.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate_hz: f64,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model written by `train`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Recordings to classify; labelled ones also get metrics.
    #[arg(required = true, value_name = "RECORDING")]
    inputs: Vec<PathBuf>,
    /// Directory for reports and metrics.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Class counted as positive in sensitivity: ON or OFF.
    #[arg(long)]
    positive_class: Option<PositiveClass>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// JSON report written by `predict`.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Labelled recording the report was computed from.
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Class counted as positive in sensitivity: ON or OFF.
    #[arg(long)]
    positive_class: Option<PositiveClass>,
    /// Also write metrics and the activity table as JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Sample rate of the truth recording.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate_hz: f64,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(value_name = "RECORDING")]
    input: PathBuf,
    /// Output CSV, one row per window.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Sample rate of the recording.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate_hz: f64,
}

#[derive(Serialize)]
struct Metrics {
    #[serde(flatten)]
    overall: EvaluationResult,
    activities: Option<Vec<ActivityAccuracy>>,
}

#[derive(Serialize)]
struct CalibrationRow {
    decision: f64,
    label: MedState,
    certainty: f64,
}

fn stem(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(String::from)
        .with_context(|| format!("input: cannot derive an output name from {}", path.display()))
}

/// Output stems of the inputs; two inputs may not share one.
fn stems(inputs: &[PathBuf]) -> anyhow::Result<Vec<String>> {
    let stems = inputs.iter().map(|p| stem(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    for s in &stems {
        if !seen.insert(s) {
            bail!("input: several inputs share the output name {s:?}");
        }
    }
    Ok(stems)
}

fn check_inputs(inputs: &[PathBuf]) -> anyhow::Result<()> {
    for p in inputs {
        if !p.is_file() {
            bail!("input: {} does not exist", p.display());
        }
    }
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("output: creating {}", dir.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("output: writing {}", path.display()))
}

fn load(path: &Path, sample_rate_hz: f64) -> anyhow::Result<Recording> {
    read_recording(path, &CsvFormat { sample_rate_hz }).with_context(|| format!("input: reading {}", path.display()))
}

/// Runs `f` on every input in parallel, reporting every failure.
fn for_each_input<F>(inputs: &[PathBuf], f: F) -> anyhow::Result<()>
where
    F: Fn(usize, &Path) -> anyhow::Result<()> + Sync,
{
    let failures: Vec<String> = inputs
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| f(i, p).err().map(|e| format!("{}: {e:#}", p.display())))
        .collect();
    match failures.len() {
        0 => Ok(()),
        1 => bail!("{}", failures[0]),
        n => bail!("{n} inputs failed:\n  {}", failures.join("\n  ")),
    }
}

fn positive_class(flag: Option<PositiveClass>, file: &FileConfig) -> anyhow::Result<PositiveClass> {
    match (flag, &file.positive_class) {
        (Some(p), _) => Ok(p),
        (None, Some(s)) => s.parse().context("config"),
        (None, None) => Ok(PositiveClass::default()),
    }
}

pub fn synth(args: SynthArgs, shared: &Shared, file: &FileConfig) -> anyhow::Result<()> {
    let first = args.seed.or(file.seed).unwrap_or(1);
    let count = args.subjects.or(file.subjects).unwrap_or(1);
    if count == 0 {
        bail!("input: --subjects must be at least 1");
    }
    let custom: Option<SubjectProfile> = match &args.profile {
        Some(path) => {
            if count != 1 {
                bail!("input: --profile describes a single subject");
            }
            let text = fs::read_to_string(path).with_context(|| format!("input: reading {}", path.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("input: parsing {}", path.display()))?)
        }
        None => None,
    };
    create_dir(&args.out_dir)?;
    let sensors = shared.sensors_or_default().sensors();
    let seeds: Vec<u64> = (first..first + count).collect();
    let failures: Vec<String> = seeds
        .par_iter()
        .filter_map(|&seed| {
            let run = || -> anyhow::Result<()> {
                let profile = custom.clone().unwrap_or_else(|| default_profile(seed));
                let study = study_with_profile(profile).context("synth")?;
                let name = format!("subject_{}", study.profile.seed);
                for (part, rec) in [("training", &study.training), ("testing", &study.testing)] {
                    let path = args.out_dir.join(format!("{name}.{part}.csv"));
                    let rec = rec.select_sensors(&sensors).context("synth")?;
                    write_recording(&rec, &path).with_context(|| format!("output: writing {}", path.display()))?;
                }
                write_json(&study.profile, &args.out_dir.join(format!("{name}.profile.json")))
            };
            run().err().map(|e| format!("seed {seed}: {e:#}"))
        })
        .collect();
    if !failures.is_empty() {
        bail!("{}", failures.join("\n"));
    }
    Ok(())
}

fn train_one(input: &Path, stem: &str, args: &TrainArgs, shared: &Shared) -> anyhow::Result<()> {
    let recording = load(input, args.sample_rate_hz)?;
    let out = train_model(&recording, &shared.sensors_or_default().sensors())?;
    let dir = &args.out_dir;
    let path = |suffix: &str| dir.join(format!("{stem}.{suffix}"));
    write_model(&out.model, path("model.json")).context("output: writing model")?;
    write_json(&out.summary, &path("summary.json"))?;
    let registry = FeatureRegistry::new(&out.model.sensors);
    #[derive(Serialize)]
    struct Screen<'a> {
        feature_names: &'a [String],
        registry_version: u32,
        #[serde(flatten)]
        result: &'a medstate_core::featselect::FeatureScreenResult,
    }
    write_json(
        &Screen {
            feature_names: &out.feature_names,
            registry_version: registry.version,
            result: &out.screen,
        },
        &path("screen.json"),
    )?;
    let calibration: Vec<CalibrationRow> = out
        .cv_decisions
        .iter()
        .zip(&out.labels)
        .zip(&out.certainties)
        .map(|((&decision, &label), &certainty)| CalibrationRow {
            decision,
            label,
            certainty,
        })
        .collect();
    write_rows(&calibration, path("calibration.csv")).context("output: writing calibration table")?;
    write_rows(&out.threshold_table, path("thresholds.csv")).context("output: writing threshold table")?;
    write_rows(&sigmoid_curve(out.model.platt, &out.cv_decisions, SIGMOID_POINTS), path("sigmoid.csv"))
        .context("output: writing sigmoid curve")?;
    write_rows(&out.summary.rfe_trace, path("rfe.csv")).context("output: writing RFE trace")?;
    let grid: Vec<_> = out
        .grid
        .evaluations
        .iter()
        .map(|e| GridRow {
            kernel: e.config.kernel.name(),
            c: e.config.c,
            gamma: e.config.kernel.gamma(),
            correct: e.correct,
            accuracy: e.accuracy,
        })
        .collect();
    write_rows(&grid, path("grid.csv")).context("output: writing grid table")?;
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    kernel: &'static str,
    c: f64,
    gamma: Option<f64>,
    correct: usize,
    accuracy: f64,
}

pub fn train(args: TrainArgs, shared: &Shared) -> anyhow::Result<()> {
    check_inputs(&args.inputs)?;
    let stems = stems(&args.inputs)?;
    create_dir(&args.out_dir)?;
    for_each_input(&args.inputs, |i, input| train_one(input, &stems[i], &args, shared))
}

fn check_model_sensors(model: &SvmModel, shared: &Shared) -> anyhow::Result<()> {
    if let Some(choice) = shared.sensors {
        if choice.sensors() != model.sensors {
            bail!(
                "input: --sensors {} does not match the model's sensors {:?}",
                format!("{choice:?}").to_lowercase(),
                model.sensors.iter().map(|s| s.as_str()).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}

fn predict_one(input: &Path, stem: &str, model: &SvmModel, dir: &Path, positive: PositiveClass) -> anyhow::Result<()> {
    let recording = load(input, model.sample_rate_hz)?;
    let out = run_pipeline_detailed(&recording, model)?;
    let path = |suffix: &str| dir.join(format!("{stem}.{suffix}"));
    write_report(&out.report, path("report.json"), ReportFormat::Json).context("output: writing report")?;
    write_report(&out.report, path("report.csv"), ReportFormat::Csv).context("output: writing report")?;
    if let Some(truth) = &out.truth {
        let metrics = metrics(&out.report, truth, out.activities.as_deref(), positive)?;
        write_json(&metrics, &path("metrics.json"))?;
    }
    Ok(())
}

fn metrics(
    report: &medstate_core::datamodel::StateReport,
    truth: &[MedState],
    activities: Option<&[medstate_core::datamodel::Activity]>,
    positive: PositiveClass,
) -> anyhow::Result<Metrics> {
    let overall = score(report, truth, positive).context("evaluate")?;
    let activities = activities
        .map(|a| activity_table(report, truth, a))
        .transpose()
        .context("evaluate")?;
    Ok(Metrics { overall, activities })
}

pub fn predict(args: PredictArgs, shared: &Shared, file: &FileConfig) -> anyhow::Result<()> {
    let positive = positive_class(args.positive_class, file)?;
    let model = read_model(&args.model).with_context(|| format!("input: reading model {}", args.model.display()))?;
    check_model_sensors(&model, shared)?;
    check_inputs(&args.inputs)?;
    let stems = stems(&args.inputs)?;
    create_dir(&args.out_dir)?;
    for_each_input(&args.inputs, |i, input| predict_one(input, &stems[i], &model, &args.out_dir, positive))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn evaluate(args: EvaluateArgs, file: &FileConfig) -> anyhow::Result<()> {
    let positive = positive_class(args.positive_class, file)?;
    let report = read_report(&args.report).with_context(|| format!("input: reading report {}", args.report.display()))?;
    let recording = load(&args.truth, args.sample_rate_hz)?;
    let segments = segment(&recording, &SegmentConfig::default()).context("segment")?;
    let truth: Vec<MedState> = segments
        .labels()
        .into_iter()
        .collect::<Option<_>>()
        .context("evaluate: truth recording has no state labels")?;
    let activities: Option<Vec<_>> = segments.activities().into_iter().collect();
    if truth.len() != report.len() {
        bail!(
            "evaluate: truth covers {} seconds but the report has {}; durations are misaligned",
            truth.len(),
            report.len()
        );
    }
    let metrics = metrics(&report, &truth, activities.as_deref(), positive)?;
    let m = &metrics.overall;
    println!("seconds            {}", m.seconds);
    println!("accuracy           {:.3}", m.accuracy);
    let positive = match m.positive_class {
        PositiveClass::On => "ON",
        PositiveClass::Off => "OFF",
    };
    println!("{:<19}{}", format!("sensitivity ({positive})"), fmt_opt(m.sensitivity));
    println!("specificity        {}", fmt_opt(m.specificity));
    println!("inconclusive rate  {:.3}", m.inconclusive_rate);
    if let Some(rows) = &metrics.activities {
        println!();
        println!("{:<22}{:>9}{:>12}{:>10}", "activity", "seconds", "conclusive", "accuracy");
        for r in rows {
            println!("{:<22}{:>9}{:>12}{:>10}", r.activity.as_str(), r.seconds, r.conclusive, fmt_opt(r.accuracy));
        }
    }
    if let Some(out) = &args.out {
        write_json(&metrics, out)?;
    }
    Ok(())
}

pub fn features_dump(args: DumpArgs, shared: &Shared) -> anyhow::Result<()> {
    check_inputs(std::slice::from_ref(&args.input))?;
    let recording = load(&args.input, args.sample_rate_hz)?;
    let selected = recording.select_sensors(&shared.sensors_or_default().sensors()).context("input")?;
    let filtered = filter_recording(&selected).context("preprocess")?;
    let segments = segment(&filtered, &SegmentConfig::default()).context("segment")?;
    let features = extract_matrix(&segments).context("features")?;
    let names = FeatureRegistry::new(&features.sensors).names();

    let mut text = String::from("window,end_s,state,activity");
    for n in &names {
        text.push(',');
        text.push_str(n);
    }
    text.push('\n');
    let labels = segments.labels();
    let activities = segments.activities();
    for (i, ((end, label), activity)) in segments.end_times_s().iter().zip(&labels).zip(&activities).enumerate() {
        text.push_str(&format!(
            "{i},{end},{},{}",
            label.map_or("", |l| l.as_str()),
            activity.map_or("", |a| a.as_str())
        ));
        for v in features.values.row(i) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    fs::write(&args.out, text).with_context(|| format!("output: writing {}", args.out.display()))
}

impl Shared {
    pub fn sensors_or_default(&self) -> SensorChoice {
        self.sensors.unwrap_or(SensorChoice::Both)
    }
}
