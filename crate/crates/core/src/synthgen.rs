//! Synthetic two-sensor gyroscope recordings with scheduled OFF/ON phases.
//!
//! The waveforms are a validation scaffold, not a physiological model:
//! band-limited voluntary movement per activity, slowed and interrupted by
//! hesitations in OFF, plus an amplitude-modulated tremor on one limb that
//! medication attenuates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Activity, MedState, Recording, SensorId, SensorStream, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TremorSite {
    None,
    Wrist,
    Ankle,
}

impl TremorSite {
    fn sensor(self) -> Option<SensorId> {
        match self {
            TremorSite::None => None,
            TremorSite::Wrist => Some(SensorId::Wrist),
            TremorSite::Ankle => Some(SensorId::Ankle),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub tremor_site: TremorSite,
    pub tremor_frequency_hz: f64,
    /// Peak tremor angular rate in OFF, deg/s.
    pub off_tremor_amplitude: f64,
    /// Multiplier on tremor amplitude in ON.
    pub on_attenuation: f64,
    /// Scales voluntary-movement amplitude (and, more weakly, speed) in OFF.
    pub bradykinesia_factor: f64,
    /// Standard deviation of the additive sensor noise, deg/s.
    pub noise_floor: f64,
    pub seed: u64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        if !(4.0..=6.0).contains(&self.tremor_frequency_hz) {
            return Err(Error::invalid(format!(
                "tremor frequency {} Hz outside [4, 6]",
                self.tremor_frequency_hz
            )));
        }
        if !(self.off_tremor_amplitude.is_finite() && self.off_tremor_amplitude >= 0.0) {
            return Err(Error::invalid("tremor amplitude must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.on_attenuation) {
            return Err(Error::invalid("on_attenuation must lie in [0, 1]"));
        }
        if !(self.bradykinesia_factor > 0.0 && self.bradykinesia_factor <= 1.0) {
            return Err(Error::invalid("bradykinesia_factor must lie in (0, 1]"));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return Err(Error::invalid("noise floor must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityBlock {
    pub activity: Activity,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub state: MedState,
    pub activities: Vec<ActivityBlock>,
}

impl Phase {
    pub fn duration_s(&self) -> f64 {
        self.activities.iter().map(|a| a.duration_s).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSchedule {
    #[serde(default)]
    pub start_time_s: f64,
    /// Selects an independent random stream for this session, so sessions of
    /// one subject differ while sharing the subject's movement style.
    #[serde(default)]
    pub stream: u64,
    pub phases: Vec<Phase>,
}

impl SessionSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() || self.phases.iter().any(|p| p.activities.is_empty()) {
            return Err(Error::invalid("schedule needs at least one phase with activities"));
        }
        if !self.start_time_s.is_finite() {
            return Err(Error::invalid("schedule start time must be finite"));
        }
        for block in self.phases.iter().flat_map(|p| &p.activities) {
            if !(block.duration_s.is_finite() && block.duration_s > 0.0) {
                return Err(Error::invalid(format!(
                    "activity {} has non-positive duration {}",
                    block.activity, block.duration_s
                )));
            }
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.phases.iter().map(Phase::duration_s).sum()
    }
}

/// Voluntary-movement recipe of one activity.
struct Template {
    band_hz: (f64, f64),
    wrist_amp: f64,
    ankle_amp: f64,
    /// Gait-like fundamental plus second harmonic instead of free components.
    periodic: bool,
    tremor_gain: f64,
}

fn template(activity: Activity) -> Template {
    let t = |lo, hi, wrist_amp, ankle_amp, periodic, tremor_gain| Template {
        band_hz: (lo, hi),
        wrist_amp,
        ankle_amp,
        periodic,
        tremor_gain,
    };
    match activity {
        Activity::Resting => t(0.3, 1.0, 5.0, 2.0, false, 1.0),
        Activity::Walking => t(0.9, 1.3, 45.0, 150.0, true, 0.6),
        Activity::Drinking => t(0.5, 1.2, 65.0, 3.0, false, 0.7),
        Activity::Dressing => t(0.8, 2.0, 75.0, 20.0, false, 0.7),
        Activity::HairBrushing => t(1.0, 2.5, 70.0, 3.0, false, 0.7),
        Activity::UnpackingGroceries => t(0.5, 1.5, 70.0, 30.0, false, 0.7),
        Activity::CuttingFood => t(1.0, 2.5, 65.0, 2.0, false, 0.7),
    }
}

/// Per-subject constants shared by all sessions of that subject.
struct SubjectStyle {
    /// Unit direction of the tremor in sensor axes.
    tremor_axis: [f64; 3],
    /// Voluntary-movement components (frequency, relative amplitude) per
    /// activity, at full speed.
    components: [Vec<(f64, f64)>; 7],
    /// Axis weights of voluntary movement per activity and sensor.
    axis_weights: [[[f64; 3]; 2]; 7],
    /// Phase offsets between axes per activity and sensor, fixing how the
    /// axes move together.
    axis_phases: [[[f64; 3]; 2]; 7],
    bias: [[f64; 3]; 2],
}

const FREE_COMPONENTS: usize = 6;

impl SubjectStyle {
    fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let tremor_axis = unit_vector(&mut rng);
        let components = std::array::from_fn(|a| {
            let tpl = template(Activity::ALL[a]);
            let (lo, hi) = tpl.band_hz;
            if tpl.periodic {
                let f0 = rng.random_range(lo..hi);
                vec![(f0, 1.0), (2.0 * f0, 0.45)]
            } else {
                (0..FREE_COMPONENTS)
                    .map(|_| (rng.random_range(lo..hi), rng.random_range(0.5..1.0)))
                    .collect()
            }
        });
        let mut axis_weights = [[[0.0; 3]; 2]; 7];
        for w in axis_weights.iter_mut().flatten().flatten() {
            *w = rng.random_range(0.7..1.0);
        }
        let mut axis_phases = [[[0.0; 3]; 2]; 7];
        for p in axis_phases.iter_mut().flatten() {
            *p = phases(&mut rng);
        }
        let mut bias = [[0.0; 3]; 2];
        for b in bias.iter_mut().flatten() {
            *b = rng.random_range(-2.0..2.0);
        }
        Self {
            tremor_axis,
            components,
            axis_weights,
            axis_phases,
            bias,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: [f64; 3] = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-3 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

const MAX_VOLUNTARY_DPS: f64 = 400.0;
const HESITATION_RATE_HZ: f64 = 0.25;
const HESITATION_DEPTH: f64 = 0.1;

fn phases(rng: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI))
}

/// Sum of the subject's sinusoids for one activity with a slow amplitude
/// drift. Every axis carries the same frequencies with its own weight and
/// phase offset.
#[allow(clippy::too_many_arguments)]
fn voluntary(
    rng: &mut ChaCha8Rng,
    components: &[(f64, f64)],
    amp: f64,
    speed: f64,
    weights: [f64; 3],
    offsets: [f64; 3],
    n: usize,
    fs: f64,
) -> [Vec<f64>; 3] {
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    if amp == 0.0 {
        return out;
    }
    let norm: f64 = components.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
    let components: Vec<(f64, f64, [f64; 3])> = components
        .iter()
        .map(|&(f, a)| {
            let common = rng.random_range(0.0..2.0 * PI);
            let phase = offsets.map(|o| o + common);
            (f * speed, amp * a / norm * std::f64::consts::SQRT_2, phase)
        })
        .collect();
    let env_f = rng.random_range(0.05..0.15);
    let env_phase = rng.random_range(0.0..2.0 * PI);
    for i in 0..n {
        let t = i as f64 / fs;
        let env = 1.0 + 0.2 * (2.0 * PI * env_f * t + env_phase).sin();
        for &(f, a, phase) in &components {
            let v = a * env;
            for k in 0..3 {
                out[k][i] += v * weights[k] * (2.0 * PI * f * t + phase[k]).sin();
            }
        }
    }
    out
}

/// Multiplicative envelope with randomly placed pauses of 0.5–1.5 s.
fn hesitation_envelope(rng: &mut ChaCha8Rng, n: usize, fs: f64) -> Vec<f64> {
    let mut env = vec![1.0f64; n];
    let ramp = 0.25 * fs;
    let mut t = 0.0;
    let duration = n as f64 / fs;
    loop {
        t += -rng.random::<f64>().max(1e-12).ln() / HESITATION_RATE_HZ;
        if t >= duration {
            break;
        }
        let len = rng.random_range(0.5..1.5) * fs;
        let start = t * fs;
        let end = start + len;
        let lo = (start - ramp).max(0.0) as usize;
        let hi = ((end + ramp).ceil() as usize).min(n);
        for (i, e) in env.iter_mut().enumerate().take(hi).skip(lo) {
            let x = i as f64;
            let dist = if x < start {
                start - x
            } else if x > end {
                x - end
            } else {
                0.0
            };
            let depth: f64 = if dist >= ramp { 0.0 } else { 0.5 + 0.5 * (PI * dist / ramp).cos() };
            *e = e.min(1.0 - (1.0 - HESITATION_DEPTH) * depth);
        }
        t += len / fs;
    }
    env
}

fn rms(axes: &[Vec<f64>; 3]) -> f64 {
    let n = axes[0].len().max(1) as f64;
    (axes.iter().flatten().map(|v| v * v).sum::<f64>() / (3.0 * n)).sqrt()
}

/// Renders a labelled recording of `profile` following `schedule`.
pub fn generate(profile: &SubjectProfile, schedule: &SessionSchedule, sample_rate_hz: f64) -> Result<Recording> {
    profile.validate()?;
    schedule.validate()?;
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let fs = sample_rate_hz;
    let style = SubjectStyle::draw(profile.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    rng.set_stream(schedule.stream);
    let noise = Normal::new(0.0, profile.noise_floor.max(f64::MIN_POSITIVE)).expect("finite noise sd");
    let tremor_sensor = profile.tremor_site.sensor();

    let mut signals: [[Vec<f64>; 3]; 2] = Default::default();
    let mut truth = Vec::new();
    let mut activities = Vec::new();
    let mut tremor_phase = rng.random_range(0.0..2.0 * PI);

    for phase in &schedule.phases {
        let off = phase.state == MedState::Off;
        for block in &phase.activities {
            let n = (block.duration_s * fs).round() as usize;
            let tpl = template(block.activity);
            let (scale, speed) = if off {
                (profile.bradykinesia_factor, 0.5 + 0.5 * profile.bradykinesia_factor)
            } else {
                (1.0, 1.0)
            };
            for (s, sensor) in SensorId::ALL.iter().enumerate() {
                let amp = match sensor {
                    SensorId::Wrist => tpl.wrist_amp,
                    SensorId::Ankle => tpl.ankle_amp,
                };
                let mut axes = voluntary(
                    &mut rng,
                    &style.components[block.activity as usize],
                    amp,
                    speed,
                    style.axis_weights[block.activity as usize][s],
                    style.axis_phases[block.activity as usize][s],
                    n,
                    fs,
                );
                if off {
                    let reference = rms(&axes);
                    let env = hesitation_envelope(&mut rng, n, fs);
                    for axis in axes.iter_mut() {
                        for (v, e) in axis.iter_mut().zip(&env) {
                            *v *= e;
                        }
                    }
                    let paused = rms(&axes);
                    let k = if paused > 0.0 { scale * reference / paused } else { scale };
                    for v in axes.iter_mut().flatten() {
                        *v = (*v * k).clamp(-MAX_VOLUNTARY_DPS, MAX_VOLUNTARY_DPS);
                    }
                }
                for v in axes.iter_mut().flatten() {
                    *v = v.clamp(-MAX_VOLUNTARY_DPS, MAX_VOLUNTARY_DPS);
                }

                if tremor_sensor == Some(*sensor) && profile.off_tremor_amplitude > 0.0 {
                    let gain = tpl.tremor_gain * if off { 1.0 } else { profile.on_attenuation };
                    let amp = profile.off_tremor_amplitude * gain;
                    let mod_f = rng.random_range(0.1..0.3);
                    let mod_phase = rng.random_range(0.0..2.0 * PI);
                    let f = profile.tremor_frequency_hz;
                    for i in 0..n {
                        let t = i as f64 / fs;
                        let envelope = 0.7 + 0.3 * (2.0 * PI * mod_f * t + mod_phase).sin();
                        let v = amp * envelope * (tremor_phase + 2.0 * PI * f * t).sin();
                        for k in 0..3 {
                            axes[k][i] += v * style.tremor_axis[k];
                        }
                    }
                }
                for (k, axis) in axes.iter_mut().enumerate() {
                    let bias = style.bias[s][k];
                    for v in axis.iter_mut() {
                        *v += bias + noise.sample(&mut rng);
                    }
                    signals[s][k].extend_from_slice(axis);
                }
            }
            tremor_phase = rng.random_range(0.0..2.0 * PI);
            truth.extend(std::iter::repeat_n(phase.state, n));
            activities.extend(std::iter::repeat_n(block.activity, n));
        }
    }

    let streams = SensorId::ALL
        .iter()
        .zip(signals)
        .map(|(&sensor, [x, y, z])| SensorStream::new(sensor, x, y, z))
        .collect::<Result<Vec<_>>>()?;
    Recording::new(fs, schedule.start_time_s, streams, Some(truth), Some(activities))
}

/// Seconds per office activity in each training phase.
pub const TRAINING_BLOCK_S: f64 = 60.0;
/// Seconds per activity in the testing OFF and ON phases.
pub const TESTING_OFF_BLOCK_S: f64 = 317.0;
pub const TESTING_ON_BLOCK_S: f64 = 137.0;
/// Gap between the end of the training session and the testing session.
pub const SESSION_GAP_S: f64 = 1800.0;

/// Profile of a synthetic subject; the tremor site cycles none, wrist, ankle
/// with `seed % 3`.
pub fn default_profile(seed: u64) -> SubjectProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 1);
    SubjectProfile {
        tremor_site: match seed % 3 {
            0 => TremorSite::None,
            1 => TremorSite::Wrist,
            _ => TremorSite::Ankle,
        },
        tremor_frequency_hz: rng.random_range(4.2..5.8),
        off_tremor_amplitude: rng.random_range(15.0..40.0),
        on_attenuation: rng.random_range(0.02..0.15),
        bradykinesia_factor: rng.random_range(0.5..0.7),
        noise_floor: rng.random_range(0.5..1.5),
        seed,
    }
}

fn shuffled(rng: &mut ChaCha8Rng, activities: &[Activity], duration_s: f64) -> Vec<ActivityBlock> {
    use rand::seq::SliceRandom;
    let mut list = activities.to_vec();
    list.shuffle(rng);
    list.into_iter()
        .map(|activity| ActivityBlock { activity, duration_s })
        .collect()
}

/// Four office activities for one minute each, first in OFF then in ON.
pub fn training_schedule(seed: u64) -> SessionSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 2);
    SessionSchedule {
        start_time_s: 0.0,
        stream: 0,
        phases: vec![
            Phase {
                state: MedState::Off,
                activities: shuffled(&mut rng, &Activity::OFFICE, TRAINING_BLOCK_S),
            },
            Phase {
                state: MedState::On,
                activities: shuffled(&mut rng, &Activity::OFFICE, TRAINING_BLOCK_S),
            },
        ],
    }
}

/// All seven activities, about 37 min OFF then 16 min ON, starting after
/// the training session.
pub fn testing_schedule(seed: u64) -> SessionSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 3);
    let start = training_schedule(seed).duration_s() + SESSION_GAP_S;
    SessionSchedule {
        start_time_s: start,
        stream: 1,
        phases: vec![
            Phase {
                state: MedState::Off,
                activities: shuffled(&mut rng, &Activity::ALL, TESTING_OFF_BLOCK_S),
            },
            Phase {
                state: MedState::On,
                activities: shuffled(&mut rng, &Activity::ALL, TESTING_ON_BLOCK_S),
            },
        ],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub profile: SubjectProfile,
    pub training: Recording,
    pub testing: Recording,
}

pub fn study_with_profile(profile: SubjectProfile) -> Result<Study> {
    let seed = profile.seed;
    let training = generate(&profile, &training_schedule(seed), DEFAULT_SAMPLE_RATE_HZ)?;
    let testing = generate(&profile, &testing_schedule(seed), DEFAULT_SAMPLE_RATE_HZ)?;
    Ok(Study {
        profile,
        training,
        testing,
    })
}

/// Training and testing recordings of the synthetic subject `seed`.
pub fn default_study(seed: u64) -> Result<Study> {
    study_with_profile(default_profile(seed))
}
