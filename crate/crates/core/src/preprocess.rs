//! Bandpass filtering and overlapping segmentation of gyroscope streams.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::datamodel::{Activity, MedState, Recording, SensorId, SensorStream, SignalWindow};
use crate::error::{Error, Result};

pub const DEFAULT_LOW_HZ: f64 = 0.5;
pub const DEFAULT_HIGH_HZ: f64 = 15.0;
pub const DEFAULT_ORDER: usize = 512;

const PASSBAND_MIN_DB: f64 = -1.0;
const STOPBAND_MAX_DB: f64 = -20.0;

/// Linear-phase FIR filter; `coefficients.len() == order + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    coefficients: Vec<f64>,
    pass_band: (f64, f64),
    sample_rate_hz: f64,
}

impl FirFilter {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn pass_band(&self) -> (f64, f64) {
        self.pass_band
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, h) in self.coefficients.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).max(1e-300).log10()
    }
}

/// Windowed-sinc (Hamming) lowpass with unit DC gain.
fn lowpass_taps(cutoff_hz: f64, sample_rate_hz: f64, order: usize) -> Vec<f64> {
    let half = order / 2;
    let fc = cutoff_hz / sample_rate_hz;
    let mut taps = vec![0.0; order + 1];
    for n in 0..=half {
        let k = n as f64 - half as f64;
        let sinc = if n == half {
            2.0 * fc
        } else {
            (2.0 * PI * fc * k).sin() / (PI * k)
        };
        let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / order as f64).cos();
        taps[n] = sinc * window;
        taps[order - n] = taps[n];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Designs a linear-phase bandpass as the difference of two windowed-sinc
/// lowpass filters, then checks the magnitude response.
///
/// The response contract is ≥ −1 dB over `[2·low, ⅔·high]` and ≤ −20 dB at
/// `low / 10` and `2·high` (the latter only when below Nyquist).
pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate_hz: f64, order: usize) -> Result<FirFilter> {
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 < low < high < {nyquist} Hz, got ({low_hz}, {high_hz})"
        )));
    }
    if order < 2 || order % 2 != 0 {
        return Err(Error::invalid(format!("filter order must be even and ≥ 2, got {order}")));
    }
    let hi = lowpass_taps(high_hz, sample_rate_hz, order);
    let lo = lowpass_taps(low_hz, sample_rate_hz, order);
    let coefficients = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
    let filter = FirFilter {
        coefficients,
        pass_band: (low_hz, high_hz),
        sample_rate_hz,
    };

    let (pb_lo, pb_hi) = (2.0 * low_hz, high_hz * 2.0 / 3.0);
    let mut passband_min_db = 0.0_f64;
    if pb_lo < pb_hi {
        let steps = 200;
        for i in 0..=steps {
            let f = pb_lo + (pb_hi - pb_lo) * i as f64 / steps as f64;
            passband_min_db = passband_min_db.min(filter.magnitude_db(f));
        }
    }
    let mut stopband_max_db = filter.magnitude_db(low_hz / 10.0);
    if 2.0 * high_hz < nyquist {
        stopband_max_db = stopband_max_db.max(filter.magnitude_db(2.0 * high_hz));
    }
    if passband_min_db < PASSBAND_MIN_DB || stopband_max_db > STOPBAND_MAX_DB {
        return Err(Error::FilterDesign {
            order,
            passband_min_db,
            stopband_max_db,
        });
    }
    Ok(filter)
}

/// The default 0.5–15 Hz, order-512 filter for `sample_rate_hz`.
pub fn default_filter(sample_rate_hz: f64) -> Result<FirFilter> {
    design_bandpass(DEFAULT_LOW_HZ, DEFAULT_HIGH_HZ, sample_rate_hz, DEFAULT_ORDER)
}

/// Zero-phase filtering of one signal: reflect-pad by half the filter
/// length, convolve, and drop the `order / 2` group delay.
pub fn filter_signal(filter: &FirFilter, signal: &[f64]) -> Result<Vec<f64>> {
    let taps = filter.coefficients();
    let n = signal.len();
    if n <= taps.len() {
        return Err(Error::TooShort {
            samples: n,
            required: taps.len() + 1,
        });
    }
    let half = filter.order() / 2;
    let padded_len = n + 2 * half;
    let size = (padded_len + taps.len() - 1).next_power_of_two();

    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (i, slot) in buf.iter_mut().take(padded_len).enumerate() {
        let idx = i as isize - half as isize;
        let idx = if idx < 0 {
            (-idx) as usize
        } else if idx as usize >= n {
            2 * (n - 1) - idx as usize
        } else {
            idx as usize
        };
        slot.re = signal[idx];
    }
    let mut kernel = vec![Complex::new(0.0, 0.0); size];
    for (slot, &h) in kernel.iter_mut().zip(taps) {
        slot.re = h;
    }

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    forward.process(&mut buf);
    forward.process(&mut kernel);
    for (a, b) in buf.iter_mut().zip(&kernel) {
        *a *= b;
    }
    inverse.process(&mut buf);
    let scale = 1.0 / size as f64;
    Ok(buf[2 * half..2 * half + n].iter().map(|c| c.re * scale).collect())
}

/// Filters each axis of a stream independently.
pub fn filter_stream(filter: &FirFilter, stream: &SensorStream) -> Result<SensorStream> {
    let [x, y, z] = stream.axes();
    SensorStream::new(
        stream.sensor(),
        filter_signal(filter, x)?,
        filter_signal(filter, y)?,
        filter_signal(filter, z)?,
    )
}

/// Filters every stream of a recording with the default bandpass.
pub fn filter_recording(recording: &Recording) -> Result<Recording> {
    let filter = default_filter(recording.sample_rate_hz())?;
    recording.map_streams(|s| filter_stream(&filter, s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentConfig {
    pub window_s: f64,
    pub overlap_s: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            overlap_s: 4.0,
        }
    }
}

/// Index-aligned windows of every sensor of a recording.
#[derive(Clone, Debug)]
pub struct Segments<'a> {
    pub sample_rate_hz: f64,
    pub window_samples: usize,
    pub hop_samples: usize,
    pub sensors: Vec<SensorId>,
    /// `windows[s][i]` is window `i` of sensor `sensors[s]`.
    pub windows: Vec<Vec<SignalWindow<'a>>>,
}

impl Segments<'_> {
    pub fn len(&self) -> usize {
        self.windows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_samples as f64 / self.sample_rate_hz
    }

    pub fn labels(&self) -> Vec<Option<MedState>> {
        self.windows[0].iter().map(|w| w.label).collect()
    }

    pub fn activities(&self) -> Vec<Option<Activity>> {
        self.windows[0].iter().map(|w| w.activity).collect()
    }

    /// Time of each window's end, in seconds from the recording start.
    pub fn end_times_s(&self) -> Vec<f64> {
        self.windows[0]
            .iter()
            .map(|w| (w.start_sample + self.window_samples) as f64 / self.sample_rate_hz)
            .collect()
    }
}

/// Number of windows of length `window` with hop `hop` over `n` samples.
pub fn window_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / hop + 1
    }
}

/// Majority state over a label slice; exact ties go to OFF.
fn majority_state(labels: &[MedState]) -> MedState {
    let off = labels.iter().filter(|&&s| s == MedState::Off).count();
    if 2 * off >= labels.len() {
        MedState::Off
    } else {
        MedState::On
    }
}

/// Majority activity; ties go to the activity listed first in `Activity::ALL`.
fn majority_activity(labels: &[Activity]) -> Activity {
    let mut counts = [0usize; 7];
    for &a in labels {
        counts[a as usize] += 1;
    }
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Activity::ALL[best]
}

pub fn segment<'a>(recording: &'a Recording, config: &SegmentConfig) -> Result<Segments<'a>> {
    if !(config.window_s > config.overlap_s && config.overlap_s >= 0.0) {
        return Err(Error::invalid(format!(
            "window ({} s) must exceed overlap ({} s)",
            config.window_s, config.overlap_s
        )));
    }
    let fs = recording.sample_rate_hz();
    let window = (config.window_s * fs).round() as usize;
    let hop = ((config.window_s - config.overlap_s) * fs).round() as usize;
    if window == 0 || hop == 0 {
        return Err(Error::invalid("window and hop must span at least one sample"));
    }
    let n = recording.len_samples();
    if n < window {
        return Err(Error::TooShort {
            samples: n,
            required: window,
        });
    }
    let count = window_count(n, window, hop);
    let truth = recording.truth();
    let activities = recording.activities();
    let meta: Vec<(usize, Option<MedState>, Option<Activity>)> = (0..count)
        .map(|i| {
            let start = i * hop;
            let range = start..start + window;
            (
                start,
                truth.map(|t| majority_state(&t[range.clone()])),
                activities.map(|a| majority_activity(&a[range])),
            )
        })
        .collect();
    let windows = recording
        .streams()
        .iter()
        .map(|stream| {
            let [x, y, z] = stream.axes();
            meta.iter()
                .map(|&(start, label, activity)| SignalWindow {
                    sensor: stream.sensor(),
                    axes: [
                        &x[start..start + window],
                        &y[start..start + window],
                        &z[start..start + window],
                    ],
                    start_sample: start,
                    label,
                    activity,
                })
                .collect()
        })
        .collect();
    Ok(Segments {
        sample_rate_hz: fs,
        window_samples: window,
        hop_samples: hop,
        sensors: recording.sensors(),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 128.0;

    fn direct_filter(filter: &FirFilter, x: &[f64]) -> Vec<f64> {
        // Oracle: explicit reflect padding and centered dot products.
        let h = filter.coefficients();
        let half = filter.order() / 2;
        let n = x.len() as isize;
        let at = |i: isize| {
            let j = if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            };
            x[j as usize]
        };
        (0..n)
            .map(|k| {
                h.iter()
                    .enumerate()
                    .map(|(j, hj)| hj * at(k + half as isize - j as isize))
                    .sum()
            })
            .collect()
    }

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    fn interior_amplitude(y: &[f64], skip: usize) -> f64 {
        y[skip..y.len() - skip].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn default_design_meets_response_contract() {
        let f = default_filter(FS).unwrap();
        assert_eq!(f.order(), 512);
        assert_eq!(f.coefficients().len(), 513);
        for i in 0..=90 {
            let freq = 1.0 + i as f64 * 0.1;
            assert!(f.magnitude_db(freq) >= -1.0, "{freq} Hz: {}", f.magnitude_db(freq));
        }
        assert!(f.magnitude_db(0.05) <= -20.0);
        assert!(f.magnitude_db(30.0) <= -20.0);
    }

    #[test]
    fn coefficients_symmetric_and_zero_sum() {
        let f = default_filter(FS).unwrap();
        let h = f.coefficients();
        for i in 0..h.len() {
            assert!((h[i] - h[h.len() - 1 - i]).abs() <= 1e-12);
        }
        assert!(h.iter().sum::<f64>().abs() < 1e-6);
    }

    #[test]
    fn invalid_designs_rejected() {
        assert!(matches!(design_bandpass(15.0, 0.5, FS, 512), Err(Error::InvalidInput(_))));
        assert!(matches!(design_bandpass(0.5, 70.0, FS, 512), Err(Error::InvalidInput(_))));
        assert!(matches!(design_bandpass(0.5, 15.0, FS, 511), Err(Error::InvalidInput(_))));
        match design_bandpass(0.5, 15.0, FS, 32) {
            Err(Error::FilterDesign {
                passband_min_db,
                stopband_max_db,
                ..
            }) => assert!(passband_min_db < -1.0 || stopband_max_db > -20.0),
            other => panic!("expected FilterDesign error, got {other:?}"),
        }
    }

    #[test]
    fn fft_convolution_matches_direct_oracle() {
        let f = default_filter(FS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1500).map(|_| rng.random_range(-50.0..50.0)).collect();
        let fast = filter_signal(&f, &x).unwrap();
        let slow = direct_filter(&f, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn dc_is_rejected() {
        let f = default_filter(FS).unwrap();
        let y = filter_signal(&f, &vec![100.0; 4096]).unwrap();
        let inner = &y[600..y.len() - 600];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!(mean.abs() < 1e-3 * 100.0, "{mean}");
    }

    #[test]
    fn passband_and_stopband_sinusoids() {
        let f = default_filter(FS).unwrap();
        // Oracle: analytic response magnitude at the tone frequency.
        let expected_5 = 100.0 * f.magnitude(5.0);
        let y = filter_signal(&f, &sine(5.0, 100.0, 4096)).unwrap();
        let amp = interior_amplitude(&y, 600);
        assert!((amp - expected_5).abs() < 0.5, "{amp} vs {expected_5}");
        assert!((amp - 100.0).abs() <= 5.0);

        let y = filter_signal(&f, &sine(40.0, 100.0, 4096)).unwrap();
        assert!(interior_amplitude(&y, 600) <= 10.0);
    }

    #[test]
    fn white_noise_out_of_band_power_suppressed() {
        let f = default_filter(FS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1 << 14;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = filter_signal(&f, &x).unwrap();
        let band = |s: &[f64]| {
            let p = crate::features::Periodogram::new(s, FS);
            let out = p.band_power(20.0, 64.0);
            out
        };
        let ratio_db = 10.0 * (band(&y) / band(&x)).log10();
        assert!(ratio_db <= -20.0, "{ratio_db} dB");
    }

    #[test]
    fn zero_in_zero_out_and_impulse_symmetry() {
        let f = default_filter(FS).unwrap();
        assert!(filter_signal(&f, &vec![0.0; 2000]).unwrap().iter().all(|&v| v == 0.0));
        let mut x = vec![0.0; 2001];
        x[1000] = 1.0;
        let y = filter_signal(&f, &x).unwrap();
        for k in 1..=300 {
            assert!((y[1000 + k] - y[1000 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn short_stream_rejected() {
        let f = default_filter(FS).unwrap();
        assert!(matches!(filter_signal(&f, &[0.0; 300]), Err(Error::TooShort { .. })));
    }

    fn recording(n: usize, truth: Option<Vec<MedState>>) -> Recording {
        let s = |id| SensorStream::new(id, vec![1.0; n], vec![2.0; n], vec![3.0; n]).unwrap();
        Recording::new(FS, 0.0, vec![s(SensorId::Wrist), s(SensorId::Ankle)], truth, None).unwrap()
    }

    #[test]
    fn window_counts() {
        let r = recording(1280, None);
        let seg = segment(&r, &SegmentConfig::default()).unwrap();
        assert_eq!(seg.len(), 6);
        assert_eq!(seg.windows.len(), 2);
        assert_eq!(seg.windows[0][5].start_sample, seg.windows[1][5].start_sample);
        let r = recording(640, None);
        assert_eq!(segment(&r, &SegmentConfig::default()).unwrap().len(), 1);
        let r = recording(639, None);
        assert!(matches!(segment(&r, &SegmentConfig::default()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn boundary_window_takes_majority_label() {
        let mut truth = vec![MedState::Off; 3 * 128];
        truth.extend(vec![MedState::On; 2 * 128]);
        let rec = recording(640, Some(truth));
        let seg = segment(&rec, &SegmentConfig::default()).unwrap();
        assert_eq!(seg.labels(), vec![Some(MedState::Off)]);

        let mut tie = vec![MedState::On; 320];
        tie.extend(vec![MedState::Off; 320]);
        assert_eq!(majority_state(&tie), MedState::Off);
    }

    proptest! {
        #[test]
        fn windows_cover_every_sample_they_reach(n in 640usize..3000, win in 1usize..6, ovl in 0usize..5) {
            prop_assume!(win > ovl);
            let r = recording(n, None);
            let cfg = SegmentConfig { window_s: win as f64, overlap_s: ovl as f64 };
            let w = (win as f64 * FS) as usize;
            let h = ((win - ovl) as f64 * FS) as usize;
            match segment(&r, &cfg) {
                Ok(seg) => {
                    prop_assert_eq!(seg.len(), (n - w) / h + 1);
                    let last = seg.windows[0].last().unwrap().start_sample + w;
                    let mut covered = vec![false; n];
                    for win in &seg.windows[0] {
                        for c in &mut covered[win.start_sample..win.start_sample + w] { *c = true; }
                    }
                    prop_assert!(covered[..last].iter().all(|&c| c));
                }
                Err(_) => prop_assert!(n < w),
            }
        }
    }
}
