use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Runs a forward FFT in place using a per-thread plan cache.
pub(crate) fn fft_forward(buf: &mut [Complex<f64>]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

pub(crate) fn fft_inverse(buf: &mut [Complex<f64>]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// One-sided periodogram of a whole window (no taper, no padding).
///
/// Scaled so the bins sum to the mean square of the signal: a sinusoid of
/// amplitude `A` on an exact bin carries `A²/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Periodogram {
    pub power: Vec<f64>,
    pub resolution_hz: f64,
}

impl Periodogram {
    pub fn new(signal: &[f64], sample_rate_hz: f64) -> Self {
        let n = signal.len();
        if n == 0 {
            return Self {
                power: Vec::new(),
                resolution_hz: 0.0,
            };
        }
        let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft_forward(&mut buf);
        let bins = n / 2 + 1;
        let norm = 1.0 / (n as f64 * n as f64);
        let power = (0..bins)
            .map(|k| {
                let p = buf[k].norm_sqr() * norm;
                if k == 0 || (n % 2 == 0 && k == n / 2) {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect();
        Self {
            power,
            resolution_hz: sample_rate_hz / n as f64,
        }
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution_hz
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Sum of bins whose frequency lies in `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let mut any = false;
        let mut sum = 0.0;
        for (k, p) in self.power.iter().enumerate() {
            let f = self.frequency(k);
            if f >= lo_hz && f <= hi_hz {
                any = true;
                sum += p;
            }
        }
        if !any {
            log::warn!("no periodogram bin falls in [{lo_hz}, {hi_hz}] Hz");
        }
        sum
    }
}

pub fn band_power(p: &Periodogram, lo_hz: f64, hi_hz: f64) -> f64 {
    p.band_power(lo_hz, hi_hz)
}

pub(crate) fn high_freq_fraction_raw(p: &Periodogram) -> f64 {
    let total = p.total();
    if total <= 0.0 {
        return f64::NAN;
    }
    let high: f64 = p
        .power
        .iter()
        .enumerate()
        .filter(|&(k, _)| p.frequency(k) > 4.0)
        .map(|(_, v)| v)
        .sum();
    high / total
}

/// Fraction of power above 4 Hz; 0 for a zero window.
pub fn high_freq_fraction(p: &Periodogram) -> f64 {
    nan_to_zero(high_freq_fraction_raw(p))
}

pub(crate) fn spectral_entropy_raw(p: &Periodogram) -> f64 {
    let total = p.total();
    if total <= 0.0 {
        return f64::NAN;
    }
    -p.power
        .iter()
        .map(|v| v / total)
        .filter(|&q| q > 0.0)
        .map(|q| q * q.log2())
        .sum::<f64>()
}

/// Shannon entropy (bits) of the power-normalized periodogram.
pub fn spectral_entropy(p: &Periodogram) -> f64 {
    nan_to_zero(spectral_entropy_raw(p))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsdPeaks {
    pub peak: f64,
    pub frequency: f64,
    pub second_peak: f64,
    pub second_frequency: f64,
}

/// Local maxima below this fraction of the main peak are rounding noise.
const SECOND_PEAK_FLOOR: f64 = 1e-10;

/// Dominant periodogram bin, plus the largest strict local maximum outside
/// the dominant bin and its immediate neighbours.
pub fn psd_peaks(p: &Periodogram) -> PsdPeaks {
    let power = &p.power;
    if power.is_empty() {
        return PsdPeaks::default();
    }
    let mut k1 = 0;
    for (k, &v) in power.iter().enumerate() {
        if v > power[k1] {
            k1 = k;
        }
    }
    let peak = power[k1];
    let mut second: Option<usize> = None;
    for k in 1..power.len().saturating_sub(1) {
        if k.abs_diff(k1) <= 1 {
            continue;
        }
        let v = power[k];
        if v > power[k - 1] && v > power[k + 1] && v > SECOND_PEAK_FLOOR * peak {
            if second.is_none_or(|s| v > power[s]) {
                second = Some(k);
            }
        }
    }
    let (second_peak, second_frequency) = second.map_or((0.0, 0.0), |k| (power[k], p.frequency(k)));
    PsdPeaks {
        peak,
        frequency: if peak > 0.0 { p.frequency(k1) } else { 0.0 },
        second_peak,
        second_frequency,
    }
}

pub(crate) fn nan_to_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FS: f64 = 128.0;

    fn sine(freq: f64, amp: f64) -> Vec<f64> {
        (0..640).map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    #[test]
    fn bins_sum_to_mean_square() {
        let x: Vec<f64> = (0..640).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let p = Periodogram::new(&x, FS);
        let ms = x.iter().map(|v| v * v).sum::<f64>() / 640.0;
        assert!((p.total() - ms).abs() < 1e-9 * ms);
        assert_eq!(p.power.len(), 321);
        assert!((p.resolution_hz - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sinusoid_band_powers() {
        // Parseval: a 5 Hz tone of amplitude 10 carries 10²/2 = 50 in its bin.
        let p = Periodogram::new(&sine(5.0, 10.0), FS);
        assert!((band_power(&p, 4.0, 6.0) - 50.0).abs() < 1e-9);
        assert!(band_power(&p, 1.0, 4.0) < 1e-20);
        assert!((band_power(&p, 0.5, 15.0) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_window_gives_zero_spectral_features() {
        let p = Periodogram::new(&[0.0; 640], FS);
        assert_eq!(band_power(&p, 1.0, 4.0), 0.0);
        assert_eq!(high_freq_fraction(&p), 0.0);
        assert_eq!(spectral_entropy(&p), 0.0);
        assert_eq!(psd_peaks(&p), PsdPeaks::default());
        assert!(high_freq_fraction_raw(&p).is_nan());
    }

    #[test]
    fn high_freq_fraction_of_tones() {
        assert!(high_freq_fraction(&Periodogram::new(&sine(2.0, 1.0), FS)) < 0.01);
        assert!(high_freq_fraction(&Periodogram::new(&sine(6.0, 1.0), FS)) > 0.99);
    }

    #[test]
    fn spectral_entropy_limits() {
        assert!(spectral_entropy(&Periodogram::new(&sine(5.0, 3.0), FS)) < 1e-9);
        let k = 16;
        let flat = Periodogram {
            power: vec![0.25; k],
            resolution_hz: 1.0,
        };
        assert!((spectral_entropy(&flat) - (k as f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn two_tone_peaks() {
        let x: Vec<f64> = sine(5.0, 2.0).iter().zip(sine(8.0, 1.0)).map(|(a, b)| a + b).collect();
        let pk = psd_peaks(&Periodogram::new(&x, FS));
        assert!((pk.frequency - 5.0).abs() < 1e-9);
        assert!((pk.second_frequency - 8.0).abs() < 1e-9);
        assert!(pk.peak > pk.second_peak);
    }

    #[test]
    fn single_tone_has_no_second_peak() {
        let pk = psd_peaks(&Periodogram::new(&sine(5.0, 2.0), FS));
        assert_eq!(pk.second_peak, 0.0);
        assert_eq!(pk.second_frequency, 0.0);
    }

    #[test]
    fn empty_band_is_zero() {
        let p = Periodogram::new(&sine(5.0, 1.0), FS);
        assert_eq!(band_power(&p, 5.05, 5.1), 0.0);
    }
}
