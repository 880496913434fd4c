use rustfft::num_complex::Complex;

use super::spectral::{fft_forward, fft_inverse, nan_to_zero};

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Mean of the signed second difference, in units of signal / s².
///
/// The interior second differences telescope, so only the four end samples
/// matter.
pub fn average_jerk(x: &[f64], sample_rate_hz: f64) -> f64 {
    let n = x.len();
    if n < 3 {
        return 0.0;
    }
    let total = (x[n - 1] - x[n - 2]) - (x[1] - x[0]);
    total / (n - 2) as f64 * sample_rate_hz * sample_rate_hz
}

/// Population moments of a window. Kurtosis is non-excess.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasicStats {
    pub std: f64,
    pub peak_to_peak: f64,
    pub mean: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Skewness and kurtosis are NaN for a constant window.
pub(crate) fn basic_stats_raw(x: &[f64]) -> BasicStats {
    let n = x.len() as f64;
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = x.iter().sum::<f64>() / n;
    if is_constant(x) {
        return BasicStats {
            std: 0.0,
            peak_to_peak: 0.0,
            mean: x[0],
            skewness: f64::NAN,
            kurtosis: f64::NAN,
        };
    }
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    BasicStats {
        std,
        peak_to_peak: max - min,
        mean,
        skewness: m3 / (m2 * std),
        kurtosis: m4 / (m2 * m2),
    }
}

/// Standard deviation, peak-to-peak, mean, skewness and kurtosis; a constant
/// window has zero skewness and kurtosis.
pub fn basic_stats(x: &[f64]) -> BasicStats {
    let s = basic_stats_raw(x);
    BasicStats {
        skewness: nan_to_zero(s.skewness),
        kurtosis: nan_to_zero(s.kurtosis),
        ..s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AutocorrFeatures {
    pub num_peaks: f64,
    pub sum_peaks: f64,
    /// Lag in samples.
    pub first_peak_lag: f64,
    pub first_peak_value: f64,
}

/// Biased autocorrelation of the mean-removed window, normalized so lag 0
/// is 1. Computed through a zero-padded FFT. Empty for a constant window.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 || is_constant(x) {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for (slot, &v) in buf.iter_mut().zip(x) {
        slot.re = v - mean;
    }
    fft_forward(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    fft_inverse(&mut buf);
    let r0 = buf[0].re;
    let mut r: Vec<f64> = buf[..n].iter().map(|c| c.re / r0).collect();
    r[0] = 1.0;
    r
}

pub(crate) fn autocorr_from_sequence(r: &[f64]) -> AutocorrFeatures {
    if r.is_empty() {
        return AutocorrFeatures {
            num_peaks: f64::NAN,
            sum_peaks: f64::NAN,
            first_peak_lag: f64::NAN,
            first_peak_value: f64::NAN,
        };
    }
    let mut out = AutocorrFeatures::default();
    let mut count = 0usize;
    for k in 1..r.len().saturating_sub(1) {
        if r[k] > r[k - 1] && r[k] > r[k + 1] {
            if count == 0 {
                out.first_peak_lag = k as f64;
                out.first_peak_value = r[k];
            }
            count += 1;
            out.sum_peaks += r[k];
        }
    }
    out.num_peaks = count as f64;
    out
}

pub(crate) fn autocorr_features_raw(x: &[f64]) -> AutocorrFeatures {
    autocorr_from_sequence(&autocorrelation(x))
}

/// Peaks of the autocorrelation over lags `1..len-1`, excluding lag 0.
/// All four values are 0 when there is no peak.
pub fn autocorr_features(x: &[f64]) -> AutocorrFeatures {
    let f = autocorr_features_raw(x);
    AutocorrFeatures {
        num_peaks: nan_to_zero(f.num_peaks),
        sum_peaks: nan_to_zero(f.sum_peaks),
        first_peak_lag: nan_to_zero(f.first_peak_lag),
        first_peak_value: nan_to_zero(f.first_peak_value),
    }
}

pub(crate) fn cross_correlation_raw(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cross-correlation needs equal lengths");
    if a.is_empty() || is_constant(a) || is_constant(b) {
        return f64::NAN;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        let (du, dv) = (u - ma, v - mb);
        sab += du * dv;
        saa += du * du;
        sbb += dv * dv;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Pearson correlation at lag 0; 0 when either signal is constant.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    nan_to_zero(cross_correlation_raw(a, b))
}
