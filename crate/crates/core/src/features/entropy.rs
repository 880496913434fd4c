//! Histogram entropy, Gini index and sample entropy.

use super::spectral::nan_to_zero;

/// Uniform amplitude histogram; values outside the range fall in the edge
/// bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: -400.0,
            hi: 400.0,
            bins: 200,
        }
    }
}

impl HistogramSpec {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let idx = ((v - self.lo) / self.bin_width()).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.bins - 1)
        }
    }

    /// Occupancy probability of every bin.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut counts = vec![0usize; self.bins];
        for &v in x {
            counts[self.bin_of(v)] += 1;
        }
        let n = x.len() as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Shannon entropy (bits) of the amplitude histogram.
pub fn shannon_entropy(x: &[f64], spec: &HistogramSpec) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    -spec
        .probabilities(x)
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}

/// `1 − Σ p²` over the amplitude histogram.
pub fn gini_index(x: &[f64], spec: &HistogramSpec) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    1.0 - spec.probabilities(x).into_iter().map(|p| p * p).sum::<f64>()
}

pub const SAMPLE_ENTROPY_M: usize = 2;
pub const SAMPLE_ENTROPY_R: f64 = 0.2;

/// Counts of template pairs (i < j) within tolerance for lengths `m`
/// (`matches_m`) and `m + 1` (`matches_m1`), over the `n − m` templates
/// that admit an `m + 1` extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemplateMatches {
    pub matches_m: u64,
    pub matches_m1: u64,
}

/// Sorts templates by their first sample and only compares pairs whose
/// first samples are already within `r`.
pub fn count_template_matches(x: &[f64], m: usize, r: f64) -> TemplateMatches {
    let mut out = TemplateMatches {
        matches_m: 0,
        matches_m1: 0,
    };
    if m == 0 || x.len() <= m {
        return out;
    }
    let templates = x.len() - m;
    let mut order: Vec<usize> = (0..templates).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    for (pos, &i) in order.iter().enumerate() {
        let xi = x[i];
        for &j in &order[pos + 1..] {
            if x[j] - xi >= r {
                break;
            }
            if (1..m).all(|k| (x[i + k] - x[j + k]).abs() < r) {
                out.matches_m += 1;
                if (x[i + m] - x[j + m]).abs() < r {
                    out.matches_m1 += 1;
                }
            }
        }
    }
    out
}

pub(crate) fn sample_entropy_raw(x: &[f64], m: usize, r_factor: f64) -> f64 {
    let n = x.len();
    if n <= m + 1 {
        return f64::NAN;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if x.windows(2).all(|w| w[0] == w[1]) || sd == 0.0 {
        return f64::NAN;
    }
    let counts = count_template_matches(x, m, r_factor * sd);
    sample_entropy_from_counts(counts, n)
}

/// `−ln(A / B)`; when no `m + 1` match exists the value is capped at
/// `ln(n · (n − 1))`.
pub fn sample_entropy_from_counts(counts: TemplateMatches, n: usize) -> f64 {
    if counts.matches_m1 == 0 || counts.matches_m == 0 {
        return (n as f64 * (n as f64 - 1.0)).ln();
    }
    -(counts.matches_m1 as f64 / counts.matches_m as f64).ln()
}

/// Sample entropy with embedding `m` and tolerance `r_factor · σ`
/// (Chebyshev distance, self-matches excluded). Constant windows give 0.
pub fn sample_entropy(x: &[f64], m: usize, r_factor: f64) -> f64 {
    nan_to_zero(sample_entropy_raw(x, m, r_factor))
}
