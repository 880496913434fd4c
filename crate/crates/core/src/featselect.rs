//! Univariate screening of training features between the ON and OFF classes.
//!
//! Each feature is checked for normality within each class
//! (Anderson-Darling). Features normal in both classes are compared with a
//! pooled-variance t-test, the rest with the Wilcoxon rank-sum test, and
//! those with p < 0.05 are kept.

use ndarray::{ArrayView2, Axis};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::erf::erfc;

use crate::datamodel::MedState;
use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;
/// Critical value of the small-sample corrected A² at α = 0.05.
pub const AD_CRITICAL_5PCT: f64 = 0.752;
pub const MIN_AD_SAMPLES: usize = 8;
/// Number of features kept when none passes the significance test.
pub const FALLBACK_FEATURES: usize = 10;
/// Largest combined sample size for which the rank-sum p-value is exact.
pub const EXACT_RANK_SUM_MAX: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AndersonDarling {
    /// Corrected statistic `A²(1 + 0.75/n + 2.25/n²)`.
    pub statistic: f64,
    pub is_normal: bool,
}

fn ln_normal_cdf(z: f64) -> f64 {
    (0.5 * erfc(-z / std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE).ln()
}

/// Anderson-Darling test against the normal family with estimated mean and
/// variance. Zero-variance samples are non-normal.
pub fn anderson_darling(samples: &[f64]) -> Result<AndersonDarling> {
    let n = samples.len();
    if n < MIN_AD_SAMPLES {
        return Err(Error::invalid(format!(
            "Anderson-Darling needs at least {MIN_AD_SAMPLES} samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || samples.windows(2).all(|w| w[0] == w[1]) {
        return Ok(AndersonDarling {
            statistic: f64::INFINITY,
            is_normal: false,
        });
    }
    let mut z: Vec<f64> = samples.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let s: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (ln_normal_cdf(z[i]) + ln_normal_cdf(-z[n - 1 - i])))
        .sum();
    let a2 = -nf - s / nf;
    let statistic = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(AndersonDarling {
        statistic,
        is_normal: statistic < AD_CRITICAL_5PCT,
    })
}

fn mean_and_ss(x: &[f64]) -> (f64, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (m, x.iter().map(|v| (v - m).powi(2)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided pooled-variance two-sample t-test.
pub fn t_test_unpaired(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("t-test needs at least two samples per group"));
    }
    let (ma, ssa) = mean_and_ss(a);
    let (mb, ssb) = mean_and_ss(b);
    let df = (a.len() + b.len() - 2) as f64;
    let pooled = (ssa + ssb) / df;
    let se = (pooled * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    if !(se > 0.0) {
        let equal = ma == mb;
        return Ok(TTest {
            t: if equal { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            df,
            p_value: if equal { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p_value = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t, df, p_value })
}

/// Midranks (1-based) of the pooled sample, plus the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSum {
    /// Rank sum of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon rank-sum test. Exact over all rank assignments when
/// `n_a + n_b ≤ 20`, otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("rank-sum test needs at least two samples per group"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..a.len()].iter().sum();
    if ties.len() == 1 {
        return Ok(RankSum {
            statistic: w,
            p_value: 1.0,
            exact: n <= EXACT_RANK_SUM_MAX,
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if n <= EXACT_RANK_SUM_MAX {
        return Ok(RankSum {
            statistic: w,
            p_value: exact_rank_sum_p(&ranks, a.len()),
            exact: true,
        });
    }
    let nf = n as f64;
    let expected = na * (nf + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = na * nb / 12.0 * ((nf + 1.0) - tie_term);
    let dev = (w - expected).abs() - 0.5;
    let p_value = if dev <= 0.0 {
        1.0
    } else {
        let z = dev / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * normal.sf(z)).clamp(0.0, 1.0)
    };
    Ok(RankSum {
        statistic: w,
        p_value,
        exact: false,
    })
}

/// Probability, over all equally likely choices of `na` ranks, that the rank
/// sum deviates from its mean at least as much as observed. Works on doubled
/// midranks so all sums are integers.
fn exact_rank_sum_p(ranks: &[f64], na: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let n = ranks.len();
    // ways[k][s]: subsets of size k with doubled sum s.
    let mut ways = vec![vec![0.0f64; total + 1]; na + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=na).rev() {
            for s in (r..=total).rev() {
                let add = ways[k - 1][s - r];
                if add != 0.0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let observed: usize = doubled[..na].iter().sum();
    // Twice the expected doubled sum is na·(n+1)·2 / 2 · 2 = na·(n+1)·2 … keep
    // everything in doubled units: E[doubled sum] = na·(n+1).
    let centre = (na * (n + 1)) as i64;
    let obs_dev = (observed as i64 - centre).abs();
    let count_all: f64 = ways[na].iter().sum();
    let extreme: f64 = ways[na]
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as i64 - centre).abs() >= obs_dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / count_all).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    TTest,
    RankSum,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureScreen {
    pub index: usize,
    pub normal_off: bool,
    pub normal_on: bool,
    pub test: TestKind,
    pub p_value: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureScreenResult {
    pub features: Vec<FeatureScreen>,
    /// True when no feature passed and the lowest-p features were kept.
    pub fallback: bool,
}

impl FeatureScreenResult {
    pub fn selected(&self) -> Vec<usize> {
        self.features.iter().filter(|f| f.selected).map(|f| f.index).collect()
    }
}

/// Screens every column of `features` (rows = windows) against `labels`.
pub fn screen(features: ArrayView2<'_, f64>, labels: &[MedState]) -> Result<FeatureScreenResult> {
    if features.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let off_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == MedState::Off).collect();
    let on_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == MedState::On).collect();
    for (rows, name) in [(&off_rows, "OFF"), (&on_rows, "ON")] {
        if rows.is_empty() {
            return Err(Error::SingleClass { missing: name });
        }
        if rows.len() < MIN_AD_SAMPLES {
            return Err(Error::invalid(format!(
                "need at least {MIN_AD_SAMPLES} {name} windows for screening, got {}",
                rows.len()
            )));
        }
    }

    let mut out = Vec::with_capacity(features.ncols());
    for (index, col) in features.axis_iter(Axis(1)).enumerate() {
        let off: Vec<f64> = off_rows.iter().map(|&i| col[i]).collect();
        let on: Vec<f64> = on_rows.iter().map(|&i| col[i]).collect();
        let normal_off = anderson_darling(&off)?.is_normal;
        let normal_on = anderson_darling(&on)?.is_normal;
        let (test, p_value) = if normal_off && normal_on {
            (TestKind::TTest, t_test_unpaired(&off, &on)?.p_value)
        } else {
            (TestKind::RankSum, wilcoxon_rank_sum(&off, &on)?.p_value)
        };
        out.push(FeatureScreen {
            index,
            normal_off,
            normal_on,
            test,
            p_value,
            selected: p_value < SIGNIFICANCE,
        });
    }

    let fallback = !out.iter().any(|f| f.selected);
    if fallback {
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by(|&i, &j| out[i].p_value.total_cmp(&out[j].p_value).then(i.cmp(&j)));
        for &i in order.iter().take(FALLBACK_FEATURES) {
            out[i].selected = true;
        }
        log::warn!("no feature reached p < {SIGNIFICANCE}; keeping the {FALLBACK_FEATURES} lowest p-values");
    }
    Ok(FeatureScreenResult {
        features: out,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn t_test_closed_form() {
        let r = t_test_unpaired(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        // t = −3 / sqrt(2/3); two-sided p from t(4).
        assert!((r.t - (-3.0 / (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((r.p_value - 0.0214).abs() < 5e-4, "{}", r.p_value);
    }

    #[test]
    fn t_test_degenerate_cases() {
        assert_eq!(t_test_unpaired(&[1.0, 2.0], &[1.0, 2.0]).unwrap().p_value, 1.0);
        assert_eq!(t_test_unpaired(&[1.0, 1.0], &[1.0, 1.0]).unwrap().p_value, 1.0);
        assert_eq!(t_test_unpaired(&[1.0, 1.0], &[2.0, 2.0]).unwrap().p_value, 0.0);
        assert!(t_test_unpaired(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn exact_rank_sum_small() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!(r.exact);
        assert_eq!(r.p_value, 1.0 / 3.0);
        assert_eq!(wilcoxon_rank_sum(&[1.0, 2.0], &[1.0, 2.0]).unwrap().p_value, 1.0);
        assert_eq!(wilcoxon_rank_sum(&[5.0; 3], &[5.0; 4]).unwrap().p_value, 1.0);
    }

    #[test]
    fn exact_rank_sum_with_ties_matches_enumeration() {
        let a = [1.0, 2.0, 2.0, 7.0];
        let b = [2.0, 3.0, 8.0, 8.0, 9.0];
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (ranks, _) = midranks(&pooled);
        let centre = 4.0 * 10.0 / 2.0;
        let observed: f64 = ranks[..4].iter().sum();
        // Oracle: enumerate all C(9,4) subsets directly.
        let (mut total, mut extreme) = (0u32, 0u32);
        for mask in 0u32..(1 << 9) {
            if mask.count_ones() != 4 {
                continue;
            }
            let s: f64 = (0..9).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            total += 1;
            if (s - centre).abs() >= (observed - centre).abs() - 1e-9 {
                extreme += 1;
            }
        }
        let p = wilcoxon_rank_sum(&a, &b).unwrap().p_value;
        assert!((p - extreme as f64 / total as f64).abs() < 1e-12);
    }

    #[test]
    fn shifted_large_samples_highly_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal) + 2.0).collect();
        assert!(wilcoxon_rank_sum(&a, &b).unwrap().p_value < 1e-6);
    }

    #[test]
    fn anderson_darling_separates_normal_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let u: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        assert!(anderson_darling(&u).unwrap().statistic > AD_CRITICAL_5PCT);
        assert!(anderson_darling(&g).unwrap().statistic.is_finite());
        assert!(!anderson_darling(&[3.0; 20]).unwrap().is_normal);
        assert!(anderson_darling(&[1.0; 7]).is_err());
    }

    #[test]
    fn anderson_darling_false_rejection_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let trials = 500;
        let accepted = (0..trials)
            .filter(|_| {
                let g: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                anderson_darling(&g).unwrap().is_normal
            })
            .count();
        let rate = accepted as f64 / trials as f64;
        assert!((rate - 0.95).abs() <= 0.03, "{rate}");
    }

    fn labels(n_off: usize, n_on: usize) -> Vec<MedState> {
        let mut l = vec![MedState::Off; n_off];
        l.extend(vec![MedState::On; n_on]);
        l
    }

    #[test]
    fn screen_selects_informative_feature_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = labels(40, 40);
        let mut x = Array2::zeros((80, 3));
        for i in 0..80 {
            let class = if y[i] == MedState::Off { 1.0 } else { 0.0 };
            x[[i, 0]] = 5.0;
            x[[i, 1]] = class + 0.05 * rng.sample::<f64, _>(StandardNormal);
            x[[i, 2]] = rng.sample::<f64, _>(StandardNormal);
        }
        let r = screen(x.view(), &y).unwrap();
        assert!(!r.features[0].selected);
        assert!(r.features[1].selected);
        assert!(r.features[1].p_value < 1e-10);
        assert!(!r.fallback);
    }

    #[test]
    fn screen_fallback_and_errors() {
        let y = labels(10, 10);
        let x = Array2::from_elem((20, 12), 1.0);
        let r = screen(x.view(), &y).unwrap();
        assert!(r.fallback);
        assert_eq!(r.selected().len(), FALLBACK_FEATURES);

        let y = vec![MedState::Off; 20];
        assert!(matches!(screen(x.view(), &y), Err(Error::SingleClass { missing: "ON" })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn p_values_in_unit_interval(a in proptest::collection::vec(-1e3f64..1e3, 2..40),
                                     b in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let p1 = t_test_unpaired(&a, &b).unwrap().p_value;
            let p2 = wilcoxon_rank_sum(&a, &b).unwrap().p_value;
            prop_assert!((0.0..=1.0).contains(&p1));
            prop_assert!((0.0..=1.0).contains(&p2));
        }

        #[test]
        fn rank_sum_invariant_under_monotone_transform(a in proptest::collection::vec(-5f64..5.0, 2..30),
                                                       b in proptest::collection::vec(-5f64..5.0, 2..30)) {
            let f = |v: &f64| v.exp() * 3.0 + 1.0;
            let p = wilcoxon_rank_sum(&a, &b).unwrap().p_value;
            let fa: Vec<f64> = a.iter().map(f).collect();
            let fb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(p, wilcoxon_rank_sum(&fa, &fb).unwrap().p_value);
        }
    }
}
