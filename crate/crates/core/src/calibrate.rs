//! Platt-sigmoid certainty calibration and certainty-threshold selection.
//!
//! Labels use the SVM coding (OFF = +1). The fitted sigmoid is the posterior
//! of the OFF class; `certainty` is the confidence in whichever label the
//! sign of the decision value emits.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::datamodel::Activity;
use crate::error::{Error, Result};
use crate::svm::{cv_decision_values_precomputed, group_folds, stratified_folds, SvmConfig, CV_FOLDS, CV_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    /// `P(OFF | d) = 1 / (1 + exp(a·d + b))`.
    pub fn posterior_off(&self, d: f64) -> f64 {
        sigmoid(-(self.a * d + self.b))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Certainty for `m ≥ 0`: `1 / (1 + exp(a·m + b))`.
pub fn certainty_positive_branch(m: f64, p: PlattParams) -> f64 {
    sigmoid(-(p.a * m + p.b))
}

/// Certainty for `m < 0`: `1 − 1 / (1 + exp(a·m + b))`.
pub fn certainty_negative_branch(m: f64, p: PlattParams) -> f64 {
    sigmoid(p.a * m + p.b)
}

/// Confidence in the label emitted for smoothed decision value `m`; the
/// positive branch also covers `m = 0`.
pub fn certainty(m: f64, p: PlattParams) -> f64 {
    if m >= 0.0 {
        certainty_positive_branch(m, p)
    } else {
        certainty_negative_branch(m, p)
    }
}

pub const PLATT_MAX_ITERATIONS: usize = 200;
pub const PLATT_GRADIENT_TOLERANCE: f64 = 1e-8;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PlattFit {
    pub params: PlattParams,
    /// Negative log-likelihood at the start and after every accepted step.
    pub nll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Platt's regularized targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub fn platt_targets(y: &[f64]) -> Vec<f64> {
    let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    let neg = y.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    y.iter().map(|&v| if v > 0.0 { hi } else { lo }).collect()
}

/// Negative log-likelihood of `(a, b)` against the regularized targets.
pub fn platt_nll(d: &[f64], targets: &[f64], p: PlattParams) -> f64 {
    d.iter()
        .zip(targets)
        .map(|(&di, &t)| {
            // With z = a·d + b, P = σ(−z): −t·ln P − (1−t)·ln(1−P).
            let z = p.a * di + p.b;
            t * softplus(z) + (1.0 - t) * softplus(-z)
        })
        .sum()
}

/// Maximum-likelihood sigmoid fit by Newton's method with backtracking.
pub fn platt_fit(d: &[f64], y: &[f64]) -> Result<PlattFit> {
    if d.len() != y.len() {
        return Err(Error::invalid(format!("{} decision values but {} labels", d.len(), y.len())));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("decision values must be finite"));
    }
    let pos = y.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 {
        return Err(Error::SingleClass { missing: "OFF" });
    }
    if pos == y.len() {
        return Err(Error::SingleClass { missing: "ON" });
    }
    let neg = y.len() - pos;
    let t = platt_targets(y);
    let mut p = PlattParams {
        a: 0.0,
        b: ((neg as f64 + 1.0) / (pos as f64 + 1.0)).ln(),
    };
    let mut f = platt_nll(d, &t, p);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < PLATT_MAX_ITERATIONS {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&di, &ti) in d.iter().zip(&t) {
            let z = p.a * di + p.b;
            let prob = sigmoid(-z);
            let w = prob * (1.0 - prob);
            h11 += di * di * w;
            h22 += w;
            h21 += di * w;
            let r = ti - prob;
            g1 += di * r;
            g2 += r;
        }
        if g1.hypot(g2) < PLATT_GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let cand = PlattParams {
                a: p.a + step * da,
                b: p.b + step * db,
            };
            let fc = platt_nll(d, &t, cand);
            if fc < f + 1e-4 * step * gd {
                p = cand;
                f = fc;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        iterations += 1;
        if !accepted {
            // No descent possible at machine precision: already at the optimum
            // for all practical purposes.
            converged = g1.hypot(g2) < 1e-5;
            if !converged {
                log::warn!("Platt line search failed at gradient norm {:.3e}", g1.hypot(g2));
            }
            break;
        }
        trace.push(f);
    }
    if !converged && iterations >= PLATT_MAX_ITERATIONS {
        log::warn!("Platt fit did not converge in {PLATT_MAX_ITERATIONS} iterations");
    }
    Ok(PlattFit {
        params: p,
        nll_trace: trace,
        iterations,
        converged,
    })
}

/// Candidate certainty thresholds, 0.50 to 0.90 in steps of 0.05.
pub const THRESHOLD_GRID: [f64; 9] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90];
/// Largest tolerated share of rejected training seconds, in percent.
pub const MAX_REJECTION_PERCENT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub rejected: usize,
    pub rejection_rate: f64,
}

pub fn rejection_table(certainties: &[f64]) -> Vec<ThresholdRow> {
    THRESHOLD_GRID
        .iter()
        .map(|&threshold| {
            let rejected = certainties.iter().filter(|&&p| p < threshold).count();
            ThresholdRow {
                threshold,
                rejected,
                rejection_rate: rejected as f64 / certainties.len().max(1) as f64,
            }
        })
        .collect()
}

/// Largest grid threshold rejecting at most 1% of the training certainties;
/// 0.50 when none qualifies.
pub fn select_threshold(certainties: &[f64]) -> Result<f64> {
    if certainties.is_empty() {
        return Err(Error::invalid("no training certainties to select a threshold from"));
    }
    let n = certainties.len();
    Ok(rejection_table(certainties)
        .iter()
        .rev()
        .find(|row| row.rejected * 100 <= MAX_REJECTION_PERCENT * n)
        .map_or(THRESHOLD_GRID[0], |row| row.threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Each of the four activities held out in turn.
    ActivityHoldout,
    /// Stratified random folds, used when activity folds are degenerate.
    Stratified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvDecisions {
    pub values: Vec<f64>,
    pub scheme: FoldScheme,
}

fn activity_folds_usable(y: &[f64], activities: &[Activity]) -> bool {
    let folds = group_folds(activities);
    let k = folds.iter().max().map_or(0, |m| m + 1);
    k == CV_FOLDS
        && (0..k).all(|f| {
            let mut classes = folds.iter().zip(y).filter(|(g, _)| **g == f).map(|(_, l)| *l > 0.0);
            let first = classes.next();
            first.is_some() && classes.any(|c| Some(c) != first)
        })
}

/// Out-of-fold decision values for the training windows, aligned to row
/// order. Folds are the activities when there are exactly four and each has
/// both classes; otherwise stratified random folds.
pub fn cv_decision_values(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    activities: &[Activity],
    config: SvmConfig,
) -> Result<CvDecisions> {
    if x.nrows() != y.len() || activities.len() != y.len() {
        return Err(Error::invalid("feature rows, labels and activities differ in length"));
    }
    let (folds, scheme) = if activity_folds_usable(y, activities) {
        (group_folds(activities), FoldScheme::ActivityHoldout)
    } else {
        log::warn!("activity folds are not four two-class groups; falling back to stratified {CV_FOLDS}-fold CV");
        (stratified_folds(y, CV_FOLDS, CV_SEED)?, FoldScheme::Stratified)
    };
    let k = config.kernel.gram(x);
    let values = cv_decision_values_precomputed(k.view(), y, &folds, config.c)?;
    Ok(CvDecisions { values, scheme })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmoidSample {
    pub decision: f64,
    pub posterior_off: f64,
    pub certainty: f64,
}

/// Samples of the fitted sigmoid across the range of training decisions.
pub fn sigmoid_curve(params: PlattParams, d: &[f64], points: usize) -> Vec<SigmoidSample> {
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (-1.0, 1.0) };
    (0..points)
        .map(|i| {
            let decision = lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64;
            SigmoidSample {
                decision,
                posterior_off: params.posterior_off(decision),
                certainty: certainty(decision, params),
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_examples() {
        let p = PlattParams { a: -1.0, b: 0.0 };
        assert_eq!(certainty(0.0, p), 0.5);
        assert_eq!(certainty_negative_branch(0.0, p), 0.5);
        let p = PlattParams { a: -2.0, b: 0.0 };
        let e2 = 2f64.exp();
        assert!((certainty(1.0, p) - 1.0 / (1.0 + (-2f64).exp())).abs() < 1e-15);
        assert!((certainty(-1.0, p) - e2 / (1.0 + e2)).abs() < 1e-15);
        assert!((certainty(1.0, p) - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn branches_are_complementary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = PlattParams {
                a: rng.random_range(-10.0..10.0),
                b: rng.random_range(-10.0..10.0),
            };
            let m = rng.random_range(-5.0..5.0);
            let s = certainty_positive_branch(m, p) + certainty_negative_branch(m, p);
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn certainty_grows_with_magnitude() {
        let p = PlattParams { a: -1.3, b: 0.2 };
        let ms: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        for w in ms.windows(2) {
            assert!(certainty(w[1], p) >= certainty(w[0], p));
            assert!(certainty(-w[1], p) >= certainty(-w[0], p));
        }
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(select_threshold(&[0.99; 50]).unwrap(), 0.90);
        let mut p = vec![0.95; 97];
        p.extend([0.52; 3]);
        assert_eq!(select_threshold(&p).unwrap(), 0.50);
        let mut p = vec![0.95; 99];
        p.push(0.53);
        assert_eq!(select_threshold(&p).unwrap(), 0.90);
        assert!(select_threshold(&[]).is_err());
    }

    #[test]
    fn separated_decisions_give_confident_posteriors() {
        let d: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.5 + i as f64 * 0.01 } else { -1.5 - i as f64 * 0.01 }).collect();
        let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = platt_fit(&d, &y).unwrap();
        assert!(fit.params.a < 0.0);
        for (di, yi) in d.iter().zip(&y) {
            if *yi > 0.0 {
                let p = fit.params.posterior_off(*di);
                assert!(p > 0.9 && p < 1.0, "{p}");
            }
        }
        assert!(fit.nll_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn uninformative_decisions_give_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d: Vec<f64> = (0..4000).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..4000).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { -1.0 }).collect();
        let fit = platt_fit(&d, &y).unwrap();
        assert!(fit.params.a.abs() < 0.1, "{:?}", fit.params);
        let prior = y.iter().filter(|&&v| v > 0.0).count() as f64 / 4000.0;
        for m in [-2.0, 0.0, 2.0] {
            assert!((fit.params.posterior_off(m) - prior).abs() < 0.05);
        }
    }

    #[test]
    fn fit_beats_coarse_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..200).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let d: Vec<f64> = y.iter().map(|l| 0.7 * l + rng.random_range(-1.0..1.0)).collect();
        let fit = platt_fit(&d, &y).unwrap();
        assert!(fit.converged);
        let t = platt_targets(&y);
        let best = platt_nll(&d, &t, fit.params);
        for i in 0..=40 {
            for j in 0..=40 {
                let p = PlattParams {
                    a: -10.0 + i as f64 * 0.5,
                    b: -10.0 + j as f64 * 0.5,
                };
                assert!(best <= platt_nll(&d, &t, p) + 1e-9);
            }
        }
    }

    #[test]
    fn platt_needs_both_classes() {
        assert!(matches!(platt_fit(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::SingleClass { missing: "ON" })));
    }
}
