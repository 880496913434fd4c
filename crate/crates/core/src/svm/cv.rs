use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::smo::solve_dual;
use super::select_square;
use crate::error::{Error, Result};

pub const CV_FOLDS: usize = 4;
pub const CV_SEED: u64 = 0;

/// Assigns each sample a fold in `0..k`, shuffling each class with a seeded
/// generator and dealing it round-robin.
pub fn stratified_folds(y: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    for class in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "infeasible stratification: class {class:+} has {} samples for {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    Ok(folds)
}

/// One fold per distinct group, numbered in order of first appearance.
pub fn group_folds<G: PartialEq>(groups: &[G]) -> Vec<usize> {
    let mut seen: Vec<&G> = Vec::new();
    groups
        .iter()
        .map(|g| match seen.iter().position(|s| *s == g) {
            Some(p) => p,
            None => {
                seen.push(g);
                seen.len() - 1
            }
        })
        .collect()
}

/// Out-of-fold decision values from a kernel matrix over all samples.
pub fn cv_decision_values_precomputed(k: ArrayView2<'_, f64>, y: &[f64], folds: &[usize], c: f64) -> Result<Vec<f64>> {
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![f64::NAN; y.len()];
    for fold in 0..n_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
        if test.is_empty() {
            continue;
        }
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let sol = solve_dual(select_square(k, &train).view(), &y_train, c)?;
        let cross = k.select(Axis(0), &test).select(Axis(1), &train);
        for (row, &i) in cross.rows().into_iter().zip(&test) {
            let f: f64 = row
                .iter()
                .zip(&sol.alpha)
                .zip(&y_train)
                .map(|((kv, a), yt)| kv * a * yt)
                .sum();
            out[i] = f + sol.bias;
        }
    }
    Ok(out)
}

/// Number of samples whose out-of-fold prediction (`+1` iff `f > 0`) is
/// correct.
pub fn cv_accuracy(k: ArrayView2<'_, f64>, y: &[f64], folds: &[usize], c: f64) -> Result<usize> {
    let d = cv_decision_values_precomputed(k, y, folds, c)?;
    Ok(d.iter().zip(y).filter(|&(f, l)| (*f > 0.0) == (*l > 0.0)).count())
}
