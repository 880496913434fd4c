use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use super::cv::{cv_accuracy, stratified_folds};
use super::grid::SvmConfig;
use super::kernel::{squared_distances, KernelSpec};
use super::smo::solve_dual;
use super::{train, TrainedSvm};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RfeStep {
    /// Columns (of the input matrix) in use at this step.
    pub features: Vec<usize>,
    pub correct: usize,
    pub accuracy: f64,
    /// Column eliminated after this step; `None` on the last step.
    pub removed: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RfeResult {
    /// Selected columns, ascending.
    pub subset: Vec<usize>,
    pub model: TrainedSvm,
    /// One entry per subset size, from all features down to one.
    pub trace: Vec<RfeStep>,
    pub accuracy: f64,
}

/// Kernel state that can drop one feature at a time without recomputing
/// from scratch.
enum Incremental {
    Linear { gram: Array2<f64> },
    Rbf { gamma: f64, d2: Array2<f64> },
}

impl Incremental {
    fn new(x: ArrayView2<'_, f64>, kernel: KernelSpec) -> Self {
        match kernel {
            KernelSpec::Linear => Incremental::Linear { gram: kernel.gram(x) },
            KernelSpec::Rbf { gamma } => Incremental::Rbf {
                gamma,
                d2: squared_distances(x, x),
            },
        }
    }

    fn kernel(&self) -> Array2<f64> {
        match self {
            Incremental::Linear { gram } => gram.clone(),
            Incremental::Rbf { gamma, d2 } => d2.mapv(|v| (-gamma * v).exp()),
        }
    }

    fn remove(&mut self, col: ndarray::ArrayView1<'_, f64>) {
        let n = col.len();
        match self {
            Incremental::Linear { gram } => {
                for i in 0..n {
                    for k in 0..n {
                        gram[[i, k]] -= col[i] * col[k];
                    }
                }
            }
            Incremental::Rbf { d2, .. } => {
                for i in 0..n {
                    for k in 0..n {
                        let diff = col[i] - col[k];
                        d2[[i, k]] = (d2[[i, k]] - diff * diff).max(0.0);
                    }
                    d2[[i, i]] = 0.0;
                }
            }
        }
    }
}

/// Ranking score of each column in `current`: the squared primal weight for
/// the linear kernel, and for rbf the change in `αᵀHα` when that feature is
/// left out of the kernel.
fn feature_scores(
    x: ArrayView2<'_, f64>,
    current: &[usize],
    state: &Incremental,
    k: &Array2<f64>,
    coef: &[f64],
) -> Vec<f64> {
    let sv: Vec<usize> = (0..coef.len()).filter(|&i| coef[i] != 0.0).collect();
    match state {
        Incremental::Linear { .. } => current
            .iter()
            .map(|&j| {
                let w: f64 = sv.iter().map(|&i| coef[i] * x[[i, j]]).sum();
                w * w
            })
            .collect(),
        Incremental::Rbf { gamma, d2 } => {
            let mut full = 0.0;
            for &i in &sv {
                for &l in &sv {
                    full += coef[i] * coef[l] * k[[i, l]];
                }
            }
            current
                .iter()
                .map(|&j| {
                    let mut reduced = 0.0;
                    for &i in &sv {
                        for &l in &sv {
                            let diff = x[[i, j]] - x[[l, j]];
                            let dist = (d2[[i, l]] - diff * diff).max(0.0);
                            reduced += coef[i] * coef[l] * (-gamma * dist).exp();
                        }
                    }
                    (full - reduced).abs()
                })
                .collect()
        }
    }
}

/// Backward elimination of one feature per step, tracking stratified k-fold
/// CV accuracy at every subset size. Returns the subset with the highest
/// accuracy, ties going to the smaller subset.
pub fn rfe(x: ArrayView2<'_, f64>, y: &[f64], config: SvmConfig, folds: usize, seed: u64) -> Result<RfeResult> {
    let d = x.ncols();
    if d == 0 {
        return Err(Error::invalid("feature elimination needs at least one feature"));
    }
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    config.kernel.validate()?;
    let fold_of = stratified_folds(y, folds, seed)?;
    let mut state = Incremental::new(x, config.kernel);
    let mut current: Vec<usize> = (0..d).collect();
    let mut trace = Vec::with_capacity(d);

    loop {
        let k = state.kernel();
        let correct = cv_accuracy(k.view(), y, &fold_of, config.c)?;
        let mut step = RfeStep {
            features: current.clone(),
            correct,
            accuracy: correct as f64 / y.len() as f64,
            removed: None,
        };
        if current.len() == 1 {
            trace.push(step);
            break;
        }
        let sol = solve_dual(k.view(), y, config.c)?;
        let coef: Vec<f64> = sol.alpha.iter().zip(y).map(|(a, l)| a * l).collect();
        let scores = feature_scores(x, &current, &state, &k, &coef);
        let mut worst = 0;
        for (pos, s) in scores.iter().enumerate() {
            if *s < scores[worst] {
                worst = pos;
            }
        }
        let removed = current.remove(worst);
        state.remove(x.column(removed));
        step.removed = Some(removed);
        log::trace!("rfe: {} features, CV accuracy {:.4}, dropping {removed}", step.features.len(), step.accuracy);
        trace.push(step);
    }

    let best = trace
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.correct.cmp(&b.correct).then(ia.cmp(ib)))
        .map(|(_, s)| s)
        .expect("non-empty trace");
    let mut subset = best.features.clone();
    subset.sort_unstable();
    let accuracy = best.accuracy;
    let model = train(x.select(Axis(1), &subset).view(), y, config.kernel, config.c)?;
    Ok(RfeResult {
        subset,
        model,
        trace,
        accuracy,
    })
}
