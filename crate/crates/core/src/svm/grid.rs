use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cv_accuracy, stratified_folds, CV_FOLDS, CV_SEED};
use super::kernel::{squared_distances, KernelSpec};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub c: f64,
}

impl SvmConfig {
    /// Orders configurations from simplest to most complex: linear before
    /// rbf, then smaller c, then smaller γ.
    fn simplicity_cmp(&self, other: &Self) -> Ordering {
        let rank = |k: &KernelSpec| match k {
            KernelSpec::Linear => (0, 0.0),
            KernelSpec::Rbf { gamma } => (1, *gamma),
        };
        let (ka, ga) = rank(&self.kernel);
        let (kb, gb) = rank(&other.kernel);
        ka.cmp(&kb)
            .then(self.c.total_cmp(&other.c))
            .then(ga.total_cmp(&gb))
    }
}

/// Linear with c ∈ 2^{−2..2}, then rbf with c ∈ 2^{−2..2} × γ ∈ 2^{−4..4}.
pub fn default_grid() -> Vec<SvmConfig> {
    let cs: Vec<f64> = (-2..=2).map(|e| 2f64.powi(e)).collect();
    let gammas: Vec<f64> = (-4..=4).map(|e| 2f64.powi(e)).collect();
    let mut grid: Vec<SvmConfig> = cs
        .iter()
        .map(|&c| SvmConfig {
            kernel: KernelSpec::Linear,
            c,
        })
        .collect();
    for &c in &cs {
        for &gamma in &gammas {
            grid.push(SvmConfig {
                kernel: KernelSpec::Rbf { gamma },
                c,
            });
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridEvaluation {
    pub config: SvmConfig,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub evaluations: Vec<GridEvaluation>,
    pub best: SvmConfig,
    pub best_accuracy: f64,
}

pub fn grid_search(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<GridSearchResult> {
    grid_search_configs(x, y, &default_grid(), CV_FOLDS, CV_SEED)
}

/// Stratified k-fold CV accuracy of every configuration; the winner has the
/// most correct predictions, ties going to the simplest configuration.
pub fn grid_search_configs(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    configs: &[SvmConfig],
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if configs.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    for cfg in configs {
        cfg.kernel.validate()?;
    }
    let fold_of = stratified_folds(y, folds, seed)?;

    let mut kernels: Vec<(KernelSpec, Array2<f64>)> = Vec::new();
    let mut d2: Option<Array2<f64>> = None;
    for cfg in configs {
        if kernels.iter().any(|(k, _)| *k == cfg.kernel) {
            continue;
        }
        let m = match cfg.kernel {
            KernelSpec::Linear => cfg.kernel.gram(x),
            KernelSpec::Rbf { gamma } => d2
                .get_or_insert_with(|| squared_distances(x, x))
                .mapv(|v| (-gamma * v).exp()),
        };
        kernels.push((cfg.kernel, m));
    }

    let evaluations = configs
        .par_iter()
        .map(|cfg| {
            let k = &kernels.iter().find(|(spec, _)| *spec == cfg.kernel).expect("cached kernel").1;
            let correct = cv_accuracy(k.view(), y, &fold_of, cfg.c)?;
            Ok(GridEvaluation {
                config: *cfg,
                correct,
                accuracy: correct as f64 / y.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = evaluations
        .iter()
        .max_by(|a, b| {
            a.correct
                .cmp(&b.correct)
                .then_with(|| b.config.simplicity_cmp(&a.config))
        })
        .expect("non-empty grid");
    log::debug!("grid search winner {:?} with CV accuracy {:.4}", best.config, best.accuracy);
    Ok(GridSearchResult {
        best: best.config,
        best_accuracy: best.accuracy,
        evaluations,
    })
}
