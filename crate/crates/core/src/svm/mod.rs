//! Soft-margin binary SVM with linear and RBF kernels, grid search and
//! recursive feature elimination.
//!
//! Labels are coded OFF = +1, ON = −1, so a positive decision value means
//! OFF.

mod cv;
mod grid;
mod kernel;
mod rfe;
mod smo;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datamodel::MedState;
use crate::error::{Error, Result};

pub use cv::{cv_accuracy, cv_decision_values_precomputed, group_folds, stratified_folds, CV_FOLDS, CV_SEED};
pub use grid::{default_grid, grid_search, grid_search_configs, GridEvaluation, GridSearchResult, SvmConfig};
pub use kernel::{squared_distances, KernelSpec};
pub use rfe::{rfe, RfeResult, RfeStep};
pub use smo::{solve_dual, SmoDiagnostics, SmoSolution, SMO_TOLERANCE};

/// Tolerance on `Σ α_i y_i = 0` for a model to be accepted.
pub const EQUALITY_TOLERANCE: f64 = 1e-6;

pub fn class_labels(states: &[MedState]) -> Vec<f64> {
    states.iter().map(|s| s.class_sign()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedSvm {
    pub kernel: KernelSpec,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl TrainedSvm {
    pub fn dimension(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.kernel.validate().map_err(|e| Error::invariant(e.to_string()))?;
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invariant("svm cost c must be positive"));
        }
        if self.support_vectors.is_empty() || self.support_vectors.len() != self.dual_coef.len() {
            return Err(Error::invariant("support vectors and dual coefficients disagree"));
        }
        if self.support_vectors.iter().any(|s| s.len() != d || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invariant(format!("support vectors must be finite with {d} features")));
        }
        let tol = 1e-9 * self.c.max(1.0);
        if self.dual_coef.iter().any(|a| !a.is_finite() || a.abs() > self.c + tol) {
            return Err(Error::invariant("dual coefficients must lie in [-c, c]"));
        }
        let sum: f64 = self.dual_coef.iter().sum();
        if sum.abs() > EQUALITY_TOLERANCE {
            return Err(Error::invariant(format!("sum of alpha_i*y_i is {sum:e}, not 0")));
        }
        if !self.bias.is_finite() {
            return Err(Error::invariant("bias must be finite"));
        }
        Ok(())
    }

    fn sv_matrix(&self) -> Array2<f64> {
        let d = self.dimension().unwrap_or(0);
        let flat: Vec<f64> = self.support_vectors.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.support_vectors.len(), d), flat).expect("rectangular support vectors")
    }

    /// `f(x) = Σ α_i y_i K(s_i, x) + b` for every row of `x`.
    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let d = self.dimension().unwrap_or(0);
        if x.ncols() != d {
            return Err(Error::invalid(format!(
                "feature matrix has {} columns, model expects {d}",
                x.ncols()
            )));
        }
        let k = self.kernel.matrix(x, self.sv_matrix().view());
        Ok(k.rows()
            .into_iter()
            .map(|row| row.iter().zip(&self.dual_coef).map(|(kv, a)| kv * a).sum::<f64>() + self.bias)
            .collect())
    }

    /// Primal weight vector; only defined for the linear kernel.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return None;
        }
        let d = self.dimension()?;
        let mut w = vec![0.0; d];
        for (sv, a) in self.support_vectors.iter().zip(&self.dual_coef) {
            for (wj, v) in w.iter_mut().zip(sv) {
                *wj += a * v;
            }
        }
        Some(w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub model: TrainedSvm,
    /// Full α vector aligned with the training rows.
    pub alpha: Vec<f64>,
    pub diagnostics: SmoDiagnostics,
}

fn check_training_input(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("feature matrix has no columns"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature matrix contains non-finite values"));
    }
    if x.nrows() > 1 && x.rows().into_iter().all(|r| r == x.row(0)) {
        return Err(Error::invalid("degenerate training data: all rows are identical"));
    }
    Ok(())
}

/// Builds a model from a dual solution over the rows of `x`.
pub(crate) fn assemble(x: ArrayView2<'_, f64>, y: &[f64], kernel: KernelSpec, c: f64, sol: &SmoSolution) -> TrainedSvm {
    let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    TrainedSvm {
        kernel,
        c,
        support_vectors: sv.iter().map(|&i| x.row(i).to_vec()).collect(),
        dual_coef: sv.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
        bias: sol.bias,
    }
}

pub fn train_detailed(x: ArrayView2<'_, f64>, y: &[f64], kernel: KernelSpec, c: f64) -> Result<TrainOutput> {
    kernel.validate()?;
    check_training_input(x, y)?;
    let k = kernel.gram(x);
    let sol = solve_dual(k.view(), y, c)?;
    Ok(TrainOutput {
        model: assemble(x, y, kernel, c, &sol),
        alpha: sol.alpha,
        diagnostics: sol.diagnostics,
    })
}

/// Trains on z-scored features `x` with labels `y` (+1 = OFF, −1 = ON).
pub fn train(x: ArrayView2<'_, f64>, y: &[f64], kernel: KernelSpec, c: f64) -> Result<TrainedSvm> {
    train_detailed(x, y, kernel, c).map(|t| t.model)
}

pub(crate) fn select_square(k: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    k.select(Axis(0), idx).select(Axis(1), idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            x[[i, 0]] = 3.0 * label + 0.5 * rng.sample::<f64, _>(StandardNormal);
            x[[i, 1]] = rng.sample::<f64, _>(StandardNormal);
            y.push(label);
        }
        (x, y)
    }

    fn check_kkt(x: ArrayView2<'_, f64>, y: &[f64], out: &TrainOutput) {
        let c = out.model.c;
        let sum: f64 = out.alpha.iter().zip(y).map(|(a, yi)| a * yi).sum();
        assert!(sum.abs() <= 1e-6, "{sum}");
        let f = out.model.decision_values(x).unwrap();
        for i in 0..y.len() {
            let a = out.alpha[i];
            assert!((0.0..=c).contains(&a));
            if a > 0.0 && a < c {
                assert!((y[i] * f[i] - 1.0).abs() <= 1e-2, "margin {}", y[i] * f[i]);
            }
        }
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (x, y) = blobs(200, 1);
        let out = train_detailed(x.view(), &y, KernelSpec::Linear, 4.0).unwrap();
        let f = out.model.decision_values(x.view()).unwrap();
        assert!(f.iter().zip(&y).all(|(v, l)| v * l > 0.0));
        check_kkt(x.view(), &y, &out);
        out.model.validate(2).unwrap();
    }

    #[test]
    fn xor_needs_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let out = train_detailed(x.view(), &y, KernelSpec::Rbf { gamma: 1.0 }, 4.0).unwrap();
        let f = out.model.decision_values(x.view()).unwrap();
        assert!(f.iter().zip(&y).all(|(v, l)| v * l > 0.0), "{f:?}");
        check_kkt(x.view(), &y, &out);
    }

    #[test]
    fn objective_is_monotone() {
        let (x, y) = blobs(150, 3);
        let noisy = x.mapv(|v| v * 0.3);
        let out = train_detailed(noisy.view(), &y, KernelSpec::Rbf { gamma: 0.5 }, 2.0).unwrap();
        let t = &out.diagnostics.objective_trace;
        assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{t:?}");
    }

    #[test]
    fn label_swap_negates_decisions() {
        let (x, y) = blobs(120, 4);
        let x = x.mapv(|v| v * 0.4);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let probe = array![[0.1, 0.2], [-1.0, 3.0], [2.0, -0.5]];
        for kernel in [KernelSpec::Linear, KernelSpec::Rbf { gamma: 0.7 }] {
            let a = train(x.view(), &y, kernel, 1.0).unwrap().decision_values(probe.view()).unwrap();
            let b = train(x.view(), &neg, kernel, 1.0).unwrap().decision_values(probe.view()).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u + v).abs() <= 1e-9, "{u} {v}");
            }
        }
    }

    #[test]
    fn bias_shift_shifts_decisions() {
        let (x, y) = blobs(40, 5);
        let m = train(x.view(), &y, KernelSpec::Linear, 1.0).unwrap();
        let mut shifted = m.clone();
        shifted.bias += 0.75;
        let a = m.decision_values(x.view()).unwrap();
        let b = shifted.decision_values(x.view()).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| v - u == 0.75 || ((v - u) - 0.75).abs() < 1e-15));
    }

    #[test]
    fn training_errors() {
        let x = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(train(x.view(), &[1.0, -1.0, 1.0], KernelSpec::Linear, 1.0).is_err());
        let x = array![[1.0, 2.0], [0.0, 2.0]];
        assert!(matches!(
            train(x.view(), &[1.0, 1.0], KernelSpec::Linear, 1.0),
            Err(Error::SingleClass { .. })
        ));
        let m = train(x.view(), &[1.0, -1.0], KernelSpec::Linear, 1.0).unwrap();
        assert!(m.decision_values(array![[1.0]].view()).is_err());
    }
}
