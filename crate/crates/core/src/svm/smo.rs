//! Sequential minimal optimization for the C-SVC dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//! ```
//!
//! using maximal-violating-pair working-set selection.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// KKT gap at which the solver stops.
pub const SMO_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;
const MIN_MAX_ITERATIONS: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SmoDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `eᵀα − ½αᵀQα` after every `n` iterations and at exit.
    pub objective_trace: Vec<f64>,
    pub final_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Intercept `b` of `f(x) = Σ α_i y_i K(x_i, x) + b`.
    pub bias: f64,
    pub diagnostics: SmoDiagnostics,
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    // With G = Qα − e, αᵀQα = Σ α_i (G_i + 1).
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
}

/// Solves the dual for a precomputed kernel matrix. `y` must be ±1.
pub fn solve_dual(k: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<SmoSolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::invalid(format!(
            "kernel matrix is {}x{} but there are {n} labels",
            k.nrows(),
            k.ncols()
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("cost c must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    if !y.contains(&1.0) {
        return Err(Error::SingleClass { missing: "OFF" });
    }
    if !y.contains(&-1.0) {
        return Err(Error::SingleClass { missing: "ON" });
    }

    let diag: Vec<f64> = (0..n).map(|i| k[[i, i]]).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iterations = MIN_MAX_ITERATIONS.max(100 * n);
    let mut trace = vec![0.0];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    while iterations < max_iterations {
        let (mut i, mut gmax_up) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmax_low) = (usize::MAX, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if in_up(alpha[t], y[t]) && -yg > gmax_up {
                gmax_up = -yg;
                i = t;
            }
            if in_low(alpha[t], y[t]) && yg > gmax_low {
                gmax_low = yg;
                j = t;
            }
        }
        gap = gmax_up + gmax_low;
        if gap < SMO_TOLERANCE || i == usize::MAX || j == usize::MAX {
            converged = true;
            break;
        }

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let kij = k[[i, j]];
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * y[i] * y[j] * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        let (yi, yj) = (y[i], y[j]);
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
        iterations += 1;
        if iterations % n == 0 {
            trace.push(dual_objective(&alpha, &grad));
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations with KKT gap {gap:.3e}");
    }
    trace.push(dual_objective(&alpha, &grad));

    let rho = compute_rho(&alpha, &grad, y, c);
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        diagnostics: SmoDiagnostics {
            iterations,
            converged,
            objective_trace: trace,
            final_gap: gap,
        },
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
