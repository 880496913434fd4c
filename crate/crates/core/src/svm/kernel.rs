use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma.is_finite() && gamma > 0.0 => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::invalid(format!("rbf gamma must be positive, got {gamma}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { gamma } => Some(gamma),
        }
    }

    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(&b),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    /// Kernel matrix between the rows of `a` and the rows of `b`.
    pub fn matrix(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        match *self {
            KernelSpec::Linear => a.dot(&b.t()),
            KernelSpec::Rbf { gamma } => squared_distances(a, b).mapv_into(|d2| (-gamma * d2).exp()),
        }
    }

    pub fn gram(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.matrix(x, x)
    }
}

/// Pairwise squared Euclidean distances between rows, computed directly so
/// the diagonal is exactly zero.
pub fn squared_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            out[[i, j]] = ra.iter().zip(rb.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
        }
    }
    out
}
