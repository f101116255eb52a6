//! Ordinary least squares baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::IndexedSample;

/// Diagonal jitter added when the normal matrix is not positive definite.
pub const RIDGE_JITTER: f64 = 1.0e-10;

/// `y ≈ β₀ + Σ βₖ xₖ`; `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept() + self.slopes().iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Solves `XᵀX β = Xᵀy` by Cholesky, retrying with `RIDGE_JITTER` on the
/// diagonal when `XᵀX` is singular (including under-determined systems).
pub fn linear_fit(train: &IndexedSample) -> LinearModel {
    let n = train.len();
    let m = train.dim();
    let x = DMatrix::from_fn(n, m + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            train.points()[i][j - 1]
        }
    });
    let y = DVector::from_column_slice(train.values());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let beta = match xtx.clone().cholesky() {
        Some(chol) => chol.solve(&xty),
        None => {
            let jittered = xtx + DMatrix::identity(m + 1, m + 1) * RIDGE_JITTER;
            match jittered.clone().cholesky() {
                Some(chol) => chol.solve(&xty),
                None => jittered
                    .lu()
                    .solve(&xty)
                    .unwrap_or_else(|| DVector::zeros(m + 1)),
            }
        }
    };
    LinearModel {
        coefficients: beta.iter().copied().collect(),
    }
}
