//! Least squares, L1-penalized least squares by coordinate descent, lambda
//! paths and k-fold cross-validation.
//!
//! Designs are `n x m` matrices with one row per sample. Every solver fits
//! an intercept; unless asked otherwise it is left out of the penalty.

mod cv;
mod lasso;
mod ols;

use nalgebra::DVector;
use thiserror::Error;

pub use cv::{cv_lasso_path, cv_score, CvModel, FoldPlan, LassoCvPath, OlsCrossValidator};
pub(crate) use lasso::lambda_path_with;
pub use lasso::{lambda_max, lambda_path, lasso_fit, lasso_fit_from, LambdaPath, LassoOptions, LassoSolver};
pub use ols::{ols_fit, GramSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub residual_sum_squares: f64,
    /// Penalty weight; zero for ordinary least squares.
    pub lambda: f64,
    /// Set when the least-squares system was singular and a tiny ridge term
    /// was added to pick a solution.
    pub rank_deficient: bool,
    /// Coordinate-descent sweeps run (zero for OLS).
    pub sweeps: usize,
}

impl RegressionFit {
    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept
            + row
                .into_iter()
                .zip(self.coefficients.iter())
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn nonzeros(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("design has {rows} rows but the target has {targets} entries")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("inputs contain non-finite values")]
    NonFinite,
    #[error("need at least one sample")]
    Empty,
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("coordinate descent did not converge after {} sweeps (KKT violation {kkt_violation:e})", fit.sweeps)]
    NotConverged {
        fit: Box<RegressionFit>,
        kkt_violation: f64,
    },
    #[error("target is constant: every correlation is zero, no lambda path exists")]
    DegeneratePath,
    #[error("{samples} samples cannot be split into {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Plain left-to-right dot product. Every inner product in this module goes
/// through here so repeated computations agree bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn check_inputs(x: &nalgebra::DMatrix<f64>, y: &DVector<f64>) -> Result<(), RegressionError> {
    if x.nrows() != y.len() {
        return Err(RegressionError::DimensionMismatch {
            rows: x.nrows(),
            targets: y.len(),
        });
    }
    if y.is_empty() {
        return Err(RegressionError::Empty);
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    Ok(())
}
