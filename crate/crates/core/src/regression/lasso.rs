use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_inputs, dot, mean, RegressionError, RegressionFit};

/// Options for [`lasso_fit`].
///
/// The objective is
///
/// ```text
/// (1/n) ||y - X b - b0||^2 + lambda * ((1 - l2_mix) ||b||_1 + (l2_mix / 2) ||b||_2^2)
/// ```
///
/// With `penalize_intercept` the intercept is treated as the coefficient of
/// an all-ones column and penalized like every other coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub penalize_intercept: bool,
    /// Elastic-net L2 share in `[0, 1)`; zero is pure LASSO.
    pub l2_mix: f64,
    pub max_sweeps: usize,
    /// Stop when the largest coordinate change in a sweep is below
    /// `tol * (1 + max |b_j|)` and the KKT certificate holds.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            penalize_intercept: false,
            l2_mix: 0.0,
            max_sweeps: 10_000,
            tol: 1e-7,
        }
    }
}

impl LassoOptions {
    fn validate(&self) -> Result<(), RegressionError> {
        if !(0.0..1.0).contains(&self.l2_mix) {
            return Err(RegressionError::InvalidArgument(format!(
                "l2_mix must lie in [0, 1), got {}",
                self.l2_mix
            )));
        }
        Ok(())
    }

    /// Absolute tolerance on the KKT residual.
    pub const KKT_TOLERANCE: f64 = 5e-7;
}

/// Columns the solver actually iterates over: centered features (free
/// intercept) or raw features plus a ones column (penalized intercept).
struct WorkingDesign {
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
    x_means: Vec<f64>,
    y_mean: f64,
}

fn working_design(x: &DMatrix<f64>, y: &DVector<f64>, penalize_intercept: bool) -> WorkingDesign {
    let n = x.nrows();
    if penalize_intercept {
        let mut columns: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
        columns.push(vec![1.0; n]);
        WorkingDesign {
            columns,
            target: y.iter().copied().collect(),
            x_means: vec![0.0; x.ncols()],
            y_mean: 0.0,
        }
    } else {
        let ys: Vec<f64> = y.iter().copied().collect();
        let y_mean = mean(&ys);
        let mut x_means = Vec::with_capacity(x.ncols());
        let columns = x
            .column_iter()
            .map(|c| {
                let col: Vec<f64> = c.iter().copied().collect();
                let mu = mean(&col);
                x_means.push(mu);
                col.into_iter().map(|v| v - mu).collect()
            })
            .collect();
        WorkingDesign {
            columns,
            target: ys.into_iter().map(|v| v - y_mean).collect(),
            x_means,
            y_mean,
        }
    }
}

/// Smallest penalty at which every penalized coefficient is zero.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>, options: &LassoOptions) -> Result<f64, RegressionError> {
    check_inputs(x, y)?;
    options.validate()?;
    let n = x.nrows() as f64;
    let design = working_design(x, y, options.penalize_intercept);
    let max = design
        .columns
        .iter()
        .map(|c| (2.0 * (dot(c, &design.target) / n)).abs())
        .fold(0.0_f64, f64::max);
    Ok(max / (1.0 - options.l2_mix))
}

/// Geometric grid of penalties from `lambda_max` down to
/// `lambda_max * ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
}

impl LambdaPath {
    pub fn lambda_max(&self) -> f64 {
        self.lambdas[0]
    }
}

pub fn lambda_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    count: usize,
    ratio: f64,
) -> Result<LambdaPath, RegressionError> {
    lambda_path_with(x, y, count, ratio, &LassoOptions::default())
}

pub(crate) fn lambda_path_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    count: usize,
    ratio: f64,
    options: &LassoOptions,
) -> Result<LambdaPath, RegressionError> {
    if count < 2 {
        return Err(RegressionError::InvalidArgument(format!(
            "a lambda path needs at least 2 values, got {count}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(RegressionError::InvalidArgument(format!(
            "path ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let top = lambda_max(x, y, options)?;
    if top <= 0.0 || !top.is_finite() {
        return Err(RegressionError::DegeneratePath);
    }
    let last = count - 1;
    let lambdas = (0..count)
        .map(|k| {
            if k == last {
                top * ratio
            } else {
                top * ratio.powf(k as f64 / last as f64)
            }
        })
        .collect();
    Ok(LambdaPath { lambdas })
}

fn soft_threshold(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value - threshold
    } else if value < -threshold {
        value + threshold
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for one penalty value.
///
/// Exposed so callers can step sweep by sweep (the objective never
/// increases across a sweep); [`lasso_fit`] runs it to convergence.
pub struct LassoSolver {
    n: usize,
    n_features: usize,
    design: WorkingDesign,
    /// `x_j' x_j / n` per working column.
    curvature: Vec<f64>,
    beta: Vec<f64>,
    residual: Vec<f64>,
    lambda: f64,
    options: LassoOptions,
    sweeps: usize,
}

impl LassoSolver {
    pub fn new(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        lambda: f64,
        options: LassoOptions,
    ) -> Result<Self, RegressionError> {
        check_inputs(x, y)?;
        options.validate()?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(RegressionError::InvalidLambda(lambda));
        }
        let n = x.nrows();
        let design = working_design(x, y, options.penalize_intercept);
        let curvature = design.columns.iter().map(|c| dot(c, c) / n as f64).collect();
        let beta = vec![0.0; design.columns.len()];
        let residual = design.target.clone();
        Ok(Self {
            n,
            n_features: x.ncols(),
            design,
            curvature,
            beta,
            residual,
            lambda,
            options,
            sweeps: 0,
        })
    }

    /// Start from `start` instead of zero. `start` holds the feature
    /// coefficients, followed by the intercept when it is penalized.
    pub fn warm_start(mut self, start: &[f64]) -> Self {
        for (b, s) in self.beta.iter_mut().zip(start) {
            *b = *s;
        }
        self.refresh_residual();
        self
    }

    fn refresh_residual(&mut self) {
        self.residual.clone_from(&self.design.target);
        for (col, &b) in self.design.columns.iter().zip(&self.beta) {
            if b != 0.0 {
                for (r, x) in self.residual.iter_mut().zip(col) {
                    *r -= x * b;
                }
            }
        }
    }

    /// One pass over all coordinates; returns the largest absolute change.
    pub fn sweep(&mut self) -> f64 {
        let n = self.n as f64;
        let l1 = self.lambda * (1.0 - self.options.l2_mix) / 2.0;
        let l2 = self.lambda * self.options.l2_mix / 2.0;
        let mut max_change = 0.0_f64;
        for j in 0..self.beta.len() {
            let c = self.curvature[j];
            if c == 0.0 {
                continue;
            }
            let old = self.beta[j];
            let col = &self.design.columns[j];
            let rho = dot(col, &self.residual) / n + c * old;
            let new = soft_threshold(rho, l1) / (c + l2);
            if new != old {
                let delta = new - old;
                for (r, x) in self.residual.iter_mut().zip(col) {
                    *r -= x * delta;
                }
                self.beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        self.sweeps += 1;
        max_change
    }

    pub fn objective(&self) -> f64 {
        let n = self.n as f64;
        let fit = dot(&self.residual, &self.residual) / n;
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = self.beta.iter().map(|b| b * b).sum();
        let a = self.options.l2_mix;
        fit + self.lambda * ((1.0 - a) * l1 + 0.5 * a * l2)
    }

    /// Largest violation of the optimality conditions at the current
    /// iterate. Recomputes the residual from scratch first.
    pub fn kkt_violation(&mut self) -> f64 {
        self.refresh_residual();
        let n = self.n as f64;
        let a = self.options.l2_mix;
        let l1 = self.lambda * (1.0 - a);
        let mut worst = 0.0_f64;
        for (col, &b) in self.design.columns.iter().zip(&self.beta) {
            let grad = 2.0 * dot(col, &self.residual) / n - self.lambda * a * b;
            let v = if b == 0.0 {
                (grad.abs() - l1).max(0.0)
            } else {
                (grad - l1 * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn fit(&self) -> RegressionFit {
        let m = self.n_features;
        let coefficients = DVector::from_iterator(m, self.beta[..m].iter().copied());
        let intercept = if self.options.penalize_intercept {
            self.beta[m]
        } else {
            self.design.y_mean
                - self
                    .design
                    .x_means
                    .iter()
                    .zip(&self.beta)
                    .map(|(mu, b)| mu * b)
                    .sum::<f64>()
        };
        RegressionFit {
            coefficients,
            intercept,
            residual_sum_squares: dot(&self.residual, &self.residual),
            lambda: self.lambda,
            rank_deficient: false,
            sweeps: self.sweeps,
        }
    }

    /// Working coefficients (features, then the intercept if penalized),
    /// suitable for [`LassoSolver::warm_start`].
    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn run(mut self) -> Result<RegressionFit, RegressionError> {
        let kkt_tol = LassoOptions::KKT_TOLERANCE;
        while self.sweeps < self.options.max_sweeps {
            let change = self.sweep();
            let scale = 1.0 + self.beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
            if change < self.options.tol * scale && self.kkt_violation() <= kkt_tol {
                return Ok(self.fit());
            }
        }
        let kkt_violation = self.kkt_violation();
        if kkt_violation <= kkt_tol {
            return Ok(self.fit());
        }
        Err(RegressionError::NotConverged {
            fit: Box::new(self.fit()),
            kkt_violation,
        })
    }

    /// Like [`run`](Self::run) but hands back the last iterate when the sweep
    /// budget runs out; the flag tells whether it converged.
    pub fn run_lenient(self) -> (RegressionFit, bool) {
        match self.run() {
            Ok(fit) => (fit, true),
            Err(RegressionError::NotConverged { fit, .. }) => (*fit, false),
            Err(other) => unreachable!("a constructed solver only fails to converge: {other}"),
        }
    }
}

/// L1-penalized least squares at a single `lambda`, from a zero start.
pub fn lasso_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    options: &LassoOptions,
) -> Result<RegressionFit, RegressionError> {
    LassoSolver::new(x, y, lambda, *options)?.run()
}

/// Like [`lasso_fit`] but warm-started from `start` (see
/// [`LassoSolver::warm_start`]).
pub fn lasso_fit_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    options: &LassoOptions,
    start: &[f64],
) -> Result<RegressionFit, RegressionError> {
    LassoSolver::new(x, y, lambda, *options)?.warm_start(start).run()
}
