use nalgebra::{DMatrix, DVector};

use super::{check_inputs, dot, mean, RegressionError, RegressionFit};

/// Relative pivot size below which a Cholesky factor is treated as singular.
const PIVOT_RTOL: f64 = 1e-12;
/// Ridge added to a singular system, relative to the mean diagonal entry.
const RIDGE_SCALE: f64 = 1e-10;

/// Centered normal equations over a fixed set of rows and all columns.
///
/// Solving for any column subset reads the corresponding block, so one
/// system serves every candidate subset of a greedy search.
#[derive(Debug, Clone)]
pub struct GramSystem {
    rows: usize,
    means: Vec<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OlsSolution {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub rank_deficient: bool,
}

impl GramSystem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> Self {
        let m = x.ncols();
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let y_mean = mean(&ys);
        let yc: Vec<f64> = ys.iter().map(|v| v - y_mean).collect();
        let mut means = Vec::with_capacity(m);
        let mut centered = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = rows.iter().map(|&i| x[(i, j)]).collect();
            let mu = mean(&col);
            means.push(mu);
            centered.push(col.into_iter().map(|v| v - mu).collect::<Vec<_>>());
        }
        let mut gram = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let g = dot(&centered[a], &centered[b]);
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let xty = DVector::from_iterator(m, centered.iter().map(|c| dot(c, &yc)));
        Self {
            rows: rows.len(),
            means,
            y_mean,
            gram,
            xty,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub(crate) fn solve(&self, subset: &[usize]) -> OlsSolution {
        let k = subset.len();
        if k == 0 {
            return OlsSolution {
                beta: Vec::new(),
                intercept: self.y_mean,
                rank_deficient: false,
            };
        }
        let g = DMatrix::from_fn(k, k, |a, b| self.gram[(subset[a], subset[b])]);
        let rhs = DVector::from_iterator(k, subset.iter().map(|&j| self.xty[j]));

        // centered data has rank at most rows - 1
        let mut rank_deficient = k >= self.rows;
        let mut beta = None;
        if !rank_deficient {
            let max_diag = g.diagonal().max();
            match g.clone().cholesky() {
                Some(chol) => {
                    let min_pivot = chol.l_dirty().diagonal().map(|d| d * d).min();
                    if max_diag > 0.0 && min_pivot > PIVOT_RTOL * max_diag {
                        beta = Some(chol.solve(&rhs));
                    } else {
                        rank_deficient = true;
                    }
                }
                None => rank_deficient = true,
            }
        }
        let beta = match beta {
            Some(b) => b,
            None => ridge_solve(&g, &rhs),
        };
        let intercept = self.y_mean
            - subset
                .iter()
                .zip(beta.iter())
                .map(|(&j, b)| self.means[j] * b)
                .sum::<f64>();
        OlsSolution {
            beta: beta.iter().copied().collect(),
            intercept,
            rank_deficient,
        }
    }
}

fn ridge_solve(g: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let k = g.nrows();
    let trace = g.trace();
    let mut ridge = if trace > 0.0 {
        RIDGE_SCALE * trace / k as f64
    } else {
        RIDGE_SCALE
    };
    loop {
        let shifted = g + DMatrix::identity(k, k) * ridge;
        if let Some(chol) = shifted.cholesky() {
            return chol.solve(rhs);
        }
        ridge *= 10.0;
    }
}

/// Ordinary least squares with intercept.
///
/// A singular or underdetermined design gets a ridge term of `1e-10` times
/// the mean diagonal of the centered Gram matrix, and the fit is flagged
/// `rank_deficient`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionFit, RegressionError> {
    check_inputs(x, y)?;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let all: Vec<usize> = (0..x.ncols()).collect();
    let sol = GramSystem::new(x, y, &rows).solve(&all);
    let coefficients = DVector::from_vec(sol.beta);
    let residuals = y - x * &coefficients - DVector::from_element(y.len(), sol.intercept);
    Ok(RegressionFit {
        residual_sum_squares: residuals.norm_squared(),
        coefficients,
        intercept: sol.intercept,
        lambda: 0.0,
        rank_deficient: sol.rank_deficient,
        sweeps: 0,
    })
}
