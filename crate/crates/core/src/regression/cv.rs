use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::lasso::LassoSolver;
use super::{check_inputs, GramSystem, LassoOptions, RegressionError};
use crate::seed;

/// Assignment of samples to cross-validation folds.
///
/// Sample indices are shuffled with the seed and the shuffled order is cut
/// into contiguous blocks whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    n: usize,
    test: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn new(n: usize, folds: usize, seed: u64) -> Result<Self, RegressionError> {
        if folds < 2 {
            return Err(RegressionError::InvalidArgument(format!(
                "cross-validation needs at least 2 folds, got {folds}"
            )));
        }
        if n < folds {
            return Err(RegressionError::TooFewSamples { samples: n, folds });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed));
        let base = n / folds;
        let extra = n % folds;
        let mut test = Vec::with_capacity(folds);
        let mut start = 0;
        for f in 0..folds {
            let size = base + usize::from(f < extra);
            let mut block = order[start..start + size].to_vec();
            block.sort_unstable();
            test.push(block);
            start += size;
        }
        Ok(Self { n, test })
    }

    pub fn folds(&self) -> usize {
        self.test.len()
    }

    pub fn test_rows(&self, fold: usize) -> &[usize] {
        &self.test[fold]
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        let mut is_test = vec![false; self.n];
        for &i in &self.test[fold] {
            is_test[i] = true;
        }
        (0..self.n).filter(|&i| !is_test[i]).collect()
    }
}

/// The model scored by [`cv_score`].
#[derive(Debug, Clone, PartialEq)]
pub enum CvModel {
    /// Ordinary least squares on the given column subset.
    Ols(Vec<usize>),
    Lasso {
        lambda: f64,
        options: LassoOptions,
    },
}

/// Mean held-out squared error: squared prediction errors summed over every
/// fold's test rows, divided by the number of samples.
pub fn cv_score(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &CvModel,
    folds: usize,
    seed: u64,
) -> Result<f64, RegressionError> {
    match model {
        CvModel::Ols(subset) => {
            if let Some(&bad) = subset.iter().find(|&&j| j >= x.ncols()) {
                return Err(RegressionError::InvalidArgument(format!("column {bad} out of range")));
            }
            Ok(OlsCrossValidator::new(x, y, folds, seed)?.score(subset))
        }
        CvModel::Lasso { lambda, options } => Ok(cv_lasso_path(x, y, &[*lambda], folds, seed, options)?.scores[0]),
    }
}

/// Cross-validated OLS over many column subsets sharing one fold plan.
///
/// Each fold's centered Gram matrix is built once over all columns.
#[derive(Debug, Clone)]
pub struct OlsCrossValidator {
    plan: FoldPlan,
    systems: Vec<GramSystem>,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl OlsCrossValidator {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, folds: usize, seed: u64) -> Result<Self, RegressionError> {
        check_inputs(x, y)?;
        let plan = FoldPlan::new(x.nrows(), folds, seed)?;
        let systems = (0..plan.folds())
            .map(|f| GramSystem::new(x, y, &plan.train_rows(f)))
            .collect();
        Ok(Self {
            plan,
            systems,
            x: x.clone(),
            y: y.clone(),
        })
    }

    pub fn fold_plan(&self) -> &FoldPlan {
        &self.plan
    }

    /// Held-out mean squared error of OLS on `subset` (column indices).
    pub fn score(&self, subset: &[usize]) -> f64 {
        let mut sse = 0.0;
        for (f, system) in self.systems.iter().enumerate() {
            let sol = system.solve(subset);
            for &i in self.plan.test_rows(f) {
                let pred = sol.intercept
                    + subset
                        .iter()
                        .zip(&sol.beta)
                        .map(|(&j, b)| self.x[(i, j)] * b)
                        .sum::<f64>();
                let e = self.y[i] - pred;
                sse += e * e;
            }
        }
        sse / self.y.len() as f64
    }
}

/// Held-out errors along a lambda path.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoCvPath {
    /// Mean held-out squared error per lambda.
    pub scores: Vec<f64>,
    /// Fold fits that hit the sweep budget; their last iterate was scored.
    pub unconverged: usize,
}

/// Cross-validated error for every penalty in `lambdas`, warm-starting each
/// fold's solver along the sequence.
pub fn cv_lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    folds: usize,
    seed: u64,
    options: &LassoOptions,
) -> Result<LassoCvPath, RegressionError> {
    check_inputs(x, y)?;
    let plan = FoldPlan::new(x.nrows(), folds, seed)?;
    let mut sse = vec![0.0; lambdas.len()];
    let mut unconverged = 0;
    for f in 0..plan.folds() {
        let train = plan.train_rows(f);
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let mut start: Vec<f64> = Vec::new();
        for (k, &lambda) in lambdas.iter().enumerate() {
            let solver = LassoSolver::new(&xt, &yt, lambda, *options)?.warm_start(&start);
            let (fit, converged) = solver.run_lenient();
            unconverged += usize::from(!converged);
            start = fit.coefficients.iter().copied().collect();
            if options.penalize_intercept {
                start.push(fit.intercept);
            }
            for &i in plan.test_rows(f) {
                let e = y[i] - fit.predict_row(x.row(i).iter().copied());
                sse[k] += e * e;
            }
        }
    }
    let n = y.len() as f64;
    Ok(LassoCvPath {
        scores: sse.into_iter().map(|s| s / n).collect(),
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::ols_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fold_sizes_differ_by_at_most_one_and_cover_everything() {
        let plan = FoldPlan::new(11, 3, 42).unwrap();
        let sizes: Vec<usize> = (0..3).map(|f| plan.test_rows(f).len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        let mut all: Vec<usize> = (0..3).flat_map(|f| plan.test_rows(f).to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(plan, FoldPlan::new(11, 3, 42).unwrap());
        assert_ne!(plan, FoldPlan::new(11, 3, 43).unwrap());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            FoldPlan::new(2, 3, 0),
            Err(RegressionError::TooFewSamples { samples: 2, folds: 3 })
        ));
    }

    #[test]
    fn perfect_linear_model_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(30, |i, _| 2.0 * x[(i, 1)] - 3.0 * x[(i, 3)] + 1.0);
        let score = cv_score(&x, &y, &CvModel::Ols(vec![1, 3]), 3, 7).unwrap();
        assert!(score < 1e-12, "{score}");
    }

    #[test]
    fn empty_subset_is_training_mean_baseline() {
        let y = DVector::from_vec(vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0]);
        let x = DMatrix::<f64>::zeros(6, 2);
        let plan = FoldPlan::new(6, 3, 9).unwrap();
        let mut expected = 0.0;
        for f in 0..3 {
            let train = plan.train_rows(f);
            let mu = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
            expected += plan.test_rows(f).iter().map(|&i| (y[i] - mu).powi(2)).sum::<f64>();
        }
        let score = cv_score(&x, &y, &CvModel::Ols(vec![]), 3, 9).unwrap();
        assert!((score - expected / 6.0).abs() < 1e-12);
    }

    #[test]
    fn leave_one_out_matches_explicit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(6, |i, _| x[(i, 0)] + 0.5 * x[(i, 1)] + rng.random_range(-0.1..0.1));
        let mut sse = 0.0;
        for held in 0..6 {
            let rows: Vec<usize> = (0..6).filter(|&i| i != held).collect();
            let xt = x.select_rows(&rows);
            let yt = DVector::from_iterator(5, rows.iter().map(|&i| y[i]));
            let fit = ols_fit(&xt, &yt).unwrap();
            let e = y[held] - fit.predict_row(x.row(held).iter().copied());
            sse += e * e;
        }
        let score = cv_score(&x, &y, &CvModel::Ols(vec![0, 1]), 6, 123).unwrap();
        assert!((score - sse / 6.0).abs() < 1e-10, "{score} vs {}", sse / 6.0);
    }

    #[test]
    fn lasso_cv_matches_single_lambda_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(24, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(24, |i, _| x[(i, 0)] - x[(i, 2)] + rng.random_range(-0.2..0.2));
        let options = LassoOptions::default();
        let path = cv_lasso_path(&x, &y, &[0.5, 0.1, 0.01], 3, 4, &options).unwrap();
        let single = cv_score(&x, &y, &CvModel::Lasso { lambda: 0.1, options }, 3, 4).unwrap();
        assert_eq!(path.unconverged, 0);
        assert!((path.scores[1] - single).abs() < 1e-6);
    }
}
