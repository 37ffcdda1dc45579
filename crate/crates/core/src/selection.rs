//! Ranking the `M` most influential features for a regression target.
//!
//! Three strategies are provided:
//!
//! * **LASSO**: fit an L1 path, pick the cross-validated best penalty among
//!   those whose fit keeps at least `M` nonzero coefficients, and rank by
//!   coefficient magnitude.
//! * **SFS**: greedy forward selection; each step adds the feature whose
//!   inclusion gives the lowest cross-validated OLS error.
//! * **SBS**: greedy backward elimination; each step drops the feature whose
//!   removal gives the lowest cross-validated OLS error. Survivors are
//!   ranked by the magnitude of their coefficient in the final OLS fit.
//!
//! Exact ties are always broken toward the lower column index. Columns that
//! are constant over the given rows carry no information and are never
//! candidates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{csv_writer, DataError, FeatureManifest};
use crate::regression::{self, cv_lasso_path, ols_fit, LassoOptions, LassoSolver, OlsCrossValidator, RegressionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Lasso,
    Sfs,
    Sbs,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Lasso => "lasso",
            SelectionMethod::Sfs => "sfs",
            SelectionMethod::Sbs => "sbs",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(SelectionMethod::Lasso),
            "sfs" => Ok(SelectionMethod::Sfs),
            "sbs" => Ok(SelectionMethod::Sbs),
            other => Err(format!("unknown selection method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature_id: String,
    /// Column of the design matrix the feature was read from.
    pub column: usize,
    pub rank: usize,
    /// `|coefficient|` for LASSO and SBS, held-out MSE at the time of
    /// addition for SFS.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProvenance {
    /// Penalty the LASSO ranking was read at.
    pub lambda: Option<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Number of non-constant columns that were eligible.
    pub candidates: usize,
    /// Some least-squares fit along the way needed the ridge fallback.
    pub rank_deficient: bool,
    /// LASSO only: path fits (cross-validation folds included) that ran out
    /// of sweeps; their last iterate was used.
    #[serde(default)]
    pub unconverged_fits: usize,
    /// SBS only: eliminated feature ids, first removal first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removal_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    /// Requested number of features.
    pub m: usize,
    pub ranked_features: Vec<RankedFeature>,
    pub provenance: SelectionProvenance,
}

impl SelectionResult {
    pub fn feature_ids(&self) -> Vec<&str> {
        self.ranked_features.iter().map(|f| f.feature_id.as_str()).collect()
    }

    pub fn columns(&self) -> Vec<usize> {
        self.ranked_features.iter().map(|f| f.column).collect()
    }

    /// `method,feature_id,rank,score,category`; the category column is
    /// filled from the manifest when one is given.
    pub fn write_csv(&self, path: impl AsRef<Path>, manifest: Option<&FeatureManifest>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        w.write_record(["method", "feature_id", "rank", "score", "category"])
            .map_err(|e| DataError::csv(path, e))?;
        for f in &self.ranked_features {
            let category = manifest
                .and_then(|m| m.category_of(&f.feature_id))
                .map(|c| c.to_string())
                .unwrap_or_default();
            w.write_record([
                self.method.to_string(),
                f.feature_id.clone(),
                f.rank.to_string(),
                f.score.to_string(),
                category,
            ])
            .map_err(|e| DataError::csv(path, e))?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub m: usize,
    pub folds: usize,
    pub seed: u64,
    pub lasso: LassoOptions,
    pub path_len: usize,
    /// Smallest penalty as a fraction of the largest; `None` picks `1e-3`
    /// with more rows than columns and `1e-2` otherwise.
    pub path_ratio: Option<f64>,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            m: 10,
            folds: 3,
            seed: 0,
            lasso: LassoOptions::default(),
            path_len: 100,
            path_ratio: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no signal: the target is constant over the training programs")]
    NoSignal,
    #[error("no feature varies over the training programs")]
    NoCandidates,
    #[error("the number of features to select must be at least 1")]
    InvalidCount,
    #[error("{ids} feature ids given for a design with {columns} columns")]
    IdMismatch { ids: usize, columns: usize },
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Dispatch to the chosen strategy.
pub fn select(
    method: SelectionMethod,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_ids: &[String],
    params: &SelectionParams,
) -> Result<SelectionResult, SelectionError> {
    match method {
        SelectionMethod::Lasso => select_lasso(x, y, feature_ids, params),
        SelectionMethod::Sfs => select_sfs(x, y, feature_ids, params),
        SelectionMethod::Sbs => select_sbs(x, y, feature_ids, params),
    }
}

fn is_constant(values: impl Iterator<Item = f64>) -> bool {
    let mut iter = values;
    match iter.next() {
        None => true,
        Some(first) => iter.all(|v| v == first),
    }
}

struct Prepared {
    candidates: Vec<usize>,
    m: usize,
}

fn prepare(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_ids: &[String],
    params: &SelectionParams,
) -> Result<Prepared, SelectionError> {
    if feature_ids.len() != x.ncols() {
        return Err(SelectionError::IdMismatch {
            ids: feature_ids.len(),
            columns: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(RegressionError::DimensionMismatch {
            rows: x.nrows(),
            targets: y.len(),
        }
        .into());
    }
    if params.m == 0 {
        return Err(SelectionError::InvalidCount);
    }
    if is_constant(y.iter().copied()) {
        return Err(SelectionError::NoSignal);
    }
    let candidates: Vec<usize> = (0..x.ncols())
        .filter(|&j| !is_constant(x.column(j).iter().copied()))
        .collect();
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let m = params.m.min(candidates.len());
    Ok(Prepared { candidates, m })
}

/// Indices sorted by descending `key`, ties by ascending index.
fn rank_by_magnitude(keys: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut sorted = keys.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted
}

/// Position of the smallest score; the first one wins exact ties.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    best
}

pub fn select_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_ids: &[String],
    params: &SelectionParams,
) -> Result<SelectionResult, SelectionError> {
    let Prepared { candidates, m } = prepare(x, y, feature_ids, params)?;
    let xc = x.select_columns(&candidates);
    let ratio = params
        .path_ratio
        .unwrap_or(if xc.nrows() > xc.ncols() { 1e-3 } else { 1e-2 });
    let path = regression::lambda_path_with(&xc, y, params.path_len, ratio, &params.lasso).map_err(|e| match e {
        RegressionError::DegeneratePath => SelectionError::NoSignal,
        other => other.into(),
    })?;
    let cv = cv_lasso_path(&xc, y, &path.lambdas, params.folds, params.seed, &params.lasso)?;

    let mut unconverged = cv.unconverged;
    let mut fits = Vec::with_capacity(path.lambdas.len());
    let mut start: Vec<f64> = Vec::new();
    for &lambda in &path.lambdas {
        let (fit, converged) = LassoSolver::new(&xc, y, lambda, params.lasso)?
            .warm_start(&start)
            .run_lenient();
        unconverged += usize::from(!converged);
        start = fit.coefficients.iter().copied().collect();
        if params.lasso.penalize_intercept {
            start.push(fit.intercept);
        }
        fits.push(fit);
    }

    let eligible: Vec<usize> = (0..fits.len()).filter(|&k| fits[k].nonzeros() >= m).collect();
    let chosen = if eligible.is_empty() {
        fits.len() - 1
    } else {
        let scores: Vec<f64> = eligible.iter().map(|&k| cv.scores[k]).collect();
        eligible[argmin(&scores)]
    };
    let fit = &fits[chosen];
    let magnitudes: Vec<(usize, f64)> = candidates
        .iter()
        .zip(fit.coefficients.iter())
        .map(|(&j, b)| (j, b.abs()))
        .collect();
    let ranked_features = rank_by_magnitude(&magnitudes)
        .into_iter()
        .take(m)
        .enumerate()
        .map(|(r, (j, score))| RankedFeature {
            feature_id: feature_ids[j].clone(),
            column: j,
            rank: r + 1,
            score,
        })
        .collect();
    Ok(SelectionResult {
        method: SelectionMethod::Lasso,
        m: params.m,
        ranked_features,
        provenance: SelectionProvenance {
            lambda: Some(fit.lambda),
            folds: params.folds,
            seed: params.seed,
            candidates: candidates.len(),
            rank_deficient: false,
            unconverged_fits: unconverged,
            removal_order: Vec::new(),
        },
    })
}

pub fn select_sfs(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_ids: &[String],
    params: &SelectionParams,
) -> Result<SelectionResult, SelectionError> {
    let Prepared { candidates, m } = prepare(x, y, feature_ids, params)?;
    let cv = OlsCrossValidator::new(x, y, params.folds, params.seed)?;
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut remaining = candidates.clone();
    let mut ranked_features = Vec::with_capacity(m);
    while selected.len() < m {
        let scores: Vec<f64> = remaining
            .par_iter()
            .map(|&c| {
                let mut subset = selected.clone();
                subset.push(c);
                cv.score(&subset)
            })
            .collect();
        let pick = argmin(&scores);
        let column = remaining.remove(pick);
        selected.push(column);
        ranked_features.push(RankedFeature {
            feature_id: feature_ids[column].clone(),
            column,
            rank: selected.len(),
            score: scores[pick],
        });
    }
    let rank_deficient = selected.len() + 1 >= cv_min_train_rows(&cv);
    Ok(SelectionResult {
        method: SelectionMethod::Sfs,
        m: params.m,
        ranked_features,
        provenance: SelectionProvenance {
            lambda: None,
            folds: params.folds,
            seed: params.seed,
            candidates: candidates.len(),
            rank_deficient,
            unconverged_fits: 0,
            removal_order: Vec::new(),
        },
    })
}

fn cv_min_train_rows(cv: &OlsCrossValidator) -> usize {
    let plan = cv.fold_plan();
    (0..plan.folds()).map(|f| plan.train_rows(f).len()).min().unwrap_or(0)
}

pub fn select_sbs(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_ids: &[String],
    params: &SelectionParams,
) -> Result<SelectionResult, SelectionError> {
    let Prepared { candidates, m } = prepare(x, y, feature_ids, params)?;
    let cv = OlsCrossValidator::new(x, y, params.folds, params.seed)?;
    let mut rank_deficient = candidates.len() + 1 >= cv_min_train_rows(&cv);
    let mut current = candidates.clone();
    let mut removal_order = Vec::new();
    while current.len() > m {
        let scores: Vec<f64> = (0..current.len())
            .into_par_iter()
            .map(|skip| {
                let subset: Vec<usize> = current
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &c)| c)
                    .collect();
                cv.score(&subset)
            })
            .collect();
        let drop = current.remove(argmin(&scores));
        removal_order.push(feature_ids[drop].clone());
    }

    let final_fit = ols_fit(&x.select_columns(&current), y)?;
    rank_deficient |= final_fit.rank_deficient;
    let magnitudes: Vec<(usize, f64)> = current
        .iter()
        .zip(final_fit.coefficients.iter())
        .map(|(&j, b)| (j, b.abs()))
        .collect();
    let ranked_features = rank_by_magnitude(&magnitudes)
        .into_iter()
        .enumerate()
        .map(|(r, (j, score))| RankedFeature {
            feature_id: feature_ids[j].clone(),
            column: j,
            rank: r + 1,
            score,
        })
        .collect();
    Ok(SelectionResult {
        method: SelectionMethod::Sbs,
        m: params.m,
        ranked_features,
        provenance: SelectionProvenance {
            lambda: None,
            folds: params.folds,
            seed: params.seed,
            candidates: candidates.len(),
            rank_deficient,
            unconverged_fits: 0,
            removal_order,
        },
    })
}
