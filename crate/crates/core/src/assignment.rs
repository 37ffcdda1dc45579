//! Compiler configuration assignment by nearest trained neighbour.
//!
//! Both schemes share one core: given training programs, look up each
//! one's best configuration in the timing table, pick features by regressing
//! the training programs' best times on their standardized features, then
//! give every other program the best configuration of its closest training
//! program in the selected-feature space.
//!
//! * **Active**: the training programs are the medoids of a k-means
//!   partition over all features.
//! * **Passive**: the training programs are given.
//!
//! Training programs are always processed in program (row) order, so a
//! passive run on the active medoids reproduces the active plan.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterError, KMeansOptions};
use crate::dataset::{standardize, DataError, DatasetBundle, StandardizedMatrix};
use crate::regression::LassoOptions;
use crate::selection::{self, SelectionError, SelectionMethod, SelectionParams, SelectionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Active,
    Passive,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Active => "active",
            Scheme::Passive => "passive",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(Scheme::Active),
            "passive" => Ok(Scheme::Passive),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignMethod {
    Lasso,
    Sfs,
    Sbs,
    /// No selection: distances use every retained feature.
    AllFeatures,
}

impl AssignMethod {
    pub fn selection(self) -> Option<SelectionMethod> {
        match self {
            AssignMethod::Lasso => Some(SelectionMethod::Lasso),
            AssignMethod::Sfs => Some(SelectionMethod::Sfs),
            AssignMethod::Sbs => Some(SelectionMethod::Sbs),
            AssignMethod::AllFeatures => None,
        }
    }
}

impl fmt::Display for AssignMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.selection() {
            Some(m) => m.fmt(f),
            None => f.write_str("all_features"),
        }
    }
}

impl FromStr for AssignMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "all_features" | "all" => Ok(AssignMethod::AllFeatures),
            other => other
                .parse::<SelectionMethod>()
                .map(|m| match m {
                    SelectionMethod::Lasso => AssignMethod::Lasso,
                    SelectionMethod::Sfs => AssignMethod::Sfs,
                    SelectionMethod::Sbs => AssignMethod::Sbs,
                })
                .map_err(|_| format!("unknown method `{other}`")),
        }
    }
}

/// Feature space used for clustering and neighbour distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// z-scores (sample standard deviation).
    #[default]
    Standardized,
    /// Raw feature values; selection still runs on z-scores.
    Raw,
}

impl FromStr for Scaling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standardized" | "zscore" => Ok(Scaling::Standardized),
            "raw" => Ok(Scaling::Raw),
            other => Err(format!("unknown scaling `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignOptions {
    pub m: usize,
    pub method: AssignMethod,
    pub folds: usize,
    pub seed: u64,
    pub kmeans: KMeansOptions,
    pub scaling: Scaling,
    pub lasso: LassoOptions,
}

impl Default for AssignOptions {
    fn default() -> Self {
        Self {
            m: 10,
            method: AssignMethod::Lasso,
            folds: 3,
            seed: 0,
            kmeans: KMeansOptions::default(),
            scaling: Scaling::Standardized,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AssignError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("feature selection failed: {0}")]
    Selection(#[from] SelectionError),
    #[error("unknown program id `{0}`")]
    UnknownProgram(String),
    #[error("program `{0}` listed twice in the training set")]
    DuplicateTraining(String),
    #[error("the training set is empty")]
    EmptyTraining,
    #[error("K = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRecord {
    pub program_id: String,
    pub best_config_id: String,
    pub best_time_seconds: f64,
}

/// Exhaustive minimum over the catalog; ties go to the earlier configuration.
pub fn optimal_config(bundle: &DatasetBundle, program: usize) -> Result<OptimalRecord, DataError> {
    let timings = &bundle.timings;
    timings.require_complete(program)?;
    let mut best = 0;
    let mut best_time = f64::INFINITY;
    for c in 0..timings.config_ids().len() {
        let t = timings.seconds(program, c).expect("complete row");
        if t < best_time {
            best = c;
            best_time = t;
        }
    }
    Ok(OptimalRecord {
        program_id: timings.program_ids()[program].clone(),
        best_config_id: timings.config_ids()[best].clone(),
        best_time_seconds: best_time,
    })
}

/// Closest training row to `query` over `columns`; ties go to the first
/// training entry. Returns (position in `training`, distance).
pub fn nearest_training(points: &DMatrix<f64>, query: usize, training: &[usize], columns: &[usize]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (pos, &t) in training.iter().enumerate() {
        let d2: f64 = columns
            .iter()
            .map(|&j| (points[(query, j)] - points[(t, j)]).powi(2))
            .sum();
        if d2 < best_d2 {
            best = pos;
            best_d2 = d2;
        }
    }
    (best, best_d2.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub program_id: String,
    pub assigned_config_id: String,
    pub matched_training_id: String,
    pub distance: f64,
}

/// Active-scheme clustering summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Cluster id per program, in program order.
    pub cluster_ids: Vec<usize>,
    pub inertia: f64,
    pub restarts: usize,
    pub winning_restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub scheme: Scheme,
    pub method: AssignMethod,
    pub scaling: Scaling,
    pub m: usize,
    pub folds: usize,
    pub seed: u64,
    pub training_ids: Vec<String>,
    pub optimal_records: Vec<OptimalRecord>,
    /// `None` for `all_features` and for single-program training sets.
    pub selection: Option<SelectionResult>,
    /// Feature ids the neighbour distances were computed over.
    pub distance_features: Vec<String>,
    pub dropped_features: Vec<String>,
    /// Untrained programs in program order.
    pub assignments: Vec<AssignmentRecord>,
    pub clustering: Option<ClusterSummary>,
    /// Diagnostic only: k-means over the selected features with the same K.
    pub repartition: Option<Vec<usize>>,
    /// Some least-squares fit during selection was singular.
    pub rank_deficient: bool,
}

impl AssignmentPlan {
    pub fn k(&self) -> usize {
        self.training_ids.len()
    }

    pub fn optimal_for(&self, training_id: &str) -> Option<&OptimalRecord> {
        self.optimal_records.iter().find(|r| r.program_id == training_id)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("plan serializes");
        std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            message: format!("invalid plan file: {e}"),
        })
    }
}

/// Per-bundle state reused across many plans.
#[derive(Debug, Clone)]
pub struct AssignmentContext<'a> {
    bundle: &'a DatasetBundle,
    standardized: StandardizedMatrix,
    /// Points used for distances (z-scores or raw), retained columns only.
    points: DMatrix<f64>,
    scaling: Scaling,
}

impl<'a> AssignmentContext<'a> {
    pub fn new(bundle: &'a DatasetBundle, scaling: Scaling) -> Result<Self, DataError> {
        let standardized = standardize(&bundle.features)?;
        let points = match scaling {
            Scaling::Standardized => standardized.values.clone(),
            Scaling::Raw => standardized.retained_raw(&bundle.features),
        };
        Ok(Self {
            bundle,
            standardized,
            points,
            scaling,
        })
    }

    pub fn bundle(&self) -> &DatasetBundle {
        self.bundle
    }

    pub fn standardized(&self) -> &StandardizedMatrix {
        &self.standardized
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn n_programs(&self) -> usize {
        self.bundle.n_programs()
    }

    /// Training indices from ids, validated and sorted by program order.
    pub fn training_indices(&self, ids: &[String]) -> Result<Vec<usize>, AssignError> {
        if ids.is_empty() {
            return Err(AssignError::EmptyTraining);
        }
        let mut seen = vec![false; self.n_programs()];
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self
                .bundle
                .features
                .program_index(id)
                .ok_or_else(|| AssignError::UnknownProgram(id.clone()))?;
            if seen[i] {
                return Err(AssignError::DuplicateTraining(id.clone()));
            }
            seen[i] = true;
            out.push(i);
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn run_active(&self, k: usize, options: &AssignOptions) -> Result<AssignmentPlan, AssignError> {
        let n = self.n_programs();
        if k == 0 || k > n {
            return Err(AssignError::InvalidK { k, n });
        }
        let clusters = clustering::kmeans(&self.points, k, options.seed, &options.kmeans)?;
        let mut medoids = clustering::select_medoids(&self.points, &clusters);
        medoids.sort_unstable();
        let summary = ClusterSummary {
            cluster_ids: clusters.assignments.clone(),
            inertia: clusters.inertia,
            restarts: options.kmeans.restarts,
            winning_restart: clusters.restart,
        };
        let mut plan = self.assign(Scheme::Active, &medoids, options)?;
        plan.clustering = Some(summary);
        plan.repartition = self.repartition(&plan, k, options);
        Ok(plan)
    }

    pub fn run_passive(&self, training_ids: &[String], options: &AssignOptions) -> Result<AssignmentPlan, AssignError> {
        let training = self.training_indices(training_ids)?;
        self.assign(Scheme::Passive, &training, options)
    }

    /// Passive run from row indices (any order, no duplicates).
    pub fn run_passive_indices(
        &self,
        training: &[usize],
        options: &AssignOptions,
    ) -> Result<AssignmentPlan, AssignError> {
        if training.is_empty() {
            return Err(AssignError::EmptyTraining);
        }
        let mut training = training.to_vec();
        training.sort_unstable();
        self.assign(Scheme::Passive, &training, options)
    }

    fn repartition(&self, plan: &AssignmentPlan, k: usize, options: &AssignOptions) -> Option<Vec<usize>> {
        let columns: Vec<usize> = plan
            .distance_features
            .iter()
            .filter_map(|id| self.standardized.feature_ids.iter().position(|f| f == id))
            .collect();
        let sub = self.points.select_columns(&columns);
        clustering::kmeans(&sub, k, options.seed, &options.kmeans)
            .ok()
            .map(|c| c.assignments)
    }

    fn select(
        &self,
        training: &[usize],
        optimal: &[OptimalRecord],
        options: &AssignOptions,
    ) -> Result<(Option<SelectionResult>, Vec<usize>), AssignError> {
        let all: Vec<usize> = (0..self.standardized.n_features()).collect();
        let Some(method) = options.method.selection() else {
            return Ok((None, all));
        };
        if training.len() < 2 {
            return Ok((None, all));
        }
        let x = self.standardized.values.select_rows(training);
        let y = DVector::from_iterator(optimal.len(), optimal.iter().map(|r| r.best_time_seconds));
        let params = SelectionParams {
            m: options.m,
            folds: options.folds.min(training.len()),
            seed: options.seed,
            lasso: options.lasso,
            ..SelectionParams::default()
        };
        let result = selection::select(method, &x, &y, &self.standardized.feature_ids, &params)?;
        let columns = result.columns();
        Ok((Some(result), columns))
    }

    fn assign(
        &self,
        scheme: Scheme,
        training: &[usize],
        options: &AssignOptions,
    ) -> Result<AssignmentPlan, AssignError> {
        let ids = self.bundle.features.program_ids();
        let optimal: Vec<OptimalRecord> = training
            .par_iter()
            .map(|&t| optimal_config(self.bundle, t))
            .collect::<Result<_, _>>()?;
        let (selection, columns) = self.select(training, &optimal, options)?;

        let mut is_training = vec![false; ids.len()];
        for &t in training {
            is_training[t] = true;
        }
        let untrained: Vec<usize> = (0..ids.len()).filter(|&i| !is_training[i]).collect();
        let assignments = untrained
            .par_iter()
            .map(|&i| {
                let (pos, distance) = nearest_training(&self.points, i, training, &columns);
                AssignmentRecord {
                    program_id: ids[i].clone(),
                    assigned_config_id: optimal[pos].best_config_id.clone(),
                    matched_training_id: ids[training[pos]].clone(),
                    distance,
                }
            })
            .collect();

        let rank_deficient = selection.as_ref().is_some_and(|s| s.provenance.rank_deficient);
        Ok(AssignmentPlan {
            scheme,
            method: options.method,
            scaling: self.scaling,
            m: options.m,
            folds: options.folds,
            seed: options.seed,
            training_ids: training.iter().map(|&t| ids[t].clone()).collect(),
            optimal_records: optimal,
            selection,
            distance_features: columns
                .iter()
                .map(|&j| self.standardized.feature_ids[j].clone())
                .collect(),
            dropped_features: self.standardized.dropped_columns.clone(),
            assignments,
            clustering: None,
            repartition: None,
            rank_deficient,
        })
    }
}

/// One-shot active run.
pub fn run_active(bundle: &DatasetBundle, k: usize, options: &AssignOptions) -> Result<AssignmentPlan, AssignError> {
    AssignmentContext::new(bundle, options.scaling)?.run_active(k, options)
}

/// One-shot passive run.
pub fn run_passive(
    bundle: &DatasetBundle,
    training_ids: &[String],
    options: &AssignOptions,
) -> Result<AssignmentPlan, AssignError> {
    AssignmentContext::new(bundle, options.scaling)?.run_passive(training_ids, options)
}
