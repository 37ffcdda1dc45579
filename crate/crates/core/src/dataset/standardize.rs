use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, FeatureMatrix};

/// Mean and sample standard deviation of one retained column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub std_dev: f64,
}

/// Z-scored features with zero-variance columns removed.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMatrix {
    pub program_ids: Vec<String>,
    /// Ids of the retained columns, in manifest order.
    pub feature_ids: Vec<String>,
    /// Original column index of each retained column.
    pub source_columns: Vec<usize>,
    pub values: DMatrix<f64>,
    pub params: Vec<ColumnScale>,
    pub dropped_columns: Vec<String>,
}

impl StandardizedMatrix {
    pub fn n_programs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// The raw (unscaled) values of the retained columns.
    pub fn retained_raw(&self, features: &FeatureMatrix) -> DMatrix<f64> {
        features.values().select_columns(&self.source_columns)
    }
}

/// A column counts as constant when its sample standard deviation is below
/// this fraction of its largest magnitude.
const ZERO_VARIANCE_RTOL: f64 = 1e-10;

/// Z-score every column with the sample (n-1) standard deviation. Columns
/// with zero variance are dropped and reported by id.
pub fn standardize(features: &FeatureMatrix) -> Result<StandardizedMatrix, DataError> {
    let n = features.n_programs();
    if n < 2 {
        return Err(DataError::InsufficientData(format!(
            "standardization needs at least 2 programs, got {n}"
        )));
    }
    let raw = features.values();
    let mut source_columns = Vec::new();
    let mut params = Vec::new();
    let mut dropped_columns = Vec::new();
    for (j, col) in raw.column_iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let std_dev = (ss / (n - 1) as f64).sqrt();
        let scale = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if std_dev <= ZERO_VARIANCE_RTOL * scale || std_dev == 0.0 {
            dropped_columns.push(features.feature_ids()[j].clone());
        } else {
            source_columns.push(j);
            params.push(ColumnScale { mean, std_dev });
        }
    }
    let values = DMatrix::from_fn(n, source_columns.len(), |i, k| {
        let s = params[k];
        (raw[(i, source_columns[k])] - s.mean) / s.std_dev
    });
    Ok(StandardizedMatrix {
        program_ids: features.program_ids().to_vec(),
        feature_ids: source_columns
            .iter()
            .map(|&j| features.feature_ids()[j].clone())
            .collect(),
        source_columns,
        values,
        params,
        dropped_columns,
    })
}
