//! Canonical data types, CSV ingestion and validation, and z-score
//! standardization.
//!
//! All files are comma-separated UTF-8 with a header row and `.` as the
//! decimal point:
//!
//! | file           | header                                          |
//! |----------------|-------------------------------------------------|
//! | `features.csv` | `program_id,ft1,...,ft56` (manifest order)      |
//! | `timings.csv`  | `program_id,config_id,mean_seconds,repetitions` |
//! | `configs.csv`  | `config_id,flags` (flags space separated)       |
//! | `manifest.csv` | `feature_id,description,category`               |
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! a write followed by a load reproduces every value bit for bit.

mod catalog;
mod features;
mod manifest;
mod standardize;
mod timing;

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use catalog::{Configuration, ConfigurationCatalog, NULL_CONFIG_ID};
pub use features::FeatureMatrix;
pub use manifest::{FeatureCategory, FeatureEntry, FeatureManifest};
pub use standardize::{standardize, ColumnScale, StandardizedMatrix};
pub use timing::{TimingRecord, TimingTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("schema error at column `{column}`: {message}")]
    Schema { column: String, message: String },
    #[error("line {line}, column `{column}`: cannot parse `{value}`: {message}")]
    Parse {
        line: u64,
        column: String,
        value: String,
        message: String,
    },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("unknown {kind} `{id}`")]
    UnknownReference { kind: &'static str, id: String },
    #[error("line {line}, column `{column}`: {message}")]
    InvalidValue { line: u64, column: String, message: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("timings for program `{program_id}` are incomplete; missing configs: {}", missing.join(", "))]
    IncompleteTimings { program_id: String, missing: Vec<String> },
}

impl DataError {
    pub(crate) fn csv(path: &Path, err: csv::Error) -> Self {
        DataError::Csv {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(file))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>, DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub(crate) fn parse_f64(line: u64, column: &str, cell: &str) -> Result<f64, DataError> {
    let value: f64 = cell
        .trim()
        .parse()
        .map_err(|e: std::num::ParseFloatError| DataError::Parse {
            line,
            column: column.to_string(),
            value: cell.to_string(),
            message: e.to_string(),
        })?;
    if !value.is_finite() {
        return Err(DataError::InvalidValue {
            line,
            column: column.to_string(),
            message: format!("value `{cell}` is not finite"),
        });
    }
    Ok(value)
}

/// Everything the pipeline needs about a program corpus.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub manifest: FeatureManifest,
    pub features: FeatureMatrix,
    pub catalog: ConfigurationCatalog,
    pub timings: TimingTable,
}

/// Paths of the files making up a bundle on disk.
#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub features: PathBuf,
    pub timings: PathBuf,
    pub configs: PathBuf,
    pub manifest: Option<PathBuf>,
}

impl BundlePaths {
    /// The conventional layout: `features.csv`, `timings.csv`, `configs.csv`
    /// and, if present, `manifest.csv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let manifest = dir.join("manifest.csv");
        Self {
            features: dir.join("features.csv"),
            timings: dir.join("timings.csv"),
            configs: dir.join("configs.csv"),
            manifest: manifest.exists().then_some(manifest),
        }
    }
}

impl DatasetBundle {
    /// Assemble a bundle from parts, checking that the timing table refers to
    /// exactly the bundle's programs and configurations.
    pub fn new(
        manifest: FeatureManifest,
        features: FeatureMatrix,
        catalog: ConfigurationCatalog,
        timings: TimingTable,
    ) -> Result<Self, DataError> {
        let ids: Vec<&str> = manifest.ids().collect();
        if features
            .feature_ids()
            .iter()
            .map(String::as_str)
            .ne(ids.iter().copied())
        {
            return Err(DataError::Schema {
                column: String::new(),
                message: "feature matrix columns do not match the manifest".into(),
            });
        }
        if timings.program_ids() != features.program_ids() {
            return Err(DataError::Schema {
                column: "program_id".into(),
                message: "timing table programs do not match the feature matrix".into(),
            });
        }
        if timings.config_ids().iter().map(String::as_str).ne(catalog.ids()) {
            return Err(DataError::Schema {
                column: "config_id".into(),
                message: "timing table configurations do not match the catalog".into(),
            });
        }
        Ok(Self {
            manifest,
            features,
            catalog,
            timings,
        })
    }

    pub fn load(paths: &BundlePaths) -> Result<Self, DataError> {
        let manifest = match &paths.manifest {
            Some(p) => FeatureManifest::load(p)?,
            None => FeatureManifest::milepost(),
        };
        let features = FeatureMatrix::load(&paths.features, &manifest)?;
        let catalog = ConfigurationCatalog::load(&paths.configs)?;
        let timings = TimingTable::load(&paths.timings, &features, &catalog)?;
        Self::new(manifest, features, catalog, timings)
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::load(&BundlePaths::in_dir(dir))
    }

    /// Write `features.csv`, `timings.csv` and `configs.csv` (plus
    /// `manifest.csv` when the manifest is not the built-in one).
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        self.features.write(dir.join("features.csv"))?;
        self.timings.write(dir.join("timings.csv"))?;
        self.catalog.write(dir.join("configs.csv"))?;
        if self.manifest != FeatureManifest::milepost() {
            write_manifest(&self.manifest, &dir.join("manifest.csv"))?;
        }
        Ok(())
    }

    pub fn n_programs(&self) -> usize {
        self.features.n_programs()
    }
}

fn write_manifest(manifest: &FeatureManifest, path: &Path) -> Result<(), DataError> {
    let mut w = csv_writer(path)?;
    let err = |e| DataError::csv(path, e);
    w.write_record(["feature_id", "description", "category"]).map_err(err)?;
    for entry in manifest.entries() {
        let category = entry.category.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([entry.id.as_str(), entry.description.as_str(), category.as_str()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}
