//! Feature selection over static program features and nearest-neighbour
//! compiler configuration assignment.
//!
//! The pipeline has three stages:
//!
//! 1. [`dataset`] loads a feature matrix, a configuration catalog and a
//!    timing table, validates cross references and z-scores the features.
//! 2. [`selection`] ranks the `M` features that best explain per-program
//!    optimal execution time (LASSO, forward or backward selection), built on
//!    the solvers in [`regression`].
//! 3. [`assignment`] picks `K` training programs (k-means medoids from
//!    [`clustering`], or a caller-supplied set), tunes them exhaustively via
//!    the timing oracle, and hands every other program the optimal
//!    configuration of its nearest training program. [`evaluation`] scores
//!    the result.
//!
//! [`measure`] produces timing tables from real compilers and [`synthetic`]
//! generates bundles with a known ground truth.

pub mod assignment;
pub mod clustering;
pub mod dataset;
pub mod evaluation;
pub mod measure;
pub mod regression;
pub mod seed;
pub mod selection;
pub mod synthetic;

pub use assignment::{AssignMethod, AssignOptions, AssignmentPlan, Scheme};
pub use dataset::{
    ConfigurationCatalog, DatasetBundle, FeatureManifest, FeatureMatrix, StandardizedMatrix, TimingTable,
};
pub use evaluation::EvaluationReport;
pub use selection::{SelectionMethod, SelectionResult};
