//! Seeded synthetic bundles with a known ground truth.
//!
//! Every program gets a latent vector `z` (standard normal, or cluster
//! centre plus normal spread). Raw feature values are a positive affine map
//! of `z`, so their z-scores are the z-scores of `z` itself. The optimal run
//! time is linear in a hidden subset of features plus Gaussian noise.
//!
//! Each non-null configuration carries a profile over the true features; a
//! program runs fastest under the configuration whose profile is closest to
//! the program's own true-feature values, and slows down with the squared
//! profile mismatch. Programs that agree on the true features therefore
//! share good configurations, while the remaining features are irrelevant.
//! The null configuration is 30 to 50 percent slower than the optimum.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    Configuration, ConfigurationCatalog, DataError, DatasetBundle, FeatureEntry, FeatureManifest, FeatureMatrix,
    TimingRecord, TimingTable, NULL_CONFIG_ID,
};
use crate::evaluation::mean_std;
use crate::seed::{self, stream};

const OPT_LEVELS: [&str; 3] = ["-O1", "-O2", "-O3"];
const BINARY_FLAGS: [&str; 6] = [
    "-funroll-loops",
    "-finline-functions",
    "-fomit-frame-pointer",
    "-ftree-vectorize",
    "-fpeel-loops",
    "-fschedule-insns2",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_programs: usize,
    pub n_features: usize,
    /// Catalog size including the null configuration; at most 192.
    pub n_configs: usize,
    pub n_true: usize,
    /// Noise standard deviation relative to the standard deviation of the
    /// noiseless optimal times.
    pub noise_fraction: f64,
    /// Number of program populations; `None` draws every program from one
    /// standard normal.
    pub clusters: Option<usize>,
    /// Spread of programs around their population centre.
    pub cluster_spread: f64,
    /// Slowdown per unit of squared profile mismatch, relative to the optimum.
    pub sensitivity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_programs: 30,
            n_features: 56,
            n_configs: 192,
            n_true: 10,
            noise_fraction: 0.05,
            clusters: None,
            cluster_spread: 0.3,
            sensitivity: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub bundle: DatasetBundle,
    /// Ids of the features the optimal time depends on.
    pub true_features: Vec<String>,
    /// Coefficient of each true feature's latent value.
    pub coefficients: Vec<f64>,
    /// Population of each program, when clustered.
    pub populations: Option<Vec<usize>>,
}

/// The 192-entry flag catalog: three optimisation levels times six on/off
/// flags, with `-O1` and no flags as the null configuration.
pub fn flag_catalog(size: usize) -> Result<ConfigurationCatalog, DataError> {
    let full = OPT_LEVELS.len() << BINARY_FLAGS.len();
    if size == 0 || size > full {
        return Err(DataError::InsufficientData(format!(
            "catalog size must be in 1..={full}, got {size}"
        )));
    }
    let mut entries = Vec::with_capacity(size);
    for code in 0..size {
        let level = code >> BINARY_FLAGS.len();
        let mask = code & ((1 << BINARY_FLAGS.len()) - 1);
        let id = if code == 0 {
            NULL_CONFIG_ID.to_string()
        } else {
            format!("c{code:03}")
        };
        let mut flags = vec![OPT_LEVELS[level].to_string()];
        flags.extend(
            BINARY_FLAGS
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, f)| f.to_string()),
        );
        entries.push(Configuration { id, flags });
    }
    ConfigurationCatalog::new(entries)
}

fn manifest_for(p: usize) -> Result<FeatureManifest, DataError> {
    if p == 56 {
        return Ok(FeatureManifest::milepost());
    }
    FeatureManifest::new(
        (1..=p)
            .map(|j| FeatureEntry {
                id: format!("ft{j}"),
                description: String::new(),
                category: None,
            })
            .collect(),
    )
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticBundle, DataError> {
    let (n, p) = (spec.n_programs, spec.n_features);
    if n < 2 || p == 0 || spec.n_true == 0 || spec.n_true > p {
        return Err(DataError::InsufficientData(format!(
            "need at least 2 programs and 1 <= true features <= {p}"
        )));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, stream::SYNTHETIC, 0));
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let (latent, populations) = match spec.clusters {
        None => (DMatrix::from_fn(n, p, |_, _| normal(&mut rng)), None),
        Some(g) => {
            let g = g.clamp(1, n);
            let centres = DMatrix::from_fn(g, p, |_, _| normal(&mut rng));
            let labels: Vec<usize> = (0..n).map(|i| i % g).collect();
            let z = DMatrix::from_fn(n, p, |i, j| {
                centres[(labels[i], j)] + spec.cluster_spread * normal(&mut rng)
            });
            (z, Some(labels))
        }
    };

    let mut true_cols = index::sample(&mut rng, p, spec.n_true).into_vec();
    true_cols.sort_unstable();
    let coefficients: Vec<f64> = (0..spec.n_true)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.random_range(0.5..1.5)
        })
        .collect();

    let signal: Vec<f64> = (0..n)
        .map(|i| {
            true_cols
                .iter()
                .zip(&coefficients)
                .map(|(&j, b)| b * latent[(i, j)])
                .sum()
        })
        .collect();
    let (_, signal_sd) = mean_std(&signal);
    let noisy: Vec<f64> = signal
        .iter()
        .map(|s| s + spec.noise_fraction * signal_sd * normal(&mut rng))
        .collect();
    let lowest = noisy.iter().cloned().fold(f64::INFINITY, f64::min);
    let floor = 1.0 + signal_sd;
    let optimal: Vec<f64> = noisy.iter().map(|v| v - lowest + floor).collect();

    // raw counts: positive affine image of the latent values
    let scales: Vec<f64> = (0..p).map(|_| 10f64.powf(rng.random_range(0.0..3.0))).collect();
    let values = DMatrix::from_fn(n, p, |i, j| {
        let lo = latent.column(j).min();
        scales[j] * (latent[(i, j)] - lo + 1.0)
    });

    let manifest = manifest_for(p)?;
    let program_ids: Vec<String> = (1..=n).map(|i| format!("prog{i:03}")).collect();
    let features = FeatureMatrix::new(program_ids, manifest.ids().map(String::from).collect(), values)?;
    let catalog = flag_catalog(spec.n_configs)?;
    let null = catalog.null_index();

    let profiles = DMatrix::from_fn(catalog.len(), spec.n_true, |_, _| normal(&mut rng));
    let mut timings = TimingTable::for_bundle(&features, &catalog);
    for i in 0..n {
        let mismatch: Vec<f64> = (0..catalog.len())
            .map(|c| {
                true_cols
                    .iter()
                    .enumerate()
                    .map(|(t, &j)| (latent[(i, j)] - profiles[(c, t)]).powi(2))
                    .sum()
            })
            .collect();
        let best = (0..catalog.len())
            .filter(|&c| c != null || catalog.len() == 1)
            .map(|c| mismatch[c])
            .fold(f64::INFINITY, f64::min);
        let null_factor = 1.3 + 0.2 * rng.random::<f64>();
        for (c, gap) in mismatch.iter().map(|m| m - best).enumerate() {
            let factor = if c == null && catalog.len() > 1 {
                null_factor
            } else {
                1.0 + spec.sensitivity * gap
            };
            timings.insert(
                i,
                c,
                TimingRecord {
                    mean_seconds: optimal[i] * factor,
                    repetitions: 3,
                },
            )?;
        }
    }
    let true_features = true_cols.iter().map(|&j| manifest.entries()[j].id.clone()).collect();
    Ok(SyntheticBundle {
        bundle: DatasetBundle::new(manifest, features, catalog, timings)?,
        true_features,
        coefficients,
        populations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::optimal_config;

    #[test]
    fn default_shape() {
        let s = generate(&SyntheticSpec::default()).unwrap();
        let b = &s.bundle;
        assert_eq!(b.n_programs(), 30);
        assert_eq!(b.features.n_features(), 56);
        assert_eq!(b.catalog.len(), 192);
        assert_eq!(b.timings.len(), 30 * 192);
        assert_eq!(s.true_features.len(), 10);
        assert_eq!(b.catalog.get(0).flags, vec!["-O1"]);
        assert_eq!(b.catalog.get(191).flags.len(), 7);
    }

    #[test]
    fn null_is_never_optimal_and_is_slower() {
        let s = generate(&SyntheticSpec {
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let b = &s.bundle;
        for p in 0..b.n_programs() {
            let best = optimal_config(b, p).unwrap();
            assert_ne!(best.best_config_id, "null");
            let null = b.timings.seconds(p, b.catalog.null_index()).unwrap();
            assert!(null >= 1.3 * best.best_time_seconds * (1.0 - 1e-12));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SyntheticSpec {
            seed: 9,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let b = generate(&SyntheticSpec {
            seed: 9,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let c = generate(&SyntheticSpec {
            seed: 10,
            ..SyntheticSpec::default()
        })
        .unwrap();
        assert_eq!(a.bundle.features.values(), b.bundle.features.values());
        assert_eq!(a.true_features, b.true_features);
        assert_ne!(a.bundle.features.values(), c.bundle.features.values());
    }

    #[test]
    fn clustered_populations_are_labelled() {
        let s = generate(&SyntheticSpec {
            clusters: Some(5),
            ..SyntheticSpec::default()
        })
        .unwrap();
        let pops = s.populations.unwrap();
        assert_eq!(pops.len(), 30);
        assert_eq!(*pops.iter().max().unwrap(), 4);
    }

    #[test]
    fn small_catalog() {
        let c = flag_catalog(3).unwrap();
        assert_eq!(c.ids().collect::<Vec<_>>(), vec!["null", "c001", "c002"]);
        assert!(flag_catalog(193).is_err());
    }
}
