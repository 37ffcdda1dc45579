//! K-means partitioning of programs and medoid selection.
//!
//! Seeding is k-means++; each restart draws its own stream from
//! `seed::derive(seed, KMEANS_RESTART, r)` and restarts run in parallel.
//! The restart with the lowest inertia wins, ties going to the lower restart
//! index. A cluster that empties during Lloyd iterations is reseeded with the
//! point farthest from its current centroid.

use std::cmp::Ordering;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{csv_writer, DataError};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {n} programs")]
    InvalidK { k: usize, n: usize },
    #[error("cannot form {k} clusters: only {distinct} distinct feature rows ({duplicates} duplicate rows)")]
    TooFewDistinct {
        k: usize,
        distinct: usize,
        duplicates: usize,
    },
    #[error("feature matrix contains non-finite values")]
    NonFinite,
    #[error("at least one restart is required")]
    NoRestarts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster id of every row, in `0..k`.
    pub assignments: Vec<usize>,
    /// `k x m` centroids.
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances of rows to their centroid.
    pub inertia: f64,
    pub seed: u64,
    /// Restart that produced this result.
    pub restart: usize,
    pub iterations_run: usize,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Row indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == c)
            .collect()
    }
}

fn sq_dist_rows(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|d| (x[(i, d)] - c[(j, d)]).powi(2)).sum()
}

/// Euclidean distance between rows `a` and `b` of `x`.
pub fn row_distance(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    sq_dist_rows(x, a, x, b).sqrt()
}

/// Inertia of an arbitrary assignment against the given centroids.
pub fn inertia_of(x: &DMatrix<f64>, assignments: &[usize], centroids: &DMatrix<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist_rows(x, i, centroids, c))
        .sum()
}

fn distinct_rows(x: &DMatrix<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = (0..x.nrows())
        .map(|i| x.row(i).iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, options: &KMeansOptions) -> Result<Clustering, ClusterError> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    if options.restarts == 0 {
        return Err(ClusterError::NoRestarts);
    }
    let distinct = distinct_rows(x);
    if k > distinct {
        return Err(ClusterError::TooFewDistinct {
            k,
            distinct,
            duplicates: n - distinct,
        });
    }
    let runs: Vec<Clustering> = (0..options.restarts)
        .into_par_iter()
        .map(|r| {
            let mut c = lloyd(
                x,
                k,
                seed::derive(seed, stream::KMEANS_RESTART, r as u64),
                options.max_iterations,
            );
            c.seed = seed;
            c.restart = r;
            c
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, c| if c.inertia < best.inertia { c } else { best })
        .expect("at least one restart");
    Ok(best)
}

fn plus_plus_init(x: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| row_distance(x, i, chosen[0]).powi(2)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < d {
                break;
            }
            target -= d;
        }
        // k never exceeds the distinct row count, so some row has d > 0
        let next = pick.expect("a row away from every chosen center");
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(row_distance(x, i, next).powi(2));
        }
    }
    x.select_rows(&chosen)
}

fn nearest(x: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist_rows(x, i, centroids, 0);
    for c in 1..centroids.nrows() {
        let d = sq_dist_rows(x, i, centroids, c);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn recompute_centroids(x: &DMatrix<f64>, assignments: &[usize], k: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::zeros(k, x.ncols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for d in 0..x.ncols() {
            sums[(c, d)] += x[(i, d)];
        }
    }
    for c in 0..k {
        for d in 0..x.ncols() {
            sums[(c, d)] /= counts[c] as f64;
        }
    }
    sums
}

/// Move the farthest point (from its own centroid) of a cluster with more
/// than one member into each empty cluster.
fn repair_empty(x: &DMatrix<f64>, assignments: &mut [usize], centroids: &mut DMatrix<f64>) {
    let k = centroids.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignments.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &c) in assignments.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            let d = sq_dist_rows(x, i, centroids, c);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let i = far.expect("k <= n leaves a cluster with two members");
        assignments[i] = empty;
        for d in 0..x.ncols() {
            centroids[(empty, d)] = x[(i, d)];
        }
    }
}

fn lloyd(x: &DMatrix<f64>, k: usize, restart_seed: u64, max_iterations: usize) -> Clustering {
    let mut rng = seed::rng(restart_seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let n = x.nrows();
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iterations {
        let mut next: Vec<usize> = (0..n).map(|i| nearest(x, i, &centroids)).collect();
        repair_empty(x, &mut next, &mut centroids);
        iterations += 1;
        let changed = next != assignments;
        assignments = next;
        centroids = recompute_centroids(x, &assignments, k);
        history.push(inertia_of(x, &assignments, &centroids));
        if !changed {
            break;
        }
    }
    Clustering {
        inertia: *history.last().expect("at least one iteration"),
        assignments,
        centroids,
        seed: restart_seed,
        restart: 0,
        iterations_run: iterations,
        inertia_history: history,
    }
}

/// Per cluster, the member with the least summed Euclidean distance to the
/// other members. Ties go to the lowest row index.
pub fn select_medoids(x: &DMatrix<f64>, clustering: &Clustering) -> Vec<usize> {
    (0..clustering.k())
        .map(|c| {
            let members = clustering.members(c);
            medoid_of(x, &members)
        })
        .collect()
}

/// Medoid of the given rows; the result does not depend on their order.
pub fn medoid_of(x: &DMatrix<f64>, members: &[usize]) -> usize {
    let mut members = members.to_vec();
    members.sort_unstable();
    let members = members.as_slice();
    let mut best = members[0];
    let mut best_sum = f64::INFINITY;
    for &a in members {
        let sum: f64 = members.iter().map(|&b| row_distance(x, a, b)).sum();
        match sum.partial_cmp(&best_sum) {
            Some(Ordering::Less) => {
                best = a;
                best_sum = sum;
            }
            Some(Ordering::Equal) if a < best => best = a,
            _ => {}
        }
    }
    best
}

/// `program_id,cluster_id,is_medoid`
pub fn write_report(
    path: impl AsRef<Path>,
    program_ids: &[String],
    clustering: &Clustering,
    medoids: &[usize],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["program_id", "cluster_id", "is_medoid"])
        .map_err(|e| DataError::csv(path, e))?;
    for (i, id) in program_ids.iter().enumerate() {
        let c = clustering.assignments[i];
        w.write_record([id.as_str(), &c.to_string(), &medoids.contains(&i).to_string()])
            .map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}
