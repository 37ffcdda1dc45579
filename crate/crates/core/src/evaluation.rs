//! Scoring plans against recorded timings.
//!
//! Totals are summed in program order so repeated evaluations agree bit for
//! bit. `t_auto_all` charges training programs at their own optimum;
//! `t_auto_untrained` covers only the programs that received an assigned
//! configuration. The exhaustive tuning cost of a training set is the sum of
//! its recorded times over every configuration, i.e. one timed run per
//! (program, configuration) cell.

use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{
    optimal_config, AssignError, AssignMethod, AssignOptions, AssignmentContext, AssignmentPlan, Scheme,
};
use crate::dataset::{csv_writer, DataError, DatasetBundle};
use crate::seed::{self, stream};

pub const COST_MODEL: &str = "one timed run per (training program, configuration) cell";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("plan names unknown program `{0}`")]
    UnknownProgram(String),
    #[error("plan names unknown configuration `{0}`")]
    UnknownConfig(String),
    #[error("plan does not match the bundle: {0}")]
    PlanMismatch(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Trained,
    Assigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramOutcome {
    pub program_id: String,
    pub role: Role,
    pub config_id: String,
    pub seconds: f64,
    pub optimal_seconds: f64,
    pub null_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scheme: Scheme,
    pub method: AssignMethod,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub t_auto_all: f64,
    pub t_auto_untrained: f64,
    pub t_null: f64,
    pub t_minimal: f64,
    pub t_exhaustive_k: f64,
    pub cost_model: String,
    pub programs: Vec<ProgramOutcome>,
}

impl EvaluationReport {
    pub fn time_reduction(&self, nexec: u64) -> f64 {
        time_reduction(self.t_null, self.t_auto_all, self.t_exhaustive_k, nexec)
    }

    pub fn break_even_nexec(&self) -> Option<u64> {
        break_even_nexec(self.t_null, self.t_auto_all, self.t_exhaustive_k)
    }
}

/// `nexec * (t_null - t_auto) - t_exhaustive`.
pub fn time_reduction(t_null: f64, t_auto: f64, t_exhaustive: f64, nexec: u64) -> f64 {
    nexec as f64 * (t_null - t_auto) - t_exhaustive
}

/// Smallest `nexec >= 1` with a positive time reduction, or `None` when
/// assignment saves nothing per run.
pub fn break_even_nexec(t_null: f64, t_auto: f64, t_exhaustive: f64) -> Option<u64> {
    let saving = t_null - t_auto;
    if saving <= 0.0 {
        return None;
    }
    let tr = |n: u64| time_reduction(t_null, t_auto, t_exhaustive, n);
    let mut n = ((t_exhaustive / saving).floor() as u64).saturating_add(1).max(1);
    // guard against rounding in the ratio
    while tr(n) <= 0.0 {
        n += 1;
    }
    while n > 1 && tr(n - 1) > 0.0 {
        n -= 1;
    }
    Some(n)
}

pub fn evaluate_plan(plan: &AssignmentPlan, bundle: &DatasetBundle) -> Result<EvaluationReport, EvalError> {
    let timings = &bundle.timings;
    let n = bundle.n_programs();
    let null = bundle.catalog.null_index();

    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut trained = vec![false; n];
    for id in &plan.training_ids {
        let p = timings
            .program_idx(id)
            .ok_or_else(|| EvalError::UnknownProgram(id.clone()))?;
        trained[p] = true;
    }
    for a in &plan.assignments {
        let p = timings
            .program_idx(&a.program_id)
            .ok_or_else(|| EvalError::UnknownProgram(a.program_id.clone()))?;
        let c = timings
            .config_idx(&a.assigned_config_id)
            .ok_or_else(|| EvalError::UnknownConfig(a.assigned_config_id.clone()))?;
        if trained[p] || assigned[p].is_some() {
            return Err(EvalError::PlanMismatch(format!(
                "program `{}` appears twice",
                a.program_id
            )));
        }
        assigned[p] = Some(c);
    }

    let mut programs = Vec::with_capacity(n);
    let (mut t_auto_all, mut t_auto_untrained, mut t_null, mut t_minimal, mut t_exhaustive) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in 0..n {
        let optimal = optimal_config(bundle, p)?;
        let null_seconds = timings.seconds(p, null).expect("complete row");
        let (role, config_id, seconds) = if trained[p] {
            t_exhaustive += (0..timings.config_ids().len())
                .map(|c| timings.seconds(p, c).expect("complete row"))
                .sum::<f64>();
            (Role::Trained, optimal.best_config_id.clone(), optimal.best_time_seconds)
        } else if let Some(c) = assigned[p] {
            let s = timings.seconds(p, c).expect("complete row");
            t_auto_untrained += s;
            (Role::Assigned, timings.config_ids()[c].clone(), s)
        } else {
            return Err(EvalError::PlanMismatch(format!(
                "program `{}` is neither trained nor assigned",
                timings.program_ids()[p]
            )));
        };
        t_auto_all += seconds;
        t_null += null_seconds;
        t_minimal += optimal.best_time_seconds;
        programs.push(ProgramOutcome {
            program_id: timings.program_ids()[p].clone(),
            role,
            config_id,
            seconds,
            optimal_seconds: optimal.best_time_seconds,
            null_seconds,
        });
    }
    Ok(EvaluationReport {
        scheme: plan.scheme,
        method: plan.method,
        k: plan.k(),
        m: plan.m,
        seed: plan.seed,
        t_auto_all,
        t_auto_untrained,
        t_null,
        t_minimal,
        t_exhaustive_k: t_exhaustive,
        cost_model: COST_MODEL.to_string(),
        programs,
    })
}

/// Mean and sample standard deviation; the mean of identical values is
/// that value exactly.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let first = values[0];
    let n = values.len() as f64;
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub scheme: Scheme,
    pub assign: AssignOptions,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub trials: usize,
    pub mean_t_auto: f64,
    pub std_t_auto: f64,
    pub mean_t_auto_untrained: f64,
    pub std_t_auto_untrained: f64,
    pub mean_t_exhaustive: f64,
}

impl SweepPoint {
    pub fn std_error(&self) -> f64 {
        self.std_t_auto / (self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub t_null: f64,
    pub t_minimal: f64,
    pub points: Vec<SweepPoint>,
}

/// Seed of trial `t` at training-set size `k`.
pub fn trial_seed(seed: u64, k: usize, trial: usize) -> u64 {
    seed::derive(
        seed::derive(seed, stream::SWEEP_TRIAL, k as u64),
        stream::PASSIVE_DRAW,
        trial as u64,
    )
}

/// Training rows drawn uniformly without replacement for one passive trial.
pub fn passive_draw(n: usize, k: usize, trial_seed: u64) -> Vec<usize> {
    let mut rows = index::sample(&mut seed::rng(trial_seed), n, k).into_vec();
    rows.sort_unstable();
    rows
}

struct TrialOutcome {
    t_auto_all: f64,
    t_auto_untrained: f64,
    t_exhaustive: f64,
}

pub fn sweep_k(ctx: &AssignmentContext<'_>, options: &SweepOptions) -> Result<SweepResult, EvalError> {
    let n = ctx.n_programs();
    if options.trials == 0 {
        return Err(EvalError::InvalidSweep("trials must be at least 1".into()));
    }
    if let Some(&k) = options.k_values.iter().find(|&&k| k == 0 || k > n) {
        return Err(EvalError::InvalidSweep(format!("K = {k} is outside 1..={n}")));
    }
    let bundle = ctx.bundle();
    let null = bundle.catalog.null_index();
    let mut t_null = 0.0;
    let mut t_minimal = 0.0;
    for p in 0..n {
        t_minimal += optimal_config(bundle, p)?.best_time_seconds;
        t_null += bundle.timings.seconds(p, null).expect("complete row");
    }

    let mut points = Vec::with_capacity(options.k_values.len());
    for &k in &options.k_values {
        let outcomes: Vec<TrialOutcome> = (0..options.trials)
            .into_par_iter()
            .map(|t| {
                let s = trial_seed(options.seed, k, t);
                let assign = AssignOptions {
                    seed: s,
                    ..options.assign
                };
                let plan = match options.scheme {
                    Scheme::Active => ctx.run_active(k, &assign)?,
                    Scheme::Passive => ctx.run_passive_indices(&passive_draw(n, k, s), &assign)?,
                };
                let report = evaluate_plan(&plan, bundle)?;
                Ok(TrialOutcome {
                    t_auto_all: report.t_auto_all,
                    t_auto_untrained: report.t_auto_untrained,
                    t_exhaustive: report.t_exhaustive_k,
                })
            })
            .collect::<Result<_, EvalError>>()?;
        let all: Vec<f64> = outcomes.iter().map(|o| o.t_auto_all).collect();
        let untrained: Vec<f64> = outcomes.iter().map(|o| o.t_auto_untrained).collect();
        let exhaustive: Vec<f64> = outcomes.iter().map(|o| o.t_exhaustive).collect();
        let (mean_t_auto, std_t_auto) = mean_std(&all);
        let (mean_t_auto_untrained, std_t_auto_untrained) = mean_std(&untrained);
        points.push(SweepPoint {
            k,
            trials: options.trials,
            mean_t_auto,
            std_t_auto,
            mean_t_auto_untrained,
            std_t_auto_untrained,
            mean_t_exhaustive: mean_std(&exhaustive).0,
        });
    }
    Ok(SweepResult {
        t_null,
        t_minimal,
        points,
    })
}

/// Time reduction over a `(K, nexec)` lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrGrid {
    pub k_values: Vec<usize>,
    pub nexec_values: Vec<u64>,
    /// `tr[i][j]` for `k_values[i]`, `nexec_values[j]`.
    pub tr: Vec<Vec<f64>>,
    pub trials: usize,
    pub t_null: f64,
    pub mean_t_auto: Vec<f64>,
    pub mean_t_exhaustive: Vec<f64>,
}

impl TrGrid {
    pub fn from_sweep(sweep: &SweepResult, nexec_values: &[u64]) -> Self {
        let tr = sweep
            .points
            .iter()
            .map(|p| {
                nexec_values
                    .iter()
                    .map(|&nx| time_reduction(sweep.t_null, p.mean_t_auto, p.mean_t_exhaustive, nx))
                    .collect()
            })
            .collect();
        Self {
            k_values: sweep.points.iter().map(|p| p.k).collect(),
            nexec_values: nexec_values.to_vec(),
            tr,
            trials: sweep.points.first().map_or(0, |p| p.trials),
            t_null: sweep.t_null,
            mean_t_auto: sweep.points.iter().map(|p| p.mean_t_auto).collect(),
            mean_t_exhaustive: sweep.points.iter().map(|p| p.mean_t_exhaustive).collect(),
        }
    }

    /// Smallest `nexec` with positive TR, per K.
    pub fn break_even(&self) -> Vec<Option<u64>> {
        self.mean_t_auto
            .iter()
            .zip(&self.mean_t_exhaustive)
            .map(|(&auto, &exh)| break_even_nexec(self.t_null, auto, exh))
            .collect()
    }

    /// `K,Nexec,TR`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        w.write_record(["K", "Nexec", "TR"])
            .map_err(|e| DataError::csv(path, e))?;
        for (i, &k) in self.k_values.iter().enumerate() {
            for (j, &nx) in self.nexec_values.iter().enumerate() {
                w.write_record([k.to_string(), nx.to_string(), self.tr[i][j].to_string()])
                    .map_err(|e| DataError::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }
}

pub fn tr_grid(
    ctx: &AssignmentContext<'_>,
    options: &SweepOptions,
    nexec_values: &[u64],
) -> Result<(SweepResult, TrGrid), EvalError> {
    if nexec_values.contains(&0) {
        return Err(EvalError::InvalidSweep("Nexec values must be at least 1".into()));
    }
    let sweep = sweep_k(ctx, options)?;
    let grid = TrGrid::from_sweep(&sweep, nexec_values);
    Ok((sweep, grid))
}

/// `K,mean_T_auto,std_T_auto,trials`; `untrained` picks the untrained-only
/// totals instead of the all-program ones.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult, untrained: bool) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["K", "mean_T_auto", "std_T_auto", "trials"])
        .map_err(|e| DataError::csv(path, e))?;
    for p in &sweep.points {
        let (mean, std) = if untrained {
            (p.mean_t_auto_untrained, p.std_t_auto_untrained)
        } else {
            (p.mean_t_auto, p.std_t_auto)
        };
        w.write_record([p.k.to_string(), mean.to_string(), std.to_string(), p.trials.to_string()])
            .map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{run_passive, AssignmentRecord, Scaling};
    use crate::dataset::{
        Configuration, ConfigurationCatalog, FeatureEntry, FeatureManifest, FeatureMatrix, TimingRecord, TimingTable,
    };
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn bundle(times: &[Vec<f64>], configs: &[&str]) -> DatasetBundle {
        let manifest = FeatureManifest::new(vec![FeatureEntry {
            id: "ft1".into(),
            description: String::new(),
            category: None,
        }])
        .unwrap();
        let n = times.len();
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let values = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let fm = FeatureMatrix::new(ids, vec!["ft1".into()], values).unwrap();
        let catalog = ConfigurationCatalog::new(
            configs
                .iter()
                .map(|id| Configuration {
                    id: id.to_string(),
                    flags: vec![],
                })
                .collect(),
        )
        .unwrap();
        let mut timings = TimingTable::for_bundle(&fm, &catalog);
        for (p, row) in times.iter().enumerate() {
            for (c, &t) in row.iter().enumerate() {
                timings
                    .insert(
                        p,
                        c,
                        TimingRecord {
                            mean_seconds: t,
                            repetitions: 1,
                        },
                    )
                    .unwrap();
            }
        }
        DatasetBundle::new(manifest, fm, catalog, timings).unwrap()
    }

    fn hand_plan() -> AssignmentPlan {
        AssignmentPlan {
            scheme: Scheme::Passive,
            method: AssignMethod::AllFeatures,
            scaling: Scaling::Standardized,
            m: 10,
            folds: 3,
            seed: 0,
            training_ids: vec!["p0".into()],
            optimal_records: vec![],
            selection: None,
            distance_features: vec!["ft1".into()],
            dropped_features: vec![],
            assignments: vec![
                AssignmentRecord {
                    program_id: "p1".into(),
                    assigned_config_id: "fast".into(),
                    matched_training_id: "p0".into(),
                    distance: 1.0,
                },
                AssignmentRecord {
                    program_id: "p2".into(),
                    assigned_config_id: "fast".into(),
                    matched_training_id: "p0".into(),
                    distance: 2.0,
                },
            ],
            clustering: None,
            repartition: None,
            rank_deficient: false,
        }
    }

    #[test]
    fn hand_summed_totals() {
        // null, fast
        let b = bundle(&[vec![4.0, 3.0], vec![2.0, 2.5], vec![6.0, 1.0]], &["null", "fast"]);
        let r = evaluate_plan(&hand_plan(), &b).unwrap();
        assert_eq!(r.t_null, 12.0);
        assert_eq!(r.t_minimal, 3.0 + 2.0 + 1.0);
        assert_eq!(r.t_auto_all, 3.0 + 2.5 + 1.0);
        assert_eq!(r.t_auto_untrained, 3.5);
        assert_eq!(r.t_exhaustive_k, 7.0);
        assert_eq!(r.time_reduction(10), 10.0 * (12.0 - 6.5) - 7.0);
        assert!(r.t_minimal <= r.t_auto_all);
    }

    #[test]
    fn k_equal_n_is_minimal() {
        let b = bundle(&[vec![4.0, 3.0], vec![2.0, 2.5], vec![6.0, 1.0]], &["null", "fast"]);
        let ids: Vec<String> = (0..3).map(|i| format!("p{i}")).collect();
        let opts = AssignOptions {
            method: AssignMethod::AllFeatures,
            ..AssignOptions::default()
        };
        let plan = run_passive(&b, &ids, &opts).unwrap();
        let r = evaluate_plan(&plan, &b).unwrap();
        assert_eq!(r.t_auto_all, r.t_minimal);
        assert_eq!(r.t_auto_untrained, 0.0);
    }

    #[test]
    fn null_only_catalog_gives_null_total() {
        let b = bundle(&[vec![4.0], vec![2.0], vec![6.0]], &["null"]);
        let opts = AssignOptions {
            method: AssignMethod::AllFeatures,
            ..AssignOptions::default()
        };
        let plan = run_passive(&b, &["p1".into()], &opts).unwrap();
        let r = evaluate_plan(&plan, &b).unwrap();
        assert_eq!(r.t_auto_all, r.t_null);
        assert_eq!(r.time_reduction(5), -r.t_exhaustive_k);
    }

    #[test]
    fn plan_mismatches_are_reported() {
        let b = bundle(&[vec![4.0, 3.0], vec![2.0, 2.5], vec![6.0, 1.0]], &["null", "fast"]);
        let mut plan = hand_plan();
        plan.assignments.pop();
        assert!(matches!(evaluate_plan(&plan, &b), Err(EvalError::PlanMismatch(_))));
        let mut plan = hand_plan();
        plan.assignments[0].assigned_config_id = "slow".into();
        assert!(matches!(evaluate_plan(&plan, &b), Err(EvalError::UnknownConfig(_))));
        let mut plan = hand_plan();
        plan.training_ids.push("zz".into());
        assert!(matches!(evaluate_plan(&plan, &b), Err(EvalError::UnknownProgram(_))));
    }

    #[test]
    fn break_even_examples() {
        assert_eq!(break_even_nexec(10.0, 10.0, 5.0), None);
        assert_eq!(break_even_nexec(10.0, 8.0, 0.0), Some(1));
        // exact ratio: TR is zero at 5, positive from 6
        assert_eq!(break_even_nexec(10.0, 8.0, 10.0), Some(6));
        assert_eq!(break_even_nexec(10.0, 7.0, 10.0), Some(4));
    }

    #[test]
    fn mean_std_of_constant_values_is_exact() {
        let v = vec![0.1 + 0.2; 7];
        assert_eq!(mean_std(&v), (0.1 + 0.2, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn passive_draws_are_distinct_and_seeded() {
        let a = passive_draw(30, 10, 7);
        assert_eq!(a.len(), 10);
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d, a);
        assert_eq!(a, passive_draw(30, 10, 7));
        assert_ne!(trial_seed(0, 5, 1), trial_seed(0, 6, 1));
    }

    #[test]
    fn sweep_at_k_n_has_no_spread() {
        let times: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![3.0 + i as f64, 1.0 + 0.1 * i as f64, 2.0])
            .collect();
        let b = bundle(&times, &["null", "a", "b"]);
        let ctx = AssignmentContext::new(&b, Scaling::Standardized).unwrap();
        for scheme in [Scheme::Active, Scheme::Passive] {
            let opts = SweepOptions {
                scheme,
                assign: AssignOptions {
                    method: AssignMethod::AllFeatures,
                    ..AssignOptions::default()
                },
                k_values: vec![2, 6],
                trials: 8,
                seed: 3,
            };
            let sweep = sweep_k(&ctx, &opts).unwrap();
            let last = &sweep.points[1];
            assert_eq!(last.std_t_auto, 0.0);
            assert_eq!(last.mean_t_auto, sweep.t_minimal);
            assert_eq!(sweep_k(&ctx, &opts).unwrap(), sweep);
        }
    }

    #[test]
    fn grid_csv_has_every_cell() {
        let times: Vec<Vec<f64>> = (0..5).map(|i| vec![3.0 + i as f64, 1.0, 2.0]).collect();
        let b = bundle(&times, &["null", "a", "b"]);
        let ctx = AssignmentContext::new(&b, Scaling::Standardized).unwrap();
        let opts = SweepOptions {
            scheme: Scheme::Passive,
            assign: AssignOptions {
                method: AssignMethod::AllFeatures,
                ..AssignOptions::default()
            },
            k_values: vec![1, 3, 5],
            trials: 4,
            seed: 0,
        };
        let (_, grid) = tr_grid(&ctx, &opts, &[1, 10, 100]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trgrid.csv");
        grid.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().next(), Some("K,Nexec,TR"));
        assert_eq!(text.lines().count(), 1 + 9);
        assert!(tr_grid(&ctx, &opts, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn tr_affine_in_nexec(t_null in 1.0f64..1e3, frac in 0.0f64..1.5, exh in 0.0f64..1e4, n1 in 1u64..500, dn in 1u64..500) {
            let t_auto = t_null * frac;
            let n2 = n1 + dn;
            let slope = (time_reduction(t_null, t_auto, exh, n2) - time_reduction(t_null, t_auto, exh, n1)) / dn as f64;
            prop_assert!((slope - (t_null - t_auto)).abs() <= 1e-9 * t_null.max(1.0) * (n2 as f64));
        }

        #[test]
        fn break_even_is_first_positive(t_null in 1.0f64..1e3, frac in 0.0f64..1.0, exh in 0.0f64..1e4) {
            let t_auto = t_null * frac;
            if let Some(n) = break_even_nexec(t_null, t_auto, exh) {
                prop_assert!(time_reduction(t_null, t_auto, exh, n) > 0.0);
                prop_assert!(n == 1 || time_reduction(t_null, t_auto, exh, n - 1) <= 0.0);
            }
        }
    }
}
