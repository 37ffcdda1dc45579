use std::fs;
use std::path::Path;

use anyhow::anyhow;
use feast_core::assignment::{optimal_config, AssignError, AssignOptions, AssignmentContext};
use feast_core::clustering::{self, ClusterError, KMeansOptions};
use feast_core::dataset::{standardize, BundlePaths, DataError, DatasetBundle};
use feast_core::evaluation::{self, evaluate_plan, tr_grid, EvalError, SweepOptions};
use feast_core::measure::{build_timing_table, MeasureError, MeasurePlan, SystemRunner};
use feast_core::selection::{self, SelectionError, SelectionParams};
use feast_core::synthetic::{self, SyntheticSpec};
use feast_core::{AssignmentPlan, ConfigurationCatalog, EvaluationReport, Scheme};
use nalgebra::DVector;
use serde::Serialize;

use crate::{
    AssignArgs, ClusterArgs, Command, DataArgs, EvaluateArgs, Failure, MeasureArgs, SelectArgs, SweepArgs, SynthArgs,
};

type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn selection_failure(e: SelectionError) -> Failure {
    match e {
        SelectionError::InvalidCount | SelectionError::NoCandidates | SelectionError::NoSignal => usage(e),
        other => runtime(other),
    }
}

fn assign_failure(e: AssignError) -> Failure {
    match e {
        AssignError::Selection(s) => selection_failure(s),
        AssignError::Cluster(c) => cluster_failure(c),
        AssignError::Data(_)
        | AssignError::UnknownProgram(_)
        | AssignError::DuplicateTraining(_)
        | AssignError::EmptyTraining
        | AssignError::InvalidK { .. } => usage(e),
    }
}

fn cluster_failure(e: ClusterError) -> Failure {
    match e {
        ClusterError::InvalidK { .. } | ClusterError::TooFewDistinct { .. } | ClusterError::NonFinite => usage(e),
        other => runtime(other),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Assign(a) => assign_failure(a),
        other => usage(other),
    }
}

#[derive(Serialize)]
struct RunLog<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    invocation: &'a Command,
}

fn prepare_out(dir: &Path, command: &Command) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| runtime(anyhow!("cannot create {}: {e}", dir.display())))?;
    let log = RunLog {
        tool: "feast",
        version: env!("CARGO_PKG_VERSION"),
        invocation: command,
    };
    write_json(&dir.join("run_config.json"), &log)
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(anyhow!("{}: {e}", path.display())))
}

fn load_bundle(data: &DataArgs) -> Result<DatasetBundle, Failure> {
    let mut paths = match &data.data {
        Some(dir) => BundlePaths::in_dir(dir),
        None => match (&data.features, &data.timings, &data.configs) {
            (Some(f), Some(t), Some(c)) => BundlePaths {
                features: f.clone(),
                timings: t.clone(),
                configs: c.clone(),
                manifest: None,
            },
            _ => {
                return Err(usage(anyhow!(
                    "give --data DIR or all of --features, --timings and --configs"
                )))
            }
        },
    };
    if let Some(f) = &data.features {
        paths.features = f.clone();
    }
    if let Some(t) = &data.timings {
        paths.timings = t.clone();
    }
    if let Some(c) = &data.configs {
        paths.configs = c.clone();
    }
    if data.manifest.is_some() {
        paths.manifest = data.manifest.clone();
    }
    DatasetBundle::load(&paths).map_err(usage)
}

pub(crate) fn run(command: &Command) -> Outcome {
    match command {
        Command::Select(a) => select(a, command),
        Command::Assign(a) => assign(a, command),
        Command::Evaluate(a) => evaluate(a, command),
        Command::Sweep(a) => sweep(a, command),
        Command::Measure(a) => measure(a, command),
        Command::Cluster(a) => cluster(a, command),
        Command::Synth(a) => synth(a, command),
    }
}

fn select(args: &SelectArgs, command: &Command) -> Outcome {
    let bundle = load_bundle(&args.data)?;
    let z = standardize(&bundle.features).map_err(usage)?;
    let optimal: Vec<f64> = (0..bundle.n_programs())
        .map(|p| optimal_config(&bundle, p).map(|r| r.best_time_seconds))
        .collect::<Result<_, DataError>>()
        .map_err(usage)?;
    prepare_out(&args.out.out, command)?;
    let params = SelectionParams {
        m: args.model.m,
        folds: args.model.folds,
        seed: args.model.seed,
        ..SelectionParams::default()
    };
    let y = DVector::from_vec(optimal);
    let result = selection::select(args.method, &z.values, &y, &z.feature_ids, &params).map_err(selection_failure)?;
    result
        .write_csv(args.out.out.join("selection.csv"), Some(&bundle.manifest))
        .map_err(runtime)?;
    if !z.dropped_columns.is_empty() {
        eprintln!("dropped constant features: {}", z.dropped_columns.join(", "));
    }
    for f in &result.ranked_features {
        println!("{:>3}  {:<6} {:.6}", f.rank, f.feature_id, f.score);
    }
    Ok(())
}

fn assign_options(
    method: feast_core::AssignMethod,
    model: &crate::ModelArgs,
    restarts: usize,
    scaling: feast_core::assignment::Scaling,
) -> AssignOptions {
    AssignOptions {
        m: model.m,
        method,
        folds: model.folds,
        seed: model.seed,
        kmeans: KMeansOptions {
            restarts,
            ..KMeansOptions::default()
        },
        scaling,
        ..AssignOptions::default()
    }
}

fn assign(args: &AssignArgs, command: &Command) -> Outcome {
    let bundle = load_bundle(&args.data)?;
    let ctx = AssignmentContext::new(&bundle, args.scaling).map_err(usage)?;
    let options = assign_options(args.method, &args.model, args.restarts, args.scaling);
    let plan = match args.scheme {
        Scheme::Active => {
            if !args.train.is_empty() {
                return Err(usage(anyhow!("--train applies to the passive scheme only")));
            }
            let k = args.k.ok_or_else(|| usage(anyhow!("the active scheme needs --K")))?;
            prepare_out(&args.out.out, command)?;
            ctx.run_active(k, &options).map_err(assign_failure)?
        }
        Scheme::Passive => {
            if args.train.is_empty() {
                return Err(usage(anyhow!("the passive scheme needs --train id1,id2,...")));
            }
            if let Some(k) = args.k {
                if k != args.train.len() {
                    return Err(usage(anyhow!(
                        "--K {k} disagrees with {} ids in --train",
                        args.train.len()
                    )));
                }
            }
            ctx.training_indices(&args.train).map_err(assign_failure)?;
            prepare_out(&args.out.out, command)?;
            ctx.run_passive(&args.train, &options).map_err(assign_failure)?
        }
    };
    plan.write_json(args.out.out.join("plan.json")).map_err(runtime)?;
    println!("training: {}", plan.training_ids.join(","));
    println!("features: {}", plan.distance_features.join(","));
    println!("assigned: {} programs", plan.assignments.len());
    Ok(())
}

#[derive(Serialize)]
struct TrPoint {
    nexec: u64,
    tr: f64,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    #[serde(flatten)]
    report: &'a EvaluationReport,
    time_reduction: Vec<TrPoint>,
    break_even_nexec: Option<u64>,
}

fn evaluate(args: &EvaluateArgs, command: &Command) -> Outcome {
    if args.nexec.contains(&0) {
        return Err(usage(anyhow!("--nexec values must be at least 1")));
    }
    let bundle = load_bundle(&args.data)?;
    let plan = AssignmentPlan::read_json(&args.plan).map_err(usage)?;
    let report = evaluate_plan(&plan, &bundle).map_err(eval_failure)?;
    prepare_out(&args.out.out, command)?;
    let time_reduction: Vec<TrPoint> = args
        .nexec
        .iter()
        .map(|&nexec| TrPoint {
            nexec,
            tr: report.time_reduction(nexec),
        })
        .collect();
    let out = EvaluateOutput {
        report: &report,
        time_reduction,
        break_even_nexec: report.break_even_nexec(),
    };
    write_json(&args.out.out.join("report.json"), &out)?;
    println!(
        "T_auto {:.6}  T_null {:.6}  T_minimal {:.6}  T_exhaustive {:.6}",
        report.t_auto_all, report.t_null, report.t_minimal, report.t_exhaustive_k
    );
    for p in &out.time_reduction {
        println!("Nexec {:>8}  TR {:.6}", p.nexec, p.tr);
    }
    Ok(())
}

fn sweep(args: &SweepArgs, command: &Command) -> Outcome {
    if args.nexec.contains(&0) {
        return Err(usage(anyhow!("--nexec values must be at least 1")));
    }
    if args.trials == 0 {
        return Err(usage(anyhow!("--trials must be at least 1")));
    }
    let bundle = load_bundle(&args.data)?;
    let n = bundle.n_programs();
    if let Some(k) = args.k.iter().find(|&&k| k == 0 || k > n) {
        return Err(usage(anyhow!("--K {k} is outside 1..={n}")));
    }
    let ctx = AssignmentContext::new(&bundle, args.scaling).map_err(usage)?;
    prepare_out(&args.out.out, command)?;
    let options = SweepOptions {
        scheme: args.scheme,
        assign: assign_options(
            args.method,
            &args.model,
            KMeansOptions::default().restarts,
            args.scaling,
        ),
        k_values: args.k.clone(),
        trials: args.trials,
        seed: args.model.seed,
    };
    let (result, grid) = tr_grid(&ctx, &options, &args.nexec).map_err(eval_failure)?;
    let dir = &args.out.out;
    evaluation::write_sweep_csv(dir.join("sweep.csv"), &result, false).map_err(runtime)?;
    evaluation::write_sweep_csv(dir.join("sweep_untrained.csv"), &result, true).map_err(runtime)?;
    grid.write_csv(dir.join("trgrid.csv")).map_err(runtime)?;
    println!("T_null {:.6}  T_minimal {:.6}", result.t_null, result.t_minimal);
    for (p, be) in result.points.iter().zip(grid.break_even()) {
        let be = be.map_or_else(|| "never".to_string(), |n| n.to_string());
        println!(
            "K {:>3}  mean T_auto {:.6} (sd {:.6})  break-even Nexec {be}",
            p.k, p.mean_t_auto, p.std_t_auto
        );
    }
    Ok(())
}

fn measure(args: &MeasureArgs, command: &Command) -> Outcome {
    let plan = MeasurePlan::load(&args.plan).map_err(usage)?;
    plan.validate().map_err(usage)?;
    let catalog = ConfigurationCatalog::load(&args.configs).map_err(usage)?;
    prepare_out(&args.out.out, command)?;
    let mut runner = SystemRunner::from_env();
    let report = build_timing_table(&mut runner, &plan, &catalog, &args.out.out).map_err(|e| match e {
        MeasureError::InvalidPlan(_) | MeasureError::Data(_) => usage(e),
        other => runtime(other),
    })?;
    println!(
        "measured {} cells, resumed {}, {} recorded, {} failed",
        report.executed,
        report.resumed,
        report.table.len(),
        report.failures.len()
    );
    match report.error() {
        Some(e) => {
            for f in &report.failures {
                eprintln!(
                    "{}/{} failed at {}: {}",
                    f.program_id,
                    f.config_id,
                    f.stage,
                    f.message.lines().next().unwrap_or("")
                );
            }
            Err(runtime(e))
        }
        None => Ok(()),
    }
}

fn cluster(args: &ClusterArgs, command: &Command) -> Outcome {
    let bundle = load_bundle(&args.data)?;
    let ctx = AssignmentContext::new(&bundle, args.scaling).map_err(usage)?;
    let points = match args.scaling {
        feast_core::assignment::Scaling::Standardized => ctx.standardized().values.clone(),
        feast_core::assignment::Scaling::Raw => ctx.standardized().retained_raw(&bundle.features),
    };
    let options = KMeansOptions {
        restarts: args.restarts,
        ..KMeansOptions::default()
    };
    let result = clustering::kmeans(&points, args.k, args.seed, &options).map_err(cluster_failure)?;
    let medoids = clustering::select_medoids(&points, &result);
    prepare_out(&args.out.out, command)?;
    clustering::write_report(
        args.out.out.join("clusters.csv"),
        bundle.features.program_ids(),
        &result,
        &medoids,
    )
    .map_err(runtime)?;
    println!("inertia {:.6} (restart {})", result.inertia, result.restart);
    let ids = bundle.features.program_ids();
    for (c, &m) in medoids.iter().enumerate() {
        println!("cluster {c}: {} members, medoid {}", result.members(c).len(), ids[m]);
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    true_features: &'a [String],
    coefficients: &'a [f64],
    populations: Option<&'a [usize]>,
}

fn synth(args: &SynthArgs, command: &Command) -> Outcome {
    let spec = SyntheticSpec {
        n_programs: args.programs,
        n_features: args.n_features,
        n_configs: args.n_configs,
        n_true: args.true_features,
        noise_fraction: args.noise,
        clusters: args.clusters,
        cluster_spread: SyntheticSpec::default().cluster_spread,
        sensitivity: args.sensitivity,
        seed: args.seed,
    };
    let generated = synthetic::generate(&spec).map_err(usage)?;
    prepare_out(&args.out.out, command)?;
    generated.bundle.write_dir(&args.out.out).map_err(runtime)?;
    let truth = Truth {
        true_features: &generated.true_features,
        coefficients: &generated.coefficients,
        populations: generated.populations.as_deref(),
    };
    write_json(&args.out.out.join("truth.json"), &truth)?;
    println!(
        "wrote {} programs x {} configs to {}",
        spec.n_programs,
        spec.n_configs,
        args.out.out.display()
    );
    Ok(())
}
