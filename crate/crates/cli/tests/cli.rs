use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn feast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feast")).args(args).output().unwrap()
}

fn feast_with_env(args: &[&str], key: &str, value: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feast"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn select_writes_m_rows() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&[
        "select",
        "--data",
        s(&bundled()),
        "--method",
        "lasso",
        "--M",
        "10",
        "--out",
        s(out.path()),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let rows = csv_rows(&out.path().join("selection.csv"));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[0] == "lasso"));
    let ranks: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(ranks, ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]);
}

#[test]
fn zero_features_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&["select", "--data", s(&bundled()), "--M", "0", "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("--M"));
    assert!(!out.path().join("selection.csv").exists());
}

#[test]
fn forward_selection_stays_in_true_support() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&[
        "select",
        "--data",
        s(&bundled()),
        "--method",
        "sfs",
        "--M",
        "2",
        "--out",
        s(out.path()),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let truth = json(&bundled().join("truth.json"));
    let support: Vec<&str> = truth["true_features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let rows = csv_rows(&out.path().join("selection.csv"));
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(support.contains(&row[1].as_str()), "{} is not a true feature", row[1]);
    }
}

#[test]
fn active_plan_names_k_programs() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&[
        "assign",
        "--data",
        s(&bundled()),
        "--scheme",
        "active",
        "--K",
        "5",
        "--method",
        "lasso",
        "--out",
        s(out.path()),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let plan = json(&out.path().join("plan.json"));
    assert_eq!(plan["training_ids"].as_array().unwrap().len(), 5);
    assert_eq!(plan["assignments"].as_array().unwrap().len(), 25);
    let log = json(&out.path().join("run_config.json"));
    assert_eq!(log["command"], "assign");
    assert_eq!(log["m"], 10);
    assert_eq!(log["folds"], 3);
    assert_eq!(log["seed"], 0);
}

#[test]
fn unknown_training_id_is_named() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&[
        "assign",
        "--data",
        s(&bundled()),
        "--scheme",
        "passive",
        "--train",
        "prog001,prog002,c",
        "--out",
        s(out.path()),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("`c`"), "{}", stderr(&r));
    assert!(!out.path().join("plan.json").exists());
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let r = feast(&["cluster", "--data", s(&bundled()), "--K", "3"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn evaluate_matches_hand_computed_time_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let plan_dir = dir.path().join("plan");
    let eval_dir = dir.path().join("eval");
    let r = feast(&[
        "assign",
        "--data",
        s(&bundled()),
        "--scheme",
        "passive",
        "--train",
        "prog003,prog011,prog020,prog027",
        "--out",
        s(&plan_dir),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let plan_path = plan_dir.join("plan.json");
    let r = feast(&[
        "evaluate",
        "--data",
        s(&bundled()),
        "--plan",
        s(&plan_path),
        "--nexec",
        "100",
        "--out",
        s(&eval_dir),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));

    let mut times: HashMap<(String, String), f64> = HashMap::new();
    let mut programs = Vec::new();
    for row in csv_rows(&bundled().join("timings.csv")) {
        if !programs.contains(&row[0]) {
            programs.push(row[0].clone());
        }
        times.insert((row[0].clone(), row[1].clone()), row[2].parse().unwrap());
    }
    let plan = json(&plan_path);
    let training: Vec<String> = plan["training_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let assigned: HashMap<String, String> = plan["assignments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            (
                a["program_id"].as_str().unwrap().to_string(),
                a["assigned_config_id"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let (mut t_null, mut t_auto, mut t_exh) = (0.0, 0.0, 0.0);
    for p in &programs {
        let row: Vec<f64> = times.iter().filter(|((q, _), _)| q == p).map(|(_, &v)| v).collect();
        t_null += times[&(p.clone(), "null".to_string())];
        if training.contains(p) {
            t_auto += row.iter().cloned().fold(f64::INFINITY, f64::min);
            t_exh += row.iter().sum::<f64>();
        } else {
            t_auto += times[&(p.clone(), assigned[p].clone())];
        }
    }
    let expected = 100.0 * (t_null - t_auto) - t_exh;

    let report = json(&eval_dir.join("report.json"));
    let tr = &report["time_reduction"][0];
    assert_eq!(tr["nexec"], 100);
    let got = tr["tr"].as_f64().unwrap();
    assert!(
        (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
        "{got} vs {expected}"
    );
}

#[test]
fn sweep_writes_all_tables() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&[
        "sweep",
        "--data",
        s(&bundled()),
        "--K",
        "3,5",
        "--trials",
        "4",
        "--method",
        "all_features",
        "--nexec",
        "10,1000",
        "--seed",
        "5",
        "--out",
        s(out.path()),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let sweep = csv_rows(&out.path().join("sweep.csv"));
    assert_eq!(sweep.len(), 2);
    assert_eq!(sweep[0][0], "3");
    assert_eq!(sweep[1][3], "4");
    assert_eq!(csv_rows(&out.path().join("sweep_untrained.csv")).len(), 2);
    assert_eq!(csv_rows(&out.path().join("trgrid.csv")).len(), 4);
    let log = json(&out.path().join("run_config.json"));
    assert_eq!(log["seed"], 5);
    assert_eq!(log["trials"], 4);
}

#[test]
fn cluster_report_marks_one_medoid_per_cluster() {
    let out = tempfile::tempdir().unwrap();
    let r = feast(&["cluster", "--data", s(&bundled()), "--K", "3", "--out", s(out.path())]);
    assert!(r.status.success(), "{}", stderr(&r));
    let rows = csv_rows(&out.path().join("clusters.csv"));
    assert_eq!(rows.len(), 30);
    assert_eq!(rows.iter().filter(|r| r[2] == "true").count(), 3);
}

#[test]
fn commands_leave_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    for f in ["features.csv", "timings.csv", "configs.csv"] {
        fs::copy(bundled().join(f), data.join(f)).unwrap();
    }
    let before: Vec<Vec<u8>> = ["features.csv", "timings.csv", "configs.csv"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    let out = dir.path().join("out");
    assert!(feast(&["select", "--data", s(&data), "--out", s(&out)])
        .status
        .success());
    assert!(feast(&[
        "assign",
        "--data",
        s(&data),
        "--scheme",
        "active",
        "--K",
        "4",
        "--out",
        s(&out)
    ])
    .status
    .success());
    let after: Vec<Vec<u8>> = ["features.csv", "timings.csv", "configs.csv"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let r = feast(&[
            "synth",
            "--programs",
            "12",
            "--n-configs",
            "8",
            "--seed",
            "3",
            "--out",
            s(d),
        ]);
        assert!(r.status.success(), "{}", stderr(&r));
    }
    for f in ["features.csv", "timings.csv", "configs.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

/// A stand-in for the compiler and the benchmarks: compiling touches the
/// output file, running succeeds, and anything mentioning `-fbroken` fails.
fn fake_toolchain(dir: &Path) -> PathBuf {
    let script = dir.join("runner.sh");
    fs::write(
        &script,
        r#"#!/bin/sh
prog="$1"; shift
case "$*" in *-fbroken*) echo "unsupported flag" >&2; exit 1;; esac
if [ "$prog" = "cc" ]; then
  while [ $# -gt 0 ]; do
    if [ "$1" = "-o" ]; then : > "$2"; fi
    shift
  done
fi
exit 0
"#,
    )
    .unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    }
    script
}

fn measure_inputs(dir: &Path, broken: bool) -> (PathBuf, PathBuf) {
    for p in ["a", "b"] {
        fs::write(dir.join(format!("{p}.c")), "int main(void) { return 0; }\n").unwrap();
    }
    let plan = dir.join("measure.toml");
    fs::write(
        &plan,
        r#"compile_template = "cc {flags} -o {output} {source}"
repetitions = 2
timeout_seconds = 10
statistic = "median"

[[program]]
id = "a"
source = "a.c"

[[program]]
id = "b"
source = "b.c"
args = ["64"]
"#,
    )
    .unwrap();
    let configs = dir.join("configs.csv");
    let third = if broken { "-O2 -fbroken" } else { "-O3" };
    fs::write(&configs, format!("config_id,flags\nnull,-O0\nc1,-O2\nc2,{third}\n")).unwrap();
    (plan, configs)
}

#[test]
fn measure_records_every_cell_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let runner = fake_toolchain(dir.path());
    let (plan, configs) = measure_inputs(dir.path(), false);
    let out = dir.path().join("out");
    let args = [
        "measure",
        "--plan",
        s(&plan),
        "--configs",
        s(&configs),
        "--out",
        s(&out),
    ];
    let r = feast_with_env(&args, "FEAST_RUNNER", &runner);
    assert!(r.status.success(), "{}", stderr(&r));
    assert_eq!(csv_rows(&out.join("timings.csv")).len(), 6);
    let first = fs::read(out.join("timings.csv")).unwrap();

    let r = feast_with_env(&args, "FEAST_RUNNER", &runner);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("measured 0 cells, resumed 6"));
    assert_eq!(fs::read(out.join("timings.csv")).unwrap(), first);
}

#[test]
fn measure_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let runner = fake_toolchain(dir.path());
    let (plan, configs) = measure_inputs(dir.path(), true);
    let out = dir.path().join("out");
    let r = feast_with_env(
        &[
            "measure",
            "--plan",
            s(&plan),
            "--configs",
            s(&configs),
            "--out",
            s(&out),
        ],
        "FEAST_RUNNER",
        &runner,
    );
    assert_eq!(r.status.code(), Some(1), "{}", stderr(&r));
    assert_eq!(csv_rows(&out.join("timings.csv")).len(), 4);
    let text = fs::read_to_string(out.join("failures.csv")).unwrap();
    let failed: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("a,c2,") || l.starts_with("b,c2,"))
        .collect();
    assert_eq!(failed.len(), 2, "{text}");
}
