//! Live timing driver: compile every corpus program under every catalog
//! configuration, run it, and record the summarized wall-clock time.
//!
//! Subprocesses go through the [`Runner`] trait; [`SystemRunner`] is the
//! real implementation and honours `FEAST_RUNNER` (commands become
//! `$FEAST_RUNNER program args...`). Cells are processed strictly one at a
//! time. Results are appended to `timings.csv` and failures to
//! `failures.csv` as they happen; a rerun skips every cell already present
//! in either file.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::dataset::{Configuration, ConfigurationCatalog, DataError, TimingRecord, TimingTable};

pub const RUNNER_ENV: &str = "FEAST_RUNNER";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const FAILURES_FILE: &str = "failures.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    #[default]
    Median,
    Min,
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Statistic::Mean),
            "median" => Ok(Statistic::Median),
            "min" => Ok(Statistic::Min),
            other => Err(format!("unknown statistic `{other}`")),
        }
    }
}

impl Statistic {
    /// Summary of a non-empty sample; the median of an even count is the
    /// mean of the middle pair.
    pub fn summarize(self, samples: &[f64]) -> f64 {
        match self {
            Statistic::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
            Statistic::Min => samples.iter().cloned().fold(f64::INFINITY, f64::min),
            Statistic::Median => {
                let mut s = samples.to_vec();
                s.sort_by(f64::total_cmp);
                let mid = s.len() / 2;
                if s.len() % 2 == 1 {
                    s[mid]
                } else {
                    (s[mid - 1] + s[mid]) / 2.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub source: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

fn default_repetitions() -> u32 {
    3
}

fn default_timeout() -> f64 {
    600.0
}

/// Contents of a `measure.toml` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurePlan {
    /// Command with `{source}`, `{flags}` and `{output}` placeholders.
    /// `{flags}` must be a token of its own and expands to one argument per
    /// flag.
    pub compile_template: String,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default)]
    pub statistic: Statistic,
    #[serde(rename = "program")]
    pub corpus: Vec<CorpusEntry>,
}

impl MeasurePlan {
    pub fn validate(&self) -> Result<(), MeasureError> {
        for placeholder in ["{source}", "{flags}", "{output}"] {
            if !self.compile_template.contains(placeholder) {
                return Err(MeasureError::InvalidPlan(format!(
                    "compile template lacks the {placeholder} placeholder"
                )));
            }
        }
        if !self.compile_template.split_whitespace().any(|t| t == "{flags}") {
            return Err(MeasureError::InvalidPlan(
                "{flags} must be a whitespace-separated token".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(MeasureError::InvalidPlan("repetitions must be at least 1".into()));
        }
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(MeasureError::InvalidPlan("timeout_seconds must be positive".into()));
        }
        if self.corpus.is_empty() {
            return Err(MeasureError::InvalidPlan("the corpus is empty".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.corpus {
            if !seen.insert(e.id.as_str()) {
                return Err(MeasureError::InvalidPlan(format!("duplicate program id `{}`", e.id)));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, MeasureError> {
        let plan: MeasurePlan = toml::from_str(text).map_err(|e| MeasureError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Load a plan file; relative source paths are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeasureError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let mut plan = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut plan.corpus {
            if e.source.is_relative() {
                e.source = base.join(&e.source);
            }
        }
        Ok(plan)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds)
    }
}

/// Substitute a compile template into an argument vector.
pub fn expand_template(template: &str, source: &Path, flags: &[String], output: &Path) -> Vec<String> {
    let source = source.to_string_lossy();
    let output = output.to_string_lossy();
    let mut out = Vec::new();
    for token in template.split_whitespace() {
        if token == "{flags}" {
            out.extend(flags.iter().cloned());
        } else {
            out.push(token.replace("{source}", &source).replace("{output}", &output));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    /// Exit code; `None` when the process was killed by a signal.
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

impl CommandOutput {
    pub fn success(&self) -> bool {
        self.status == Some(0)
    }

    fn diagnostics(&self) -> String {
        let mut d = self.stderr.trim_end().to_string();
        if !self.stdout.trim().is_empty() {
            if !d.is_empty() {
                d.push('\n');
            }
            d.push_str(self.stdout.trim_end());
        }
        d
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("cannot start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
}

pub trait Runner {
    fn run(&mut self, program: &str, args: &[String], timeout: Duration) -> Result<CommandOutput, RunnerError>;
}

/// Runs real subprocesses and times them with a monotonic clock.
#[derive(Debug, Clone, Default)]
pub struct SystemRunner {
    wrapper: Option<String>,
}

impl SystemRunner {
    pub fn new(wrapper: Option<String>) -> Self {
        Self { wrapper }
    }

    /// Uses `FEAST_RUNNER` when it is set and non-empty.
    pub fn from_env() -> Self {
        Self::new(std::env::var(RUNNER_ENV).ok().filter(|s| !s.is_empty()))
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl Runner for SystemRunner {
    fn run(&mut self, program: &str, args: &[String], timeout: Duration) -> Result<CommandOutput, RunnerError> {
        let mut cmd = match &self.wrapper {
            Some(w) => {
                let mut c = Command::new(w);
                c.arg(program);
                c
            }
            None => Command::new(program),
        };
        cmd.args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|source| RunnerError::Spawn {
            program: self.wrapper.clone().unwrap_or_else(|| program.to_string()),
            source,
        })?;
        let out = drain(child.stdout.take().expect("piped stdout"));
        let err = drain(child.stderr.take().expect("piped stderr"));
        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) | Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::Timeout(timeout));
            }
        };
        let elapsed = start.elapsed();
        Ok(CommandOutput {
            status: status.code(),
            stdout: out.join().unwrap_or_default(),
            stderr: err.join().unwrap_or_default(),
            elapsed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Source,
    Compile,
    Run,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Source => "source",
            Stage::Compile => "compile",
            Stage::Run => "run",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(Stage::Source),
            "compile" => Ok(Stage::Compile),
            "run" => Ok(Stage::Run),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure plan: {0}")]
    InvalidPlan(String),
    #[error("source of `{program_id}` not found: {}", path.display())]
    MissingSource { program_id: String, path: PathBuf },
    #[error("compilation failed (exit {status:?}):\n{diagnostics}")]
    Compile { status: Option<i32>, diagnostics: String },
    #[error("compiler reported success but produced no {}", .0.display())]
    MissingOutput(PathBuf),
    #[error("{stage} timed out after {seconds} s")]
    Timeout { stage: Stage, seconds: f64 },
    #[error("execution failed (exit {status:?}):\n{diagnostics}")]
    Execution { status: Option<i32>, diagnostics: String },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{failed} of {attempted} cells failed; see {FAILURES_FILE}")]
    Aggregate { failed: usize, attempted: usize },
}

impl MeasureError {
    fn from_runner(err: RunnerError, stage: Stage) -> Self {
        match err {
            RunnerError::Timeout(t) => MeasureError::Timeout {
                stage,
                seconds: t.as_secs_f64(),
            },
            other => MeasureError::Runner(other),
        }
    }
}

pub fn compile_program(
    runner: &mut dyn Runner,
    plan: &MeasurePlan,
    program: &CorpusEntry,
    config: &Configuration,
    output: &Path,
) -> Result<PathBuf, MeasureError> {
    if !program.source.exists() {
        return Err(MeasureError::MissingSource {
            program_id: program.id.clone(),
            path: program.source.clone(),
        });
    }
    let argv = expand_template(&plan.compile_template, &program.source, &config.flags, output);
    let (cmd, args) = argv
        .split_first()
        .ok_or_else(|| MeasureError::InvalidPlan("empty compile template".into()))?;
    let out = runner
        .run(cmd, args, plan.timeout())
        .map_err(|e| MeasureError::from_runner(e, Stage::Compile))?;
    if !out.success() {
        return Err(MeasureError::Compile {
            status: out.status,
            diagnostics: out.diagnostics(),
        });
    }
    if !output.exists() {
        return Err(MeasureError::MissingOutput(output.to_path_buf()));
    }
    Ok(output.to_path_buf())
}

/// Run `executable` `repetitions` times in sequence and summarize.
pub fn time_execution(
    runner: &mut dyn Runner,
    executable: &Path,
    args: &[String],
    repetitions: u32,
    statistic: Statistic,
    timeout: Duration,
) -> Result<(f64, u32), MeasureError> {
    let program = executable.to_string_lossy();
    let mut samples = Vec::with_capacity(repetitions as usize);
    for _ in 0..repetitions.max(1) {
        let out = runner
            .run(&program, args, timeout)
            .map_err(|e| MeasureError::from_runner(e, Stage::Run))?;
        if !out.success() {
            return Err(MeasureError::Execution {
                status: out.status,
                diagnostics: out.diagnostics(),
            });
        }
        samples.push(out.elapsed.as_secs_f64());
    }
    Ok((statistic.summarize(&samples), samples.len() as u32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub program_id: String,
    pub config_id: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MeasureReport {
    /// Every successful cell, including those recovered from a previous run.
    pub table: TimingTable,
    /// Every failed cell, including those recovered from a previous run.
    pub failures: Vec<FailureRecord>,
    /// Cells measured by this invocation.
    pub executed: usize,
    /// Cells skipped because an earlier run already settled them.
    pub resumed: usize,
}

impl MeasureReport {
    pub fn attempted(&self) -> usize {
        self.table.len() + self.failures.len()
    }

    /// Aggregate error when any cell failed.
    pub fn error(&self) -> Option<MeasureError> {
        (!self.failures.is_empty()).then(|| MeasureError::Aggregate {
            failed: self.failures.len(),
            attempted: self.attempted(),
        })
    }
}

fn append_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>, DataError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| DataError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(header).map_err(|e| DataError::csv(path, e))?;
        w.flush().map_err(|e| DataError::io(path, e))?;
    }
    Ok(w)
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, DataError> {
    if !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true) {
        return Ok(Vec::new());
    }
    let mut r = crate::dataset::csv_reader(path)?;
    let found = r.headers().map_err(|e| DataError::csv(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(DataError::Schema {
            column: found.iter().collect::<Vec<_>>().join(","),
            message: format!("expected header {}", header.join(",")),
        });
    }
    r.records()
        .map(|rec| rec.map_err(|e| DataError::csv(path, e)))
        .collect()
}

const TIMING_HEADER: [&str; 4] = ["program_id", "config_id", "mean_seconds", "repetitions"];
const FAILURE_HEADER: [&str; 4] = ["program_id", "config_id", "stage", "message"];

fn load_previous(dir: &Path, table: &mut TimingTable) -> Result<Vec<FailureRecord>, DataError> {
    let timings_path = dir.join(TIMINGS_FILE);
    for (i, rec) in read_rows(&timings_path, &TIMING_HEADER)?.iter().enumerate() {
        let line = i as u64 + 2;
        let seconds = crate::dataset::parse_f64(line, "mean_seconds", &rec[2])?;
        let repetitions: u32 = rec[3]
            .trim()
            .parse()
            .map_err(|e: std::num::ParseIntError| DataError::Parse {
                line,
                column: "repetitions".into(),
                value: rec[3].to_string(),
                message: e.to_string(),
            })?;
        table.insert_by_id(
            &rec[0],
            &rec[1],
            TimingRecord {
                mean_seconds: seconds,
                repetitions,
            },
        )?;
    }
    let mut failures = Vec::new();
    for (i, rec) in read_rows(&dir.join(FAILURES_FILE), &FAILURE_HEADER)?.iter().enumerate() {
        let stage = rec[2].parse().map_err(|message| DataError::InvalidValue {
            line: i as u64 + 2,
            column: "stage".into(),
            message,
        })?;
        if table.program_idx(&rec[0]).is_none() {
            return Err(DataError::UnknownReference {
                kind: "program",
                id: rec[0].to_string(),
            });
        }
        if table.config_idx(&rec[1]).is_none() {
            return Err(DataError::UnknownReference {
                kind: "configuration",
                id: rec[1].to_string(),
            });
        }
        failures.push(FailureRecord {
            program_id: rec[0].to_string(),
            config_id: rec[1].to_string(),
            stage,
            message: rec[3].to_string(),
        });
    }
    Ok(failures)
}

fn measure_cell(
    runner: &mut dyn Runner,
    plan: &MeasurePlan,
    program: &CorpusEntry,
    config: &Configuration,
    build_dir: &Path,
) -> Result<(f64, u32), (Stage, MeasureError)> {
    let exe = build_dir.join(format!("{}-{}", program.id, config.id));
    let compiled = compile_program(runner, plan, program, config, &exe).map_err(|e| {
        let stage = if matches!(e, MeasureError::MissingSource { .. }) {
            Stage::Source
        } else {
            Stage::Compile
        };
        (stage, e)
    })?;
    let result = time_execution(
        runner,
        &compiled,
        &program.args,
        plan.repetitions,
        plan.statistic,
        plan.timeout(),
    )
    .map_err(|e| (Stage::Run, e));
    let _ = std::fs::remove_file(&compiled);
    result
}

/// Measure every (program, configuration) cell not yet settled in
/// `out_dir`, appending to `timings.csv` / `failures.csv` after each cell.
pub fn build_timing_table(
    runner: &mut dyn Runner,
    plan: &MeasurePlan,
    catalog: &ConfigurationCatalog,
    out_dir: &Path,
) -> Result<MeasureReport, MeasureError> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let build_dir = out_dir.join("build");
    std::fs::create_dir_all(&build_dir).map_err(|e| DataError::io(&build_dir, e))?;

    let program_ids: Vec<String> = plan.corpus.iter().map(|e| e.id.clone()).collect();
    let config_ids: Vec<String> = catalog.ids().map(String::from).collect();
    let mut table = TimingTable::new(program_ids, config_ids);
    let mut failures = load_previous(out_dir, &mut table)?;
    let mut failed: HashSet<(String, String)> = failures
        .iter()
        .map(|f| (f.program_id.clone(), f.config_id.clone()))
        .collect();

    let timings_path = out_dir.join(TIMINGS_FILE);
    let failures_path = out_dir.join(FAILURES_FILE);
    let mut timing_out = append_writer(&timings_path, &TIMING_HEADER)?;
    let mut failure_out = append_writer(&failures_path, &FAILURE_HEADER)?;

    let (mut executed, mut resumed) = (0, 0);
    for (p, program) in plan.corpus.iter().enumerate() {
        for (c, config) in catalog.entries().iter().enumerate() {
            if table.get(p, c).is_some() || failed.contains(&(program.id.clone(), config.id.clone())) {
                resumed += 1;
                continue;
            }
            executed += 1;
            match measure_cell(runner, plan, program, config, &build_dir) {
                Ok((seconds, repetitions)) => {
                    let record = TimingRecord {
                        mean_seconds: seconds,
                        repetitions,
                    };
                    table.insert(p, c, record)?;
                    timing_out
                        .write_record([
                            program.id.as_str(),
                            config.id.as_str(),
                            &seconds.to_string(),
                            &repetitions.to_string(),
                        ])
                        .map_err(|e| DataError::csv(&timings_path, e))?;
                    timing_out.flush().map_err(|e| DataError::io(&timings_path, e))?;
                }
                Err((stage, err)) => {
                    let record = FailureRecord {
                        program_id: program.id.clone(),
                        config_id: config.id.clone(),
                        stage,
                        message: err.to_string(),
                    };
                    failure_out
                        .write_record([
                            record.program_id.as_str(),
                            record.config_id.as_str(),
                            &stage.to_string(),
                            &record.message,
                        ])
                        .map_err(|e| DataError::csv(&failures_path, e))?;
                    failure_out.flush().map_err(|e| DataError::io(&failures_path, e))?;
                    failed.insert((record.program_id.clone(), record.config_id.clone()));
                    failures.push(record);
                }
            }
        }
    }
    Ok(MeasureReport {
        table,
        failures,
        executed,
        resumed,
    })
}

/// Scripted runner for tests and dry runs.
///
/// Compile commands (recognized by containing the `-o` output argument of
/// the template) create their output file and succeed unless scripted to
/// fail; every other command is an execution and consumes the next fake
/// duration.
#[derive(Debug, Clone, Default)]
pub struct MockRunner {
    /// Fake execution durations in seconds, used cyclically.
    pub durations: Vec<f64>,
    /// Substrings of compile arguments that make the compile fail.
    pub fail_compile_when: Vec<String>,
    /// Substrings of executable paths whose runs exit with status 1.
    pub fail_run_when: Vec<String>,
    pub compile_calls: usize,
    pub run_calls: usize,
}

impl Runner for MockRunner {
    fn run(&mut self, program: &str, args: &[String], _timeout: Duration) -> Result<CommandOutput, RunnerError> {
        if let Some(pos) = args.iter().position(|a| a == "-o") {
            self.compile_calls += 1;
            let joined = args.join(" ");
            if self.fail_compile_when.iter().any(|s| joined.contains(s.as_str())) {
                return Ok(CommandOutput {
                    status: Some(1),
                    stdout: String::new(),
                    stderr: format!("error: cannot compile with {joined}"),
                    elapsed: Duration::ZERO,
                });
            }
            let output = &args[pos + 1];
            std::fs::write(output, b"").map_err(|source| RunnerError::Spawn {
                program: program.to_string(),
                source,
            })?;
            return Ok(CommandOutput {
                status: Some(0),
                stdout: String::new(),
                stderr: String::new(),
                elapsed: Duration::ZERO,
            });
        }
        let fake = if self.durations.is_empty() {
            1.0
        } else {
            self.durations[self.run_calls % self.durations.len()]
        };
        self.run_calls += 1;
        let failing = self.fail_run_when.iter().any(|s| program.contains(s.as_str()));
        Ok(CommandOutput {
            status: Some(if failing { 1 } else { 0 }),
            stdout: String::new(),
            stderr: if failing {
                "segmentation fault".into()
            } else {
                String::new()
            },
            elapsed: Duration::from_secs_f64(fake),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(n: usize) -> ConfigurationCatalog {
        let mut entries = vec![Configuration {
            id: "null".into(),
            flags: vec![],
        }];
        entries.extend((1..n).map(|i| Configuration {
            id: format!("c{i}"),
            flags: vec!["-O2".into(), format!("-fopt{i}")],
        }));
        ConfigurationCatalog::new(entries).unwrap()
    }

    fn plan(dir: &Path, programs: usize) -> MeasurePlan {
        let corpus = (0..programs)
            .map(|i| {
                let source = dir.join(format!("p{i}.c"));
                std::fs::write(&source, "int main(){return 0;}").unwrap();
                CorpusEntry {
                    id: format!("p{i}"),
                    source,
                    args: vec!["100".into()],
                }
            })
            .collect();
        MeasurePlan {
            compile_template: "cc {flags} -o {output} {source}".into(),
            repetitions: 3,
            timeout_seconds: 5.0,
            statistic: Statistic::Median,
            corpus,
        }
    }

    #[test]
    fn template_substitution_in_order() {
        let argv = expand_template(
            "cc {flags} -o {output} {source}",
            Path::new("a.c"),
            &["-O2".into(), "-funroll-loops".into()],
            Path::new("a.out"),
        );
        assert_eq!(argv, vec!["cc", "-O2", "-funroll-loops", "-o", "a.out", "a.c"]);
    }

    #[test]
    fn statistics() {
        assert_eq!(Statistic::Median.summarize(&[1.0, 3.0, 2.0]), 2.0);
        assert_eq!(Statistic::Min.summarize(&[1.2, 1.1, 1.3]), 1.1);
        assert_eq!(Statistic::Mean.summarize(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(Statistic::Median.summarize(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(Statistic::Median.summarize(&[7.0]), 7.0);
    }

    #[test]
    fn plan_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan(dir.path(), 1);
        assert!(p.validate().is_ok());
        p.compile_template = "cc -o {output} {source}".into();
        assert!(matches!(p.validate(), Err(MeasureError::InvalidPlan(_))));
        let mut p = plan(dir.path(), 1);
        p.repetitions = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_plan_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("measure.toml");
        std::fs::write(
            &path,
            "compile_template = \"cc {flags} -o {output} {source}\"\n\n[[program]]\nid = \"fft\"\nsource = \"fft.c\"\nargs = [\"1024\"]\n",
        )
        .unwrap();
        let p = MeasurePlan::load(&path).unwrap();
        assert_eq!(p.repetitions, 3);
        assert_eq!(p.statistic, Statistic::Median);
        assert_eq!(p.corpus[0].source, dir.path().join("fft.c"));
        assert!(MeasurePlan::from_toml("compile_template = 1").is_err());
    }

    #[test]
    fn missing_source_is_a_precondition_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan(dir.path(), 1);
        p.corpus[0].source = dir.path().join("absent.c");
        let mut runner = MockRunner::default();
        let err = compile_program(
            &mut runner,
            &p,
            &p.corpus[0],
            &catalog(1).entries()[0],
            &dir.path().join("x"),
        )
        .unwrap_err();
        assert!(matches!(err, MeasureError::MissingSource { .. }));
        assert_eq!(runner.compile_calls, 0);
    }

    #[test]
    fn compile_failure_keeps_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(dir.path(), 1);
        let mut runner = MockRunner {
            fail_compile_when: vec!["-fopt1".into()],
            ..MockRunner::default()
        };
        let err = compile_program(
            &mut runner,
            &p,
            &p.corpus[0],
            &catalog(2).entries()[1],
            &dir.path().join("x"),
        )
        .unwrap_err();
        match err {
            MeasureError::Compile { status, diagnostics } => {
                assert_eq!(status, Some(1));
                assert!(diagnostics.contains("cannot compile with -O2 -fopt1"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn timing_uses_statistic() {
        let mut runner = MockRunner {
            durations: vec![1.0, 3.0, 2.0],
            ..MockRunner::default()
        };
        let (s, reps) = time_execution(
            &mut runner,
            Path::new("exe"),
            &[],
            3,
            Statistic::Median,
            Duration::from_secs(1),
        )
        .unwrap();
        assert_eq!((s, reps), (2.0, 3));
        let mut runner = MockRunner {
            durations: vec![5.0],
            ..MockRunner::default()
        };
        let (s, reps) = time_execution(
            &mut runner,
            Path::new("exe"),
            &[],
            1,
            Statistic::Min,
            Duration::from_secs(1),
        )
        .unwrap();
        assert_eq!((s, reps), (5.0, 1));
    }

    #[test]
    fn table_and_failures_account_for_every_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = plan(dir.path(), 2);
        let out = dir.path().join("out");
        let mut runner = MockRunner {
            durations: vec![1.0],
            fail_compile_when: vec!["-fopt2 -o".into()],
            ..MockRunner::default()
        };
        let report = build_timing_table(&mut runner, &p, &catalog(3), &out).unwrap();
        assert_eq!(report.table.len(), 4);
        assert_eq!(report.failures.len(), 2);
        assert!(matches!(
            report.error(),
            Some(MeasureError::Aggregate {
                failed: 2,
                attempted: 6
            })
        ));
        let failures = std::fs::read_to_string(out.join(FAILURES_FILE)).unwrap();
        assert!(failures.starts_with("program_id,config_id,stage,message"));
        assert_eq!(failures.matches(",compile,").count(), 2);
    }

    #[test]
    fn system_runner_runs_and_times_out() {
        let mut runner = SystemRunner::new(None);
        let out = runner
            .run("sh", &["-c".into(), "echo hi; exit 3".into()], Duration::from_secs(5))
            .unwrap();
        assert_eq!(out.status, Some(3));
        assert_eq!(out.stdout, "hi\n");
        let err = runner
            .run("sleep", &["5".into()], Duration::from_millis(100))
            .unwrap_err();
        assert!(matches!(err, RunnerError::Timeout(_)));
        let err = runner
            .run("/nonexistent/tool", &[], Duration::from_secs(1))
            .unwrap_err();
        assert!(matches!(err, RunnerError::Spawn { .. }));
    }

    #[test]
    fn wrapper_prefixes_commands() {
        let mut runner = SystemRunner::new(Some("echo".into()));
        let out = runner.run("cc", &["-O2".into()], Duration::from_secs(5)).unwrap();
        assert_eq!(out.stdout, "cc -O2\n");
    }
}
