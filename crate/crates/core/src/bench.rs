//! Benchmark corpus and the multi-run experiment harness.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_file, Diagnostic};
use crate::engine::{run, write_run, Algo, ClockMode, RunConfig};
use crate::localize::localize;
use crate::model::Chart;
use crate::oracle::{SuiteError, TestSuite};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("{0}")]
    Spec(String),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Chart(Vec<Diagnostic>),
    #[error(transparent)]
    Suite(#[from] SuiteError),
}

fn io_err(path: &Path, e: impl ToString) -> BenchError {
    BenchError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// One seeded bug: a buggy chart, the developer fix and a test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub buggy: PathBuf,
    pub fixed: PathBuf,
    pub tests: PathBuf,
    pub description: String,
    pub faults: usize,
}

/// A case with its files parsed and loaded.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub case: BenchmarkCase,
    pub buggy: Chart,
    pub fixed: Chart,
    pub suite: TestSuite,
}

impl BenchmarkCase {
    /// Parses both charts and loads the suite, checking test kinds against
    /// the buggy chart.
    pub fn load(&self) -> Result<LoadedCase, BenchError> {
        let buggy = parse_file(&self.buggy).map_err(BenchError::Chart)?;
        let fixed = parse_file(&self.fixed).map_err(BenchError::Chart)?;
        let suite = TestSuite::load(&self.tests, &buggy)?;
        Ok(LoadedCase { case: self.clone(), buggy, fixed, suite })
    }
}

/// Directory of the bundled corpus: `$FLOWMEND_CORPUS`, or the `corpus/`
/// directory of the source tree.
pub fn default_corpus_dir() -> PathBuf {
    std::env::var_os("FLOWMEND_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus"))
}

/// Reads `<dir>/cases.json`; paths inside it are relative to `dir`.
pub fn load_corpus(dir: &Path) -> Result<Vec<BenchmarkCase>, BenchError> {
    let path = dir.join("cases.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut cases: Vec<BenchmarkCase> = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    for c in &mut cases {
        c.buggy = dir.join(&c.buggy);
        c.fixed = dir.join(&c.fixed);
        c.tests = dir.join(&c.tests);
    }
    Ok(cases)
}

pub fn build_corpus() -> Result<Vec<BenchmarkCase>, BenchError> {
    load_corpus(&default_corpus_dir())
}

fn default_repetitions() -> usize {
    5
}
fn default_budget() -> f64 {
    120.0
}
fn default_algos() -> Vec<Algo> {
    vec![Algo::FlowRepair, Algo::Baseline]
}
fn default_local_tries() -> usize {
    30
}
fn default_workers() -> usize {
    1
}
fn default_clock() -> ClockMode {
    ClockMode::Virtual
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub cases: Vec<String>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_algos")]
    pub algos: Vec<Algo>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_local_tries")]
    pub local_tries: usize,
    /// Corpus directory; the bundled corpus when absent.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_clock")]
    pub clock: ClockMode,
    /// Runs executed concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        if let (Some(c), Some(base)) = (&spec.corpus, path.parent()) {
            spec.corpus = Some(base.join(c));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions == 0 {
            return Err(BenchError::Spec("repetitions must be at least 1".into()));
        }
        if self.algos.is_empty() || self.cases.is_empty() {
            return Err(BenchError::Spec("cases and algos must be non-empty".into()));
        }
        if !(self.budget >= 0.0) {
            return Err(BenchError::Spec("budget must be non-negative".into()));
        }
        Ok(())
    }

    /// Resolves the case ids; an unknown id is an error.
    pub fn resolve(&self) -> Result<Vec<BenchmarkCase>, BenchError> {
        let dir = self.corpus.clone().unwrap_or_else(default_corpus_dir);
        let corpus = load_corpus(&dir)?;
        self.cases
            .iter()
            .map(|id| corpus.iter().find(|c| &c.id == id).cloned().ok_or_else(|| BenchError::UnknownCase(id.clone())))
            .collect()
    }
}

/// Aggregated plausible-patch counts for one (case, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub algo: Algo,
    /// Completed runs.
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

pub fn run_dir(out: &Path, case: &str, algo: Algo, k: usize) -> PathBuf {
    out.join(case).join(algo.name()).join(format!("run_{k}"))
}

struct Job<'a> {
    case: &'a LoadedCase,
    algo: Algo,
    k: usize,
}

fn execute(job: &Job<'_>, spec: &ExperimentSpec, out: &Path) -> Result<(), String> {
    let dir = run_dir(out, &job.case.case.id, job.algo, job.k);
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let result = (|| {
        let ranking = localize(&job.case.buggy, &job.case.suite).map_err(|e| e.to_string())?;
        let cfg = RunConfig {
            budget: spec.budget,
            local_tries: spec.local_tries,
            seed: spec.base_seed + job.k as u64,
            algo: job.algo,
            clock: spec.clock,
            ..RunConfig::default()
        };
        let (plausible, log) = run(&job.case.buggy, &job.case.suite, &ranking, &cfg).map_err(|e| e.to_string())?;
        write_run(&dir, &job.case.buggy, &plausible, &log).map_err(|e| e.to_string())
    })();
    if let Err(e) = &result {
        let _ = fs::write(dir.join("error.txt"), format!("{e}\n"));
    }
    result
}

/// Runs every (case, algorithm, repetition) combination into
/// `out/<case>/<algo>/run_<k>/` and writes `out/report.csv`. Run `k` uses
/// seed `base_seed + k`. A run that fails leaves `error.txt` behind and is
/// counted as failed.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentReport, BenchError> {
    spec.validate()?;
    let cases = spec.resolve()?;
    let loaded = cases.iter().map(BenchmarkCase::load).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let mut jobs = Vec::new();
    for case in &loaded {
        for &algo in &spec.algos {
            for k in 0..spec.repetitions {
                jobs.push(Job { case, algo, k });
            }
        }
    }
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(job) = jobs.get(i) else { break };
        if let Err(e) = execute(job, spec, out) {
            failures.lock().expect("lock").push(format!("{}/{}/run_{}: {e}", job.case.case.id, job.algo, job.k));
        }
    };
    std::thread::scope(|s| {
        for _ in 1..spec.workers.max(1) {
            s.spawn(worker);
        }
        worker();
    });
    for f in failures.into_inner().expect("lock") {
        eprintln!("run failed: {f}");
    }

    let pairs: Vec<(String, Algo)> =
        spec.cases.iter().flat_map(|c| spec.algos.iter().map(move |a| (c.clone(), *a))).collect();
    let rows = pairs
        .iter()
        .map(|(case, algo)| aggregate_pair(out, case, *algo, spec.repetitions))
        .collect::<Result<Vec<_>, _>>()?;
    let path = out.join("report.csv");
    fs::write(&path, report_csv(&rows)).map_err(|e| io_err(&path, e))?;
    Ok(ExperimentReport { rows })
}

/// Final plausible count recorded in a run's `summary.csv`.
pub fn final_plausible_count(summary: &Path) -> Result<usize, BenchError> {
    let mut rdr = csv::Reader::from_path(summary).map_err(|e| io_err(summary, e))?;
    let col = rdr
        .headers()
        .map_err(|e| io_err(summary, e))?
        .iter()
        .position(|h| h == "plausible_count")
        .ok_or_else(|| io_err(summary, "no plausible_count column"))?;
    let mut last = None;
    for record in rdr.records() {
        last = Some(record.map_err(|e| io_err(summary, e))?);
    }
    let last = last.ok_or_else(|| io_err(summary, "empty summary"))?;
    last[col].parse().map_err(|e| io_err(summary, e))
}

fn aggregate_runs(counts: &[usize], failed: usize, case: &str, algo: Algo) -> ReportRow {
    let runs = counts.len();
    let mean = if runs == 0 { 0.0 } else { counts.iter().sum::<usize>() as f64 / runs as f64 };
    ReportRow {
        case: case.to_string(),
        algo,
        runs,
        failed,
        mean,
        min: counts.iter().copied().min().unwrap_or(0),
        max: counts.iter().copied().max().unwrap_or(0),
    }
}

fn aggregate_pair(out: &Path, case: &str, algo: Algo, repetitions: usize) -> Result<ReportRow, BenchError> {
    let mut counts = Vec::new();
    let mut failed = 0;
    for k in 0..repetitions {
        let summary = run_dir(out, case, algo, k).join("summary.csv");
        match summary.exists().then(|| final_plausible_count(&summary)) {
            Some(Ok(n)) => counts.push(n),
            _ => failed += 1,
        }
    }
    Ok(aggregate_runs(&counts, failed, case, algo))
}

/// Rebuilds the report from the run directories under `out`.
pub fn aggregate(out: &Path) -> Result<ExperimentReport, BenchError> {
    let mut rows = Vec::new();
    let mut cases: Vec<PathBuf> = read_dirs(out)?;
    cases.sort();
    for case_dir in cases {
        let case = case_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for algo in [Algo::FlowRepair, Algo::Baseline] {
            let algo_dir = case_dir.join(algo.name());
            if !algo_dir.is_dir() {
                continue;
            }
            let mut runs: Vec<PathBuf> = read_dirs(&algo_dir)?;
            runs.sort();
            let mut counts = Vec::new();
            let mut failed = 0;
            for r in runs {
                match final_plausible_count(&r.join("summary.csv")) {
                    Ok(n) => counts.push(n),
                    Err(_) => failed += 1,
                }
            }
            rows.push(aggregate_runs(&counts, failed, &case, algo));
        }
    }
    Ok(ExperimentReport { rows })
}

fn read_dirs(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    Ok(fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect())
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("case,algo,runs,failed,mean,min,max\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.case, r.algo, r.runs, r.failed, r.mean, r.min, r.max);
    }
    out
}

/// Plain-text table: one line per case, average/min/max plausible patches
/// per algorithm.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut algos: Vec<Algo> = rows.iter().map(|r| r.algo).collect();
    algos.sort();
    algos.dedup();
    let mut cases: Vec<&str> = Vec::new();
    for r in rows {
        if !cases.contains(&r.case.as_str()) {
            cases.push(&r.case);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<14}", "case");
    for a in &algos {
        let _ = write!(out, " | {:^22}", a.name());
    }
    out.push('\n');
    let _ = write!(out, "{:<14}", "");
    for _ in &algos {
        let _ = write!(out, " | {:>8} {:>6} {:>6}", "avg", "min", "max");
    }
    out.push('\n');
    for case in cases {
        let _ = write!(out, "{case:<14}");
        for a in &algos {
            match rows.iter().find(|r| r.case == case && r.algo == *a) {
                Some(r) => {
                    let flag = if r.failed > 0 { "*" } else { " " };
                    let _ = write!(out, " | {:>7.1}{flag} {:>6} {:>6}", r.mean, r.min, r.max);
                }
                None => {
                    let _ = write!(out, " | {:>8} {:>6} {:>6}", "-", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    if rows.iter().any(|r| r.failed > 0) {
        out.push_str("* some runs failed and are excluded\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_has_equal_statistics() {
        let r = aggregate_runs(&[4], 0, "c", Algo::FlowRepair);
        assert_eq!((r.mean, r.min, r.max), (4.0, 4, 4));
        let r = aggregate_runs(&[1, 2, 6], 1, "c", Algo::Baseline);
        assert_eq!((r.mean, r.min, r.max, r.runs, r.failed), (3.0, 1, 6, 3, 1));
    }

    #[test]
    fn spec_defaults() {
        let s: ExperimentSpec = serde_json::from_str(r#"{"cases": ["fridge_1"]}"#).unwrap();
        assert_eq!(s.repetitions, 5);
        assert_eq!(s.budget, 120.0);
        assert_eq!(s.algos, [Algo::FlowRepair, Algo::Baseline]);
        s.validate().unwrap();
        let bad = ExperimentSpec { repetitions: 0, ..s };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_layout() {
        let rows = vec![
            aggregate_runs(&[2, 4], 0, "fridge_1", Algo::FlowRepair),
            aggregate_runs(&[1], 1, "fridge_1", Algo::Baseline),
        ];
        let text = format_report(&rows);
        assert!(text.lines().nth(2).unwrap().starts_with("fridge_1"));
        assert!(text.contains("3.0"));
        assert!(text.contains("* some runs failed"));
        assert_eq!(report_csv(&rows).lines().count(), 3);
    }
}
