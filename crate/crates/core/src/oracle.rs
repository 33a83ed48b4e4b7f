//! Test verdicts against a regression oracle and the three repair objectives.
//!
//! For a test of duration `D` sampled every `dt`, a step fails when some
//! output deviates from its expected value beyond tolerance. The objectives
//! are `o1` (time the failure is active, minimize), `o2` (time of the first
//! failing step, maximize) and `o3` (largest deviation, minimize).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Chart, VarKind};
use crate::sim::{read_csv_table, simulate, SignalTrace, SimResult, StimulusSet, TraceError};

/// Default slack for objective comparisons.
pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub expected: Vec<SignalTrace>,
    /// Per-output absolute tolerance; missing entries mean 0. Only applied to
    /// real outputs.
    pub tolerances: BTreeMap<String, f64>,
}

impl Oracle {
    pub fn tolerance(&self, output: &str) -> f64 {
        self.tolerances.get(output).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Passing,
    Failing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub name: String,
    pub kind: TestKind,
    pub stim: StimulusSet,
    pub oracle: Oracle,
}

impl TestCase {
    pub fn duration(&self) -> f64 {
        self.stim.duration
    }

    /// Simulated steps, excluding the initial sample.
    pub fn steps(&self) -> usize {
        self.stim.steps().unwrap_or(0)
    }

    pub fn run(&self, chart: &Chart) -> Verdict {
        match simulate(chart, &self.stim) {
            Ok(result) => verdict(&result, self),
            Err(e) => Verdict::sim_failure(self.duration(), e.to_string()),
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// Seconds during which the failure is active.
    #[serde(rename = "o1")]
    pub o1_failure_active: f64,
    /// Time of the first failing step, or the duration if none.
    #[serde(rename = "o2")]
    pub o2_failure_onset: f64,
    /// Largest deviation; `null` in JSON when the simulation failed.
    #[serde(rename = "o3", with = "inf_as_null")]
    pub o3_severity: f64,
    pub regression: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_error: Option<String>,
}

impl Verdict {
    /// Worst-case verdict for a crashed simulation.
    pub fn sim_failure(duration: f64, message: String) -> Self {
        Verdict {
            pass: false,
            o1_failure_active: duration,
            o2_failure_onset: 0.0,
            o3_severity: f64::INFINITY,
            regression: false,
            sim_error: Some(message),
        }
    }
}

struct Pairing<'a> {
    actual: &'a SignalTrace,
    expected: &'a SignalTrace,
    tol: f64,
}

fn pairings<'a>(result: &'a SimResult, oracle: &'a Oracle) -> Vec<Pairing<'a>> {
    oracle
        .expected
        .iter()
        .filter_map(|expected| {
            let actual = result.output(&expected.name)?;
            Some(Pairing { actual, expected, tol: oracle.tolerance(&expected.name).max(0.0) })
        })
        .collect()
}

fn step_deviation(pairs: &[Pairing<'_>], k: usize) -> f64 {
    use crate::model::Value;
    let mut worst: f64 = 0.0;
    for p in pairs {
        let (Some(&a), Some(&e)) = (p.actual.values.get(k), p.expected.values.get(k)) else {
            continue;
        };
        let d = match (a, e) {
            (Value::Real(_), _) | (_, Value::Real(_)) => ((a.as_f64() - e.as_f64()).abs() - p.tol).max(0.0),
            _ if a == e => 0.0,
            _ => 1.0,
        };
        worst = worst.max(d);
    }
    worst
}

/// Deviation of `result` from `oracle` at step `k`.
pub fn deviation(result: &SimResult, oracle: &Oracle, k: usize) -> f64 {
    step_deviation(&pairings(result, oracle), k)
}

/// Objectives of a simulation result for `tc`. `regression` is left false.
pub fn verdict(result: &SimResult, tc: &TestCase) -> Verdict {
    let pairs = pairings(result, &tc.oracle);
    let dt = tc.stim.dt;
    let duration = tc.duration();
    let mut failing = 0usize;
    let mut onset = None;
    let mut severity: f64 = 0.0;
    for k in 0..=result.steps {
        let d = step_deviation(&pairs, k);
        if d > 0.0 {
            failing += 1;
            onset.get_or_insert(k);
            severity = severity.max(d);
        }
    }
    Verdict {
        pass: failing == 0,
        o1_failure_active: (failing as f64 * dt).min(duration),
        o2_failure_onset: onset.map_or(duration, |k| k as f64 * dt),
        o3_severity: severity,
        regression: false,
        sim_error: None,
    }
}

/// Pareto-style improvement of `candidate` over `reference`: one objective
/// strictly better by more than `eps`, none worse by more than `eps`.
pub fn is_enhanced(candidate: &Verdict, reference: &Verdict, eps: f64) -> bool {
    if candidate.regression || candidate.sim_error.is_some() {
        return false;
    }
    let (c1, c2, c3) = (candidate.o1_failure_active, candidate.o2_failure_onset, candidate.o3_severity);
    let (r1, r2, r3) = (reference.o1_failure_active, reference.o2_failure_onset, reference.o3_severity);
    let better = c1 < r1 - eps || c2 > r2 + eps || c3 < r3 - eps;
    let no_worse = c1 <= r1 + eps && c2 >= r2 - eps && c3 <= r3 + eps;
    better && no_worse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteVerdict {
    /// Verdict on the failing test, with `regression` filled in.
    pub failing: Verdict,
    /// Passing-test verdicts; empty when the failing test still fails.
    pub passing: Vec<Verdict>,
    pub plausible: bool,
    /// Steps simulated across all executed tests.
    pub simulated_steps: usize,
    pub tests_run: usize,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("test suite must have exactly one failing test, found {0}")]
    FailingCount(usize),
    #[error("failing test `{0}` passes on the original chart")]
    FailingPasses(String),
    #[error("passing test `{0}` fails on the original chart")]
    PassingFails(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub failing: TestCase,
    pub passing: Vec<TestCase>,
}

#[derive(Debug, Deserialize)]
struct TestMeta {
    kind: TestKind,
    dt: f64,
    duration: f64,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
}

fn load_err(path: &Path, message: impl ToString) -> SuiteError {
    SuiteError::Load { path: path.to_path_buf(), message: message.to_string() }
}

/// Loads one `<dir>/{stim.csv, expected.csv, test.json}` test, typing the
/// signals with the declarations of `chart`.
pub fn load_test(dir: &Path, chart: &Chart) -> Result<TestCase, SuiteError> {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let meta_path = dir.join("test.json");
    let meta: TestMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| load_err(&meta_path, e))?)
        .map_err(|e| load_err(&meta_path, e))?;
    if let Some((k, _)) = meta.tolerances.iter().find(|(_, t)| !(**t >= 0.0)) {
        return Err(load_err(&meta_path, format!("tolerance for `{k}` must be non-negative")));
    }

    let stim_path = dir.join("stim.csv");
    let input_type = |n: &str| chart.var(n).filter(|v| v.kind == VarKind::Input).map(|v| v.ty);
    let inputs = read_csv_table(&stim_path)
        .and_then(|t| t.to_traces(meta.dt, input_type))
        .map_err(|e: TraceError| load_err(&stim_path, e))?;
    let stim = StimulusSet { dt: meta.dt, duration: meta.duration, inputs };
    let steps = stim.steps().map_err(|e| load_err(&meta_path, e))?;

    let exp_path = dir.join("expected.csv");
    let output_type = |n: &str| chart.var(n).filter(|v| v.kind == VarKind::Output).map(|v| v.ty);
    let table = read_csv_table(&exp_path).map_err(|e| load_err(&exp_path, e))?;
    let expected = table.to_traces(meta.dt, output_type).map_err(|e| load_err(&exp_path, e))?;
    if table.times.len() != steps + 1 {
        return Err(load_err(&exp_path, format!("expected {} samples, found {}", steps + 1, table.times.len())));
    }
    if let Some(dt) = table.dt().map_err(|e| load_err(&exp_path, e))? {
        if (dt - meta.dt).abs() > 1e-9 * meta.dt.max(1.0) {
            return Err(load_err(&exp_path, format!("sampled every {dt}, test dt is {}", meta.dt)));
        }
    }
    if let Some(missing) = chart.vars_of(VarKind::Output).find(|v| expected.iter().all(|t| t.name != v.name)) {
        return Err(load_err(&exp_path, format!("missing output column `{}`", missing.name)));
    }
    Ok(TestCase { name, kind: meta.kind, stim, oracle: Oracle { expected, tolerances: meta.tolerances } })
}

impl TestSuite {
    pub fn new(tests: Vec<TestCase>) -> Result<Self, SuiteError> {
        let (failing, passing): (Vec<_>, Vec<_>) = tests.into_iter().partition(|t| t.kind == TestKind::Failing);
        if failing.len() != 1 {
            return Err(SuiteError::FailingCount(failing.len()));
        }
        Ok(TestSuite { failing: failing.into_iter().next().unwrap(), passing })
    }

    /// Loads every sub-directory of `dir` as a test, in name order, without
    /// checking the kinds against any chart's behavior.
    pub fn load_unchecked(dir: &Path, chart: &Chart) -> Result<Self, SuiteError> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| load_err(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        TestSuite::new(dirs.iter().map(|d| load_test(d, chart)).collect::<Result<_, _>>()?)
    }

    /// Loads the suite and checks that `chart` fails the failing test and
    /// passes the others.
    pub fn load(dir: &Path, chart: &Chart) -> Result<Self, SuiteError> {
        let suite = Self::load_unchecked(dir, chart)?;
        suite.check_kinds(chart)?;
        Ok(suite)
    }

    pub fn check_kinds(&self, chart: &Chart) -> Result<(), SuiteError> {
        if self.failing.run(chart).pass {
            return Err(SuiteError::FailingPasses(self.failing.name.clone()));
        }
        for t in &self.passing {
            if !t.run(chart).pass {
                return Err(SuiteError::PassingFails(t.name.clone()));
            }
        }
        Ok(())
    }

    pub fn tests(&self) -> impl Iterator<Item = &TestCase> {
        std::iter::once(&self.failing).chain(&self.passing)
    }
}

/// Maps `f` over `items` on up to `workers` scoped threads, keeping order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Runs the failing test, and the passing tests only if it passes.
pub fn run_suite(chart: &Chart, suite: &TestSuite) -> SuiteVerdict {
    run_suite_parallel(chart, suite, 1)
}

pub fn run_suite_parallel(chart: &Chart, suite: &TestSuite, workers: usize) -> SuiteVerdict {
    let mut failing = suite.failing.run(chart);
    let mut simulated_steps = suite.failing.steps();
    let mut tests_run = 1;
    let mut passing = Vec::new();
    if failing.pass {
        passing = par_map(&suite.passing, workers, |t| t.run(chart));
        simulated_steps += suite.passing.iter().map(TestCase::steps).sum::<usize>();
        tests_run += suite.passing.len();
        failing.regression = passing.iter().any(|v| !v.pass);
    }
    let plausible = failing.pass && !failing.regression;
    SuiteVerdict { failing, passing, plausible, simulated_steps, tests_run }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Value;

    fn trace(name: &str, values: Vec<Value>) -> SignalTrace {
        SignalTrace { name: name.into(), dt: 0.5, values }
    }

    fn case(expected: Vec<SignalTrace>, tol: f64) -> TestCase {
        let steps = expected[0].values.len() - 1;
        TestCase {
            name: "t".into(),
            kind: TestKind::Failing,
            stim: StimulusSet { dt: 0.5, duration: steps as f64 * 0.5, inputs: vec![] },
            oracle: Oracle { expected, tolerances: [("y".to_string(), tol)].into() },
        }
    }

    fn result(outputs: Vec<SignalTrace>) -> SimResult {
        let steps = outputs[0].values.len() - 1;
        SimResult { outputs, coverage: Default::default(), steps }
    }

    fn reals(v: &[f64]) -> Vec<Value> {
        v.iter().map(|x| Value::Real(*x)).collect()
    }

    #[test]
    fn deviation_encodings() {
        let tc = case(vec![trace("y", reals(&[1.0, 1.0])), trace("b", vec![Value::Bool(true); 2])], 0.2);
        let r = result(vec![trace("y", reals(&[1.0, 1.5])), trace("b", vec![Value::Bool(true), Value::Bool(false)])]);
        assert_eq!(deviation(&r, &tc.oracle, 0), 0.0);
        assert_eq!(deviation(&r, &tc.oracle, 1), 1.0);
        let r = result(vec![trace("y", reals(&[1.0, 1.5])), trace("b", vec![Value::Bool(true); 2])]);
        assert!((deviation(&r, &tc.oracle, 1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn only_final_step_failing() {
        let tc = case(vec![trace("y", reals(&[0.0; 5]))], 0.0);
        let r = result(vec![trace("y", reals(&[0.0, 0.0, 0.0, 0.0, 2.0]))]);
        let v = verdict(&r, &tc);
        assert!(!v.pass);
        assert_eq!((v.o1_failure_active, v.o2_failure_onset, v.o3_severity), (0.5, 2.0, 2.0));
        let ok = verdict(&result(vec![trace("y", reals(&[0.0; 5]))]), &tc);
        assert!(ok.pass);
        assert_eq!((ok.o1_failure_active, ok.o2_failure_onset, ok.o3_severity), (0.0, 2.0, 0.0));
    }

    #[test]
    fn enhancement_relation() {
        let base = Verdict {
            pass: false,
            o1_failure_active: 4.0,
            o2_failure_onset: 1.0,
            o3_severity: 1.0,
            regression: false,
            sim_error: None,
        };
        assert!(!is_enhanced(&base, &base, DEFAULT_EPS));
        let halved = Verdict { o1_failure_active: 2.0, ..base.clone() };
        assert!(is_enhanced(&halved, &base, DEFAULT_EPS));
        assert!(!is_enhanced(&base, &halved, DEFAULT_EPS));
        let mixed = Verdict { o1_failure_active: 2.0, o3_severity: 2.0, ..base.clone() };
        assert!(!is_enhanced(&mixed, &base, DEFAULT_EPS));
        let crashed = Verdict::sim_failure(10.0, "boom".into());
        assert!(!is_enhanced(&crashed, &base, DEFAULT_EPS));
        assert!(is_enhanced(&base, &crashed, DEFAULT_EPS));
        let regressed = Verdict { regression: true, ..halved };
        assert!(!is_enhanced(&regressed, &base, DEFAULT_EPS));
    }

    #[test]
    fn verdict_json_keeps_infinity() {
        let v = Verdict::sim_failure(3.0, "x".into());
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"o3\":null"), "{json}");
        let back: Verdict = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u32> = (0..17).collect();
        assert_eq!(par_map(&xs, 4, |x| x * 2), xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
