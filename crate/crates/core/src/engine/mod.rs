//! Archive-based repair search and the (1+1) evolutionary baseline.
//!
//! The search keeps two archives: partial patches (variants that improve the
//! failing test's objectives without worsening any) and plausible patches
//! (variants passing the whole suite). Each global iteration mutates a
//! uniformly chosen partial patch at a roulette-selected component. When
//! that yields a new partial patch, a local phase keeps mutating the same
//! component until `local_tries` consecutive attempts fail to improve.

mod clock;
mod output;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::serialize;
use crate::localize::SuspiciousnessRanking;
use crate::model::{Chart, ComponentId, Edit, Patch};
use crate::mutate::{apply_global_mutation, apply_local_mutation, MutationError, MutationOutcome, OperatorKind};
use crate::oracle::{is_enhanced, run_suite_parallel, SuiteVerdict, TestSuite, Verdict, DEFAULT_EPS};

pub use clock::{Clock, ClockMode, CostModel};
pub use output::{summary_rows, write_run, SummaryRow};

/// Consecutive mutation failures after which a run gives up.
const MAX_MUTATION_FAILURES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    FlowRepair,
    Baseline,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::FlowRepair => "flowrepair",
            Algo::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flowrepair" => Ok(Algo::FlowRepair),
            "baseline" => Ok(Algo::Baseline),
            other => Err(format!("unknown algorithm `{other}` (expected flowrepair or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seconds of search, measured by `clock`.
    pub budget: f64,
    pub local_tries: usize,
    pub eps: f64,
    pub seed: u64,
    pub algo: Algo,
    /// Worker threads for passing tests. Results do not depend on it.
    pub parallelism: usize,
    pub clock: ClockMode,
    pub cost: CostModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget: 120.0,
            local_tries: 30,
            eps: DEFAULT_EPS,
            seed: 0,
            algo: Algo::FlowRepair,
            parallelism: 1,
            clock: ClockMode::Virtual,
            cost: CostModel::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("the failing test passes on the original chart")]
    SuiteInvalid,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub patch: Patch,
    pub verdict: Verdict,
    /// Index of the partial-archive entry this one was derived from.
    pub lineage: Option<usize>,
    pub found_at: f64,
    #[serde(skip)]
    pub chart: Option<Arc<Chart>>,
}

impl ArchiveEntry {
    /// The patched chart. Entries read back from JSON carry no chart.
    pub fn chart(&self) -> Option<&Chart> {
        self.chart.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Plausible,
    Partial,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Global,
    Local,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub t: f64,
    pub phase: Phase,
    /// Partial-archive index of the mutated model.
    pub parent: usize,
    pub operator: OperatorKind,
    pub component: ComponentId,
    pub edit: Edit,
    pub verdict: Verdict,
    pub classification: Classification,
    /// Already present in the archive it qualified for.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub duplicate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub algo: Algo,
    pub seed: u64,
    pub budget: f64,
    pub local_tries: usize,
    pub clock: ClockMode,
    pub original_verdict: Verdict,
    pub candidates: Vec<CandidateRecord>,
    pub mutation_failures: usize,
    pub elapsed: f64,
    pub plausible: Vec<ArchiveEntry>,
    pub partial: Vec<ArchiveEntry>,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serializes")
    }
}

struct Search<'a> {
    suite: &'a TestSuite,
    ranking: &'a SuspiciousnessRanking,
    cfg: &'a RunConfig,
    clock: Clock,
    rng: ChaCha8Rng,
    partial: Vec<ArchiveEntry>,
    partial_keys: HashSet<String>,
    plausible: Vec<ArchiveEntry>,
    plausible_keys: HashSet<String>,
    candidates: Vec<CandidateRecord>,
    mutation_failures: usize,
    consecutive_failures: usize,
}

/// What happened to one evaluated candidate.
enum Step {
    Plausible,
    /// New partial patch at this archive index.
    Improved(usize),
    Other,
}

impl<'a> Search<'a> {
    fn new(
        original: &Chart,
        suite: &'a TestSuite,
        ranking: &'a SuspiciousnessRanking,
        cfg: &'a RunConfig,
    ) -> Result<(Self, Verdict), RepairError> {
        if !(cfg.budget >= 0.0) {
            return Err(RepairError::Config("budget must be non-negative".into()));
        }
        if cfg.local_tries == 0 {
            return Err(RepairError::Config("local_tries must be at least 1".into()));
        }
        let mut search = Search {
            suite,
            ranking,
            cfg,
            clock: Clock::start(cfg.clock, cfg.cost),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            partial: Vec::new(),
            partial_keys: HashSet::new(),
            plausible: Vec::new(),
            plausible_keys: HashSet::new(),
            candidates: Vec::new(),
            mutation_failures: 0,
            consecutive_failures: 0,
        };
        let verdict = search.evaluate(original);
        if verdict.failing.pass {
            return Err(RepairError::SuiteInvalid);
        }
        search.partial_keys.insert(serialize(original));
        search.partial.push(ArchiveEntry {
            patch: Patch::default(),
            verdict: verdict.failing.clone(),
            lineage: None,
            found_at: 0.0,
            chart: Some(Arc::new(original.clone())),
        });
        Ok((search, verdict.failing))
    }

    fn evaluate(&mut self, chart: &Chart) -> SuiteVerdict {
        let v = run_suite_parallel(chart, self.suite, self.cfg.parallelism);
        self.clock.charge(v.tests_run, v.simulated_steps);
        v
    }

    fn out_of_time(&self) -> bool {
        self.clock.now() >= self.cfg.budget || self.consecutive_failures >= MAX_MUTATION_FAILURES
    }

    fn mutation_failed(&mut self) {
        self.mutation_failures += 1;
        self.consecutive_failures += 1;
    }

    /// Evaluates a mutation of partial entry `parent` and files the result.
    fn consider(&mut self, parent: usize, m: MutationOutcome, phase: Phase) -> Step {
        self.consecutive_failures = 0;
        let verdict = self.evaluate(&m.variant);
        let t = self.clock.now();
        let entry = ArchiveEntry {
            patch: self.partial[parent].patch.with(m.edit.clone()),
            verdict: verdict.failing.clone(),
            lineage: Some(parent),
            found_at: t,
            chart: Some(Arc::new(m.variant.clone())),
        };
        let (classification, duplicate, step) = if verdict.plausible {
            let duplicate = !self.plausible_keys.insert(serialize(&m.variant));
            if !duplicate {
                self.plausible.push(entry);
            }
            (Classification::Plausible, duplicate, Step::Plausible)
        } else if is_enhanced(&verdict.failing, &self.partial[parent].verdict, self.cfg.eps) {
            let key = serialize(&m.variant);
            let duplicate = self.partial_keys.contains(&key);
            let step = if duplicate {
                Step::Other
            } else {
                match self.cfg.algo {
                    Algo::FlowRepair => {
                        self.partial_keys.insert(key);
                        self.partial.push(entry);
                        Step::Improved(self.partial.len() - 1)
                    }
                    Algo::Baseline => {
                        self.partial_keys = HashSet::from([key]);
                        self.partial[0] = entry;
                        Step::Improved(0)
                    }
                }
            };
            (Classification::Partial, duplicate, step)
        } else {
            (Classification::Rejected, false, Step::Other)
        };
        self.candidates.push(CandidateRecord {
            t,
            phase,
            parent,
            operator: m.operator,
            component: m.component,
            edit: m.edit,
            verdict: verdict.failing,
            classification,
            duplicate,
        });
        step
    }

    fn chart_of(&self, index: usize) -> Arc<Chart> {
        self.partial[index].chart.clone().expect("archive entries keep their chart")
    }

    fn local_phase(&mut self, mut base: usize, component: ComponentId, mut last_op: OperatorKind) {
        let mut tries = 0;
        while tries < self.cfg.local_tries {
            if self.out_of_time() {
                return;
            }
            let chart = self.chart_of(base);
            let m = match apply_local_mutation(&chart, component, last_op, &mut self.rng) {
                Ok(m) => m,
                Err(MutationError::ComponentVanished(_)) | Err(MutationError::NothingApplicable) => return,
            };
            let op = m.operator;
            match self.consider(base, m, Phase::Local) {
                Step::Improved(index) => {
                    base = index;
                    last_op = op;
                    tries = 0;
                }
                Step::Plausible | Step::Other => tries += 1,
            }
        }
    }

    fn run_flowrepair(&mut self) {
        while !self.out_of_time() {
            let parent = self.rng.random_range(0..self.partial.len());
            let chart = self.chart_of(parent);
            let m = match apply_global_mutation(&chart, self.ranking, &mut self.rng) {
                Ok(m) => m,
                Err(_) => {
                    self.mutation_failed();
                    continue;
                }
            };
            let (component, op) = (m.component, m.operator);
            if let Step::Improved(index) = self.consider(parent, m, Phase::Global) {
                self.local_phase(index, component, op);
            }
        }
    }

    fn run_baseline(&mut self) {
        while !self.out_of_time() {
            let chart = self.chart_of(0);
            match apply_global_mutation(&chart, self.ranking, &mut self.rng) {
                Ok(m) => {
                    self.consider(0, m, Phase::Global);
                }
                Err(_) => self.mutation_failed(),
            }
        }
    }

    fn finish(self, cfg: &RunConfig, original_verdict: Verdict) -> (Vec<ArchiveEntry>, RunLog) {
        let log = RunLog {
            algo: cfg.algo,
            seed: cfg.seed,
            budget: cfg.budget,
            local_tries: cfg.local_tries,
            clock: cfg.clock,
            original_verdict,
            candidates: self.candidates,
            mutation_failures: self.mutation_failures,
            elapsed: self.clock.now(),
            plausible: self.plausible.clone(),
            partial: self.partial,
        };
        (self.plausible, log)
    }
}

/// Runs the configured algorithm. `ranking` should come from localizing the
/// original chart.
pub fn run(
    original: &Chart,
    suite: &TestSuite,
    ranking: &SuspiciousnessRanking,
    cfg: &RunConfig,
) -> Result<(Vec<ArchiveEntry>, RunLog), RepairError> {
    let (mut search, original_verdict) = Search::new(original, suite, ranking, cfg)?;
    match cfg.algo {
        Algo::FlowRepair => search.run_flowrepair(),
        Algo::Baseline => search.run_baseline(),
    }
    Ok(search.finish(cfg, original_verdict))
}

/// Archive-based global/local search.
pub fn repair(
    original: &Chart,
    suite: &TestSuite,
    ranking: &SuspiciousnessRanking,
    cfg: &RunConfig,
) -> Result<(Vec<ArchiveEntry>, RunLog), RepairError> {
    run(original, suite, ranking, &RunConfig { algo: Algo::FlowRepair, ..cfg.clone() })
}

/// (1+1) evolutionary baseline: one incumbent, replaced on every
/// enhancement, no local phase.
pub fn repair_baseline(
    original: &Chart,
    suite: &TestSuite,
    ranking: &SuspiciousnessRanking,
    cfg: &RunConfig,
) -> Result<(Vec<ArchiveEntry>, RunLog), RepairError> {
    run(original, suite, ranking, &RunConfig { algo: Algo::Baseline, ..cfg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_names_roundtrip() {
        for a in [Algo::FlowRepair, Algo::Baseline] {
            assert_eq!(a.name().parse::<Algo>(), Ok(a));
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("ga".parse::<Algo>().is_err());
    }

    fn fridge_1() -> (crate::bench::LoadedCase, SuspiciousnessRanking) {
        let case = crate::bench::build_corpus().unwrap().into_iter().find(|c| c.id == "fridge_1").unwrap();
        let loaded = case.load().unwrap();
        let ranking = crate::localize::localize(&loaded.buggy, &loaded.suite).unwrap();
        (loaded, ranking)
    }

    #[test]
    fn exhausted_budget_yields_nothing() {
        let (case, ranking) = fridge_1();
        let cfg = RunConfig { budget: 0.001, ..RunConfig::default() };
        let (plausible, log) = run(&case.buggy, &case.suite, &ranking, &cfg).unwrap();
        assert!(plausible.is_empty());
        assert!(log.candidates.is_empty());
        assert_eq!(log.partial.len(), 1);
    }

    #[test]
    fn bad_configuration_and_invalid_suites_are_rejected() {
        let (case, ranking) = fridge_1();
        let bad = RunConfig { budget: -1.0, ..RunConfig::default() };
        assert!(matches!(run(&case.buggy, &case.suite, &ranking, &bad), Err(RepairError::Config(_))));
        let bad = RunConfig { local_tries: 0, ..RunConfig::default() };
        assert!(matches!(run(&case.buggy, &case.suite, &ranking, &bad), Err(RepairError::Config(_))));
        let cfg = RunConfig::default();
        assert!(matches!(run(&case.fixed, &case.suite, &ranking, &cfg), Err(RepairError::SuiteInvalid)));
    }

    #[test]
    fn seeded_relational_bug_is_repaired_and_archives_are_consistent() {
        let (case, ranking) = fridge_1();
        let cfg = RunConfig { seed: 42, ..RunConfig::default() };
        let (plausible, log) = repair(&case.buggy, &case.suite, &ranking, &cfg).unwrap();
        assert!(!plausible.is_empty());
        assert!(plausible.iter().any(|e| {
            crate::dsl::render_diff(&case.buggy, e.chart().unwrap()).contains("CLOSE_NORM -> CLOSE_HOT")
        }));
        let mut keys = HashSet::new();
        for e in &plausible {
            let chart = crate::model::apply_patch(&case.buggy, &e.patch).unwrap();
            assert_eq!(&chart, e.chart().unwrap());
            assert!(crate::oracle::run_suite(&chart, &case.suite).plausible);
            assert!(keys.insert(serialize(&chart)), "duplicate plausible patch");
        }
        // Every partial entry improves on the entry it was derived from.
        assert_eq!(log.partial[0].lineage, None);
        for (i, e) in log.partial.iter().enumerate().skip(1) {
            let parent = e.lineage.expect("derived entries have a parent");
            assert!(parent < i);
            assert!(is_enhanced(&e.verdict, &log.partial[parent].verdict, cfg.eps));
        }
        assert!(log.candidates.windows(2).all(|w| w[0].t <= w[1].t));
        // The budget is checked before each candidate, so only the last one
        // may finish past it.
        assert!(log.candidates.windows(2).all(|w| w[0].t <= cfg.budget));
    }

    #[test]
    fn baseline_keeps_a_single_incumbent_and_never_searches_locally() {
        let (case, ranking) = fridge_1();
        let cfg = RunConfig { budget: 30.0, seed: 5, ..RunConfig::default() };
        let (_, log) = repair_baseline(&case.buggy, &case.suite, &ranking, &cfg).unwrap();
        assert_eq!(log.partial.len(), 1);
        assert!(log.candidates.iter().all(|c| c.phase == Phase::Global && c.parent == 0));
    }

    #[test]
    fn results_do_not_depend_on_parallelism() {
        let (case, ranking) = fridge_1();
        let one = RunConfig { budget: 10.0, seed: 8, ..RunConfig::default() };
        let four = RunConfig { parallelism: 4, ..one.clone() };
        let (_, a) = run(&case.buggy, &case.suite, &ranking, &one).unwrap();
        let (_, b) = run(&case.buggy, &case.suite, &ranking, &four).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
