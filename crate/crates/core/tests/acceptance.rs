//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 2`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowmend::bench::{build_corpus, run_dir, run_experiment, BenchmarkCase, ExperimentSpec, LoadedCase};
use flowmend::dsl::{parse, serialize};
use flowmend::engine::{run, write_run, Algo, ClockMode, RunConfig, RunLog};
use flowmend::localize::{localize, roulette_select, CoverageMatrix, SuspiciousnessRanking, ROULETTE_FLOOR};
use flowmend::model::{apply_edit, apply_patch, validate, ComponentId, ComponentKind, Patch, Value};
use flowmend::mutate::{applicable_ops, apply_global_mutation, apply_local_mutation};
use flowmend::oracle::{is_enhanced, run_suite, verdict, Oracle, TestCase, TestKind, Verdict, DEFAULT_EPS};
use flowmend::sim::{CoverageTrace, SignalTrace, SimResult, StimulusSet};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Corpus {
    cases: Vec<(LoadedCase, SuspiciousnessRanking)>,
}

impl Corpus {
    fn load() -> Corpus {
        let cases = build_corpus()
            .expect("corpus loads")
            .iter()
            .map(|c: &BenchmarkCase| {
                let loaded = c.load().expect("case loads");
                let ranking = localize(&loaded.buggy, &loaded.suite).expect("case localizes");
                (loaded, ranking)
            })
            .collect();
        Corpus { cases }
    }

    fn get(&self, id: &str) -> &(LoadedCase, SuspiciousnessRanking) {
        self.cases.iter().find(|(c, _)| c.case.id == id).unwrap_or_else(|| panic!("no case {id}"))
    }

    fn ids(&self) -> Vec<String> {
        self.cases.iter().map(|(c, _)| c.case.id.clone()).collect()
    }
}

// 1. Tarantula against a brute-force count over random coverage matrices.

fn criterion_1(_: &Shared) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut exact = 0usize;
    let mut total = 0usize;
    for _ in 0..1000 {
        let tf = rng.random_range(1..=5);
        let tp = rng.random_range(0..=5);
        let n = rng.random_range(1..=12u32);
        let components: Vec<(ComponentId, ComponentKind)> =
            (0..n).map(|i| (ComponentId::state(i), ComponentKind::State)).collect();
        let covered: Vec<Vec<bool>> = (0..tf + tp).map(|_| (0..n).map(|_| rng.random_bool(0.5)).collect()).collect();
        let mut ef = vec![0; n as usize];
        let mut ep = vec![0; n as usize];
        for (t, row) in covered.iter().enumerate() {
            for (i, &hit) in row.iter().enumerate() {
                if hit {
                    if t < tf {
                        ef[i] += 1;
                    } else {
                        ep[i] += 1;
                    }
                }
            }
        }
        let matrix = CoverageMatrix { components, ef: ef.clone(), ep: ep.clone(), tf, tp };
        let ranking = matrix.rank().map_err(|e| e.to_string())?;
        for i in 0..n as usize {
            // ef/tf / (ef/tf + ep/tp) = ef*tp / (ef*tp + ep*tf); with tp = 0 the
            // passing term is 0.
            let (num, den) = if tp == 0 {
                (ef[i], ef[i])
            } else {
                (ef[i] * tp, ef[i] * tp + ep[i] * tf)
            };
            let oracle = if den == 0 { 0.0 } else { num as f64 / den as f64 };
            let got = ranking.score(ComponentId::state(i as u32)).expect("scored");
            worst = worst.max((got - oracle).abs());
            exact += usize::from(got.to_bits() == oracle.to_bits());
            total += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("{total} scores, {exact} bit-identical, max error {worst:e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

// 2. Objective geometry on synthetic failure shapes.

fn shape(dt: f64, steps: usize, from: f64, to: f64, peak: f64) -> Vec<f64> {
    (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            if t + 1e-9 >= from && t <= to + 1e-9 {
                peak
            } else {
                0.0
            }
        })
        .collect()
}

fn shape_verdict(dt: f64, actual: Vec<f64>) -> Verdict {
    let steps = actual.len() - 1;
    let trace = |values: Vec<f64>| SignalTrace { name: "y".into(), dt, values: values.into_iter().map(Value::Real).collect() };
    let tc = TestCase {
        name: "shape".into(),
        kind: TestKind::Failing,
        stim: StimulusSet { dt, duration: steps as f64 * dt, inputs: vec![] },
        // The requirement: y stays within 1.0 of zero.
        oracle: Oracle { expected: vec![trace(vec![0.0; steps + 1])], tolerances: [("y".to_string(), 1.0)].into() },
    };
    verdict(&SimResult { outputs: vec![trace(actual)], coverage: CoverageTrace::default(), steps }, &tc)
}

fn criterion_2(_: &Shared) -> Outcome {
    let start = Instant::now();
    let (dt, steps) = (0.1, 200);
    let (t_ft, t_ff) = (5.0, 12.0);
    let a = shape_verdict(dt, shape(dt, steps, t_ft, t_ff, 3.0));
    let b = shape_verdict(dt, shape(dt, steps, t_ft, 8.0, 3.0));
    let c = shape_verdict(dt, shape(dt, steps, 9.0, t_ff, 3.0));
    let d = shape_verdict(dt, shape(dt, steps, t_ft, t_ff, 2.0));
    let mut fails = Vec::new();
    if ((a.o1_failure_active - (t_ff - t_ft)).abs()) > dt + 1e-9 {
        fails.push(format!("(a) o1 = {}", a.o1_failure_active));
    }
    if (a.o2_failure_onset - t_ft).abs() > dt + 1e-9 {
        fails.push(format!("(a) o2 = {}", a.o2_failure_onset));
    }
    if !(b.o1_failure_active < a.o1_failure_active && b.o2_failure_onset >= a.o2_failure_onset && b.o3_severity <= a.o3_severity) {
        fails.push("(b) not a shorter failure".into());
    }
    if c.o2_failure_onset <= a.o2_failure_onset {
        fails.push("(c) onset not later".into());
    }
    if d.o3_severity >= a.o3_severity {
        fails.push("(d) severity not lower".into());
    }
    for (name, v) in [("b", &b), ("c", &c), ("d", &d)] {
        if !is_enhanced(v, &a, DEFAULT_EPS) {
            fails.push(format!("({name}) does not enhance (a)"));
        }
    }
    if is_enhanced(&a, &a, DEFAULT_EPS) {
        fails.push("(a) enhances itself".into());
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        fails.push("too slow".into());
    }
    check(
        fails.is_empty(),
        if fails.is_empty() {
            format!(
                "a=({:.1},{:.1},{:.1}) b.o1={:.1} c.o2={:.1} d.o3={:.1}, {:.3}s",
                a.o1_failure_active,
                a.o2_failure_onset,
                a.o3_severity,
                b.o1_failure_active,
                c.o2_failure_onset,
                d.o3_severity,
                elapsed.as_secs_f64()
            )
        } else {
            fails.join("; ")
        },
    )
}

// 3. Global mutations are valid and replay exactly.

fn criterion_3(shared: &Shared) -> Outcome {
    let start = Instant::now();
    let mut charts: Vec<(&str, &flowmend::model::Chart, &SuspiciousnessRanking)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (case, ranking) in &shared.corpus.cases {
        if seen.insert(serialize(&case.buggy)) {
            charts.push((&case.case.id, &case.buggy, ranking));
        }
    }
    let mut bad = Vec::new();
    let mut total = 0;
    for (i, (id, chart, ranking)) in charts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        for _ in 0..10_000 {
            total += 1;
            match apply_global_mutation(chart, ranking, &mut rng) {
                Ok(out) => {
                    if !validate(&out.variant).is_empty() {
                        bad.push(format!("{id}: invalid variant from {:?}", out.edit));
                    } else if apply_edit(chart, &out.edit).as_ref() != Ok(&out.variant) {
                        bad.push(format!("{id}: replay differs for {:?}", out.edit));
                    }
                }
                Err(e) => bad.push(format!("{id}: {e}")),
            }
            if bad.len() > 3 {
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        bad.is_empty() && elapsed < Duration::from_secs(60),
        if bad.is_empty() {
            format!("{total} mutations over {} charts, all valid and replayable, {:.1}s", charts.len(), elapsed.as_secs_f64())
        } else {
            bad.join("; ")
        },
    )
}

// 4. Local-policy operator reuse and roulette frequencies.

fn criterion_4(shared: &Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pool = Vec::new();
    for (case, _) in &shared.corpus.cases {
        for (id, _) in case.buggy.components() {
            let ops = applicable_ops(&case.buggy, id);
            if ops.len() >= 2 {
                for op in ops {
                    pool.push((&case.buggy, id, op));
                }
            }
        }
    }
    let n = 10_000;
    let mut same = 0;
    for _ in 0..n {
        let (chart, id, op) = pool[rng.random_range(0..pool.len())];
        let out = apply_local_mutation(chart, id, op, &mut rng).map_err(|e| e.to_string())?;
        same += usize::from(out.operator == op);
    }
    let same_freq = same as f64 / n as f64;

    let (_, ranking) = shared.corpus.get("fridge_1");
    let draws = 100_000;
    let mut counts: HashMap<ComponentId, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(roulette_select(ranking, &mut rng)).or_default() += 1;
    }
    let total: f64 = ranking.entries().iter().map(|e| e.score + ROULETTE_FLOOR).sum();
    let worst = ranking
        .entries()
        .iter()
        .map(|e| {
            let expected = (e.score + ROULETTE_FLOOR) / total;
            let got = *counts.get(&e.component).unwrap_or(&0) as f64 / draws as f64;
            (got - expected).abs()
        })
        .fold(0.0, f64::max);
    check(
        (same_freq - 0.5).abs() <= 0.02 && worst <= 0.01,
        format!("same-operator frequency {same_freq:.4} over {n}; roulette max deviation {worst:.4} over {draws} draws"),
    )
}

// Shared experiment for criteria 5, 7 and 8.

struct Shared {
    corpus: Corpus,
    experiment: Option<(tempfile::TempDir, ExperimentSpec)>,
}

impl Shared {
    fn experiment(&mut self) -> Result<(&Path, &ExperimentSpec), String> {
        if self.experiment.is_none() {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let spec = ExperimentSpec {
                cases: self.corpus.ids(),
                repetitions: 5,
                budget: 120.0,
                algos: vec![Algo::FlowRepair, Algo::Baseline],
                base_seed: 0,
                local_tries: 30,
                corpus: None,
                clock: ClockMode::Virtual,
                workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            let start = Instant::now();
            run_experiment(&spec, dir.path()).map_err(|e| e.to_string())?;
            println!(
                "  (corpus experiment: {} cases x 5 runs x 2 algorithms at 120 s budget, {:.0}s wall)",
                spec.cases.len(),
                start.elapsed().as_secs_f64()
            );
            self.experiment = Some((dir, spec));
        }
        let (dir, spec) = self.experiment.as_ref().expect("just set");
        Ok((dir.path(), spec))
    }
}

fn read_log(dir: &Path) -> Result<RunLog, String> {
    let path = dir.join("run_log.json");
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn patch_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir.join("patches"))
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    files.retain(|p| p.to_string_lossy().ends_with(".patch.json"));
    files.sort();
    files
}

/// Runs (of `reps`) that found at least one plausible patch.
fn successes(out: &Path, case: &str, algo: Algo, reps: usize) -> Result<usize, String> {
    let mut n = 0;
    for k in 0..reps {
        n += usize::from(!read_log(&run_dir(out, case, algo, k))?.plausible.is_empty());
    }
    Ok(n)
}

fn criterion_5(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let (out, spec) = shared.experiment()?;
    let (out, reps) = (out.to_path_buf(), spec.repetitions);
    let mut parts = Vec::new();
    let mut ok = true;
    let mut replayed = 0;
    for case in ["fridge_1", "door_2", "fridge_2a"] {
        let (loaded, _) = shared.corpus.get(case);
        let wins = successes(&out, case, Algo::FlowRepair, reps)?;
        ok &= wins >= 4;
        parts.push(format!("{case} {wins}/{reps}"));
        for k in 0..reps {
            for file in patch_files(&run_dir(&out, case, Algo::FlowRepair, k)) {
                let text = fs::read_to_string(&file).map_err(|e| e.to_string())?;
                let patch: Patch = serde_json::from_str(&text).map_err(|e| e.to_string())?;
                let chart = apply_patch(&loaded.buggy, &patch).map_err(|e| format!("{}: {e}", file.display()))?;
                if !run_suite(&chart, &loaded.suite).plausible {
                    ok = false;
                    parts.push(format!("{} does not replay", file.display()));
                }
                replayed += 1;
            }
        }
    }
    parts.push(format!("{replayed} archived patches replayed plausible"));
    ok &= start.elapsed() < Duration::from_secs(3600);
    check(ok, parts.join(", "))
}

fn criterion_6(shared: &Shared) -> Outcome {
    let start = Instant::now();
    let (loaded, ranking) = shared.corpus.get("fridge_2");
    let mut wins = 0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let cfg = RunConfig { budget: 600.0, seed, ..RunConfig::default() };
        let (plausible, log) = run(&loaded.buggy, &loaded.suite, ranking, &cfg).map_err(|e| e.to_string())?;
        let multi = plausible
            .iter()
            .filter(|e| e.patch.edits.iter().map(|ed| ed.target).collect::<BTreeSet<_>>().len() >= 2)
            .count();
        wins += usize::from(multi > 0);
        details.push(format!("{multi}/{}", plausible.len()));
        let _ = log;
    }
    check(
        wins >= 3 && start.elapsed() < Duration::from_secs(3600),
        format!(
            "fridge_2 at 600 s: {wins}/5 runs with a multi-component plausible patch (per run multi/all: {}), {:.0}s",
            details.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_7(shared: &mut Shared) -> Outcome {
    let (out, spec) = shared.experiment()?;
    let (out, reps) = (out.to_path_buf(), spec.repetitions);
    let mut plausible = 0;
    let mut min_candidates = usize::MAX;
    for algo in [Algo::FlowRepair, Algo::Baseline] {
        for k in 0..reps {
            let log = read_log(&run_dir(&out, "pacemaker_2", algo, k))?;
            plausible += log.plausible.len();
            min_candidates = min_candidates.min(log.candidates.len());
        }
    }
    check(
        plausible == 0 && min_candidates >= 500,
        format!("pacemaker_2: {plausible} plausible patches over {} runs, at least {min_candidates} candidates per run", 2 * reps),
    )
}

fn criterion_8(shared: &mut Shared) -> Outcome {
    let ids = shared.corpus.ids();
    let two_step: Vec<String> =
        shared.corpus.cases.iter().filter(|(c, _)| c.case.faults >= 2).map(|(c, _)| c.case.id.clone()).collect();
    let (out, spec) = shared.experiment()?;
    let (out, reps) = (out.to_path_buf(), spec.repetitions);
    let mut solved = [0usize; 2];
    let mut table = Vec::new();
    let mut strictly_better = Vec::new();
    for id in &ids {
        let f = successes(&out, id, Algo::FlowRepair, reps)?;
        let b = successes(&out, id, Algo::Baseline, reps)?;
        solved[0] += usize::from(f > 0);
        solved[1] += usize::from(b > 0);
        table.push(format!("{id} {f}/{b}"));
        if two_step.contains(id) && f > b {
            strictly_better.push(id.clone());
        }
    }
    check(
        solved[0] >= solved[1] && !strictly_better.is_empty(),
        format!(
            "cases solved flowrepair {} vs baseline {}; two-fault cases won: {:?}; runs won per case (flowrepair/baseline): {}",
            solved[0],
            solved[1],
            strictly_better,
            table.join(", ")
        ),
    )
}

// 9. Same seed, same bytes.

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.ends_with("run_log.json") || p.ends_with("summary.csv") {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9(shared: &Shared) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (loaded, ranking) = shared.corpus.get("door_1");
    let mut mismatches = Vec::new();
    for algo in [Algo::FlowRepair, Algo::Baseline] {
        let cfg = RunConfig { budget: 60.0, seed: 42, algo, ..RunConfig::default() };
        for rep in ["a", "b"] {
            let (plausible, log) = run(&loaded.buggy, &loaded.suite, ranking, &cfg).map_err(|e| e.to_string())?;
            write_run(&tmp.path().join(format!("{algo}_{rep}")), &loaded.buggy, &plausible, &log)
                .map_err(|e| e.to_string())?;
        }
    }
    let spec = ExperimentSpec {
        cases: vec!["fridge_1".into(), "fridge_2".into()],
        repetitions: 2,
        budget: 20.0,
        algos: vec![Algo::FlowRepair, Algo::Baseline],
        base_seed: 9,
        local_tries: 30,
        corpus: None,
        clock: ClockMode::Virtual,
        workers: 1,
    };
    for rep in ["exp_a", "exp_b"] {
        run_experiment(&spec, &tmp.path().join(rep)).map_err(|e| e.to_string())?;
    }
    let pairs = [("flowrepair_a", "flowrepair_b"), ("baseline_a", "baseline_b"), ("exp_a", "exp_b")];
    let mut compared = 0;
    for (x, y) in pairs {
        let (dx, dy) = (tmp.path().join(x), tmp.path().join(y));
        let files = files_under(&dx);
        if files != files_under(&dy) {
            mismatches.push(format!("{x}/{y}: different file sets"));
            continue;
        }
        for f in files {
            compared += 1;
            if fs::read(dx.join(&f)).ok() != fs::read(dy.join(&f)).ok() {
                mismatches.push(format!("{x}/{}", f.display()));
            }
        }
    }
    check(
        mismatches.is_empty() && compared >= 20,
        if mismatches.is_empty() {
            format!("{compared} run_log.json/summary.csv pairs byte-identical")
        } else {
            format!("differs: {}", mismatches.join(", "))
        },
    )
}

// 10. parse/serialize fixpoint.

fn criterion_10(shared: &Shared) -> Outcome {
    let mut bad = Vec::new();
    let mut charts = 0;
    for (case, _) in &shared.corpus.cases {
        for chart in [&case.buggy, &case.fixed] {
            charts += 1;
            let text = serialize(chart);
            match parse(&text) {
                Ok(back) if back == *chart && serialize(&back) == text => {}
                _ => bad.push(case.case.id.clone()),
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut variants = 0;
    while variants < 1000 {
        let (case, ranking) = &shared.corpus.cases[rng.random_range(0..shared.corpus.cases.len())];
        let mut chart = case.buggy.clone();
        for _ in 0..rng.random_range(1..=3) {
            if let Ok(out) = apply_global_mutation(&chart, ranking, &mut rng) {
                chart = out.variant;
            }
        }
        variants += 1;
        let text = serialize(&chart);
        match parse(&text) {
            Ok(back) if serialize(&back) == text => {}
            Ok(_) => bad.push(format!("variant of {} not a fixpoint", case.case.id)),
            Err(d) => bad.push(format!("variant of {} does not parse: {}", case.case.id, d[0])),
        }
        if bad.len() > 3 {
            break;
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{charts} corpus charts and {variants} mutated variants roundtrip")
        } else {
            bad.join("; ")
        },
    )
}

const NAMES: [&str; 10] = [
    "tarantula oracle equivalence",
    "objective geometry",
    "mutation validity fuzz",
    "local-policy statistics",
    "single-fault repair",
    "multi-fault repair",
    "negative control",
    "flowrepair vs baseline",
    "determinism",
    "dsl roundtrip",
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut shared = Shared { corpus: Corpus::load(), experiment: None };
    let mut failed = 0;
    for n in 1..=10 {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let outcome = match n {
            1 => criterion_1(&shared),
            2 => criterion_2(&shared),
            3 => criterion_3(&shared),
            4 => criterion_4(&shared),
            5 => criterion_5(&mut shared),
            6 => criterion_6(&shared),
            7 => criterion_7(&mut shared),
            8 => criterion_8(&mut shared),
            9 => criterion_9(&shared),
            _ => criterion_10(&shared),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {}: {detail} [{secs:.1}s]", NAMES[n - 1]),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {}: {detail} [{secs:.1}s]", NAMES[n - 1]);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
