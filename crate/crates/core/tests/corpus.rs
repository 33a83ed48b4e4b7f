//! Corpus integrity and hand-stepped simulation examples.

use flowmend::bench::build_corpus;
use flowmend::dsl::{parse, parse_file, serialize};
use flowmend::model::{ComponentId, Value};
use flowmend::oracle::run_suite;
use flowmend::sim::{simulate, SignalTrace, SimResult, StimulusSet};

const FRIDGE: &str = include_str!("../../../corpus/fridge_1.fixed.chart");

fn fridge_run(door: impl Fn(f64) -> bool, temp: impl Fn(f64) -> f64, duration: f64) -> SimResult {
    let dt = 0.1;
    let n = (duration / dt).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let inputs = vec![
        SignalTrace { name: "DOOR".into(), dt, values: times.iter().map(|&t| Value::Bool(door(t))).collect() },
        SignalTrace { name: "TEMP".into(), dt, values: times.iter().map(|&t| Value::Real(temp(t))).collect() },
    ];
    simulate(&parse(FRIDGE).unwrap(), &StimulusSet { dt, duration, inputs }).unwrap()
}

fn first_true(result: &SimResult, output: &str) -> Option<usize> {
    result.output(output).unwrap().values.iter().position(|v| *v == Value::Bool(true))
}

#[test]
fn every_case_has_a_plausible_fix_and_a_failing_bug() {
    let cases = build_corpus().unwrap();
    assert!(cases.len() >= 6);
    for case in cases {
        let loaded = case.load().unwrap_or_else(|e| panic!("{}: {e}", case.id));
        assert!(run_suite(&loaded.fixed, &loaded.suite).plausible, "{}: fixed chart not plausible", case.id);
        let buggy = run_suite(&loaded.buggy, &loaded.suite);
        assert!(!buggy.plausible && !buggy.failing.pass, "{}: buggy chart passes", case.id);
        assert_ne!(loaded.buggy, loaded.fixed);
    }
}

#[test]
fn corpus_files_are_canonical() {
    for case in build_corpus().unwrap() {
        for path in [&case.buggy, &case.fixed] {
            let chart = parse_file(path).unwrap();
            let text = serialize(&chart);
            assert_eq!(parse(&text).unwrap(), chart, "{}", path.display());
            assert_eq!(serialize(&parse(&text).unwrap()), text);
        }
    }
}

#[test]
fn multi_fault_case_differs_in_two_components() {
    let cases = build_corpus().unwrap();
    let two = cases.iter().find(|c| c.id == "fridge_2").unwrap();
    assert_eq!(two.faults, 2);
    let loaded = two.load().unwrap();
    let (b, f) = (serialize(&loaded.buggy), serialize(&loaded.fixed));
    let changed = b.lines().zip(f.lines()).filter(|(x, y)| x != y).count();
    assert_eq!(changed, 2);
}

#[test]
fn ramp_turns_cooling_on_after_the_hot_threshold() {
    // TEMP = 1 + 7t/60 first exceeds 5.0 at t = 34.3.
    let r = fridge_run(|_| false, |t| 1.0 + 7.0 * t / 60.0, 60.0);
    assert_eq!(first_true(&r, "COLD"), Some(343));
    assert!(r.coverage.executed_states.contains(&ComponentId::state(0)));
    assert!(r.coverage.executed_states.contains(&ComponentId::state(1)));
    assert_eq!(first_true(&r, "ALARM"), None);
}

#[test]
fn open_door_raises_the_alarm_after_fifteen_seconds() {
    let r = fridge_run(|_| true, |_| 2.0, 20.0);
    // OPEN is entered at step 1; the timer reaches 15 s at t = 15.1.
    assert_eq!(first_true(&r, "LIGHT"), Some(1));
    assert_eq!(first_true(&r, "ALARM"), Some(151));
    assert!(r.coverage.executed_states.contains(&ComponentId::state(3)));
}

#[test]
fn simulation_is_deterministic() {
    let a = fridge_run(|t| (10.0..30.0).contains(&t), |t| 2.0 + (t / 7.0).sin() * 4.0, 60.0);
    let b = fridge_run(|t| (10.0..30.0).contains(&t), |t| 2.0 + (t / 7.0).sin() * 4.0, 60.0);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}
