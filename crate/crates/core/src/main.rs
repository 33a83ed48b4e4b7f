use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowmend::bench::{aggregate, format_report, run_experiment, BenchError, ExperimentSpec};
use flowmend::dsl::{parse_file, Diagnostic};
use flowmend::engine::{run, write_run, Algo, ClockMode, RepairError, RunConfig};
use flowmend::localize::localize;
use flowmend::model::{Chart, VarKind};
use flowmend::oracle::TestSuite;
use flowmend::sim::{read_csv_table, simulate, write_csv, SimError, StimulusSet};

#[derive(Parser)]
#[command(name = "flowmend", version, about = "Search-based repair of timed statecharts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a chart.
    Check { model: PathBuf },
    /// Simulate a chart against a stimulus CSV and write its outputs.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        stim: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Simulation step; defaults to the stimulus sampling step.
        #[arg(long)]
        dt: Option<f64>,
        /// Defaults to the last stimulus time.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Rank chart components by Tarantula suspiciousness.
    Localize {
        model: PathBuf,
        #[arg(long)]
        tests: PathBuf,
        #[arg(long, default_value = "suspiciousness.json")]
        out: PathBuf,
    },
    /// Search for patches that make the test suite pass.
    Repair {
        model: PathBuf,
        #[arg(long)]
        tests: PathBuf,
        /// Search budget in seconds.
        #[arg(long, default_value_t = 120.0)]
        budget: f64,
        #[arg(long, default_value_t = 30)]
        local_tries: usize,
        /// Overridden by FLOWMEND_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "flowrepair")]
        algo: Algo,
        #[arg(long, default_value = "virtual")]
        clock: ClockMode,
        /// Threads used to run passing tests.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a multi-case, multi-seed experiment.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the runs of an experiment directory.
    Report { dir: PathBuf },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn input(e: impl ToString) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn diagnostics(d: Vec<Diagnostic>) -> Failure {
    Failure::Input(d.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))
}

fn load_chart(path: &Path) -> Result<Chart, Failure> {
    parse_file(path).map_err(diagnostics)
}

fn check(model: &Path) -> Outcome {
    let c = load_chart(model)?;
    println!("{}: ok ({} states, {} transitions)", c.name, c.states.len(), c.transitions.len());
    Ok(())
}

fn simulate_cmd(model: &Path, stim: &Path, out: &Path, dt: Option<f64>, duration: Option<f64>) -> Outcome {
    let chart = load_chart(model)?;
    let table = read_csv_table(stim).map_err(|e| input(format!("{}: {e}", stim.display())))?;
    let sample_dt = table.dt().map_err(|e| input(format!("{}: {e}", stim.display())))?;
    let dt = dt.or(sample_dt).unwrap_or(0.1);
    let type_of = |n: &str| chart.var(n).filter(|v| v.kind == VarKind::Input).map(|v| v.ty);
    let inputs = table.to_traces(dt, type_of).map_err(|e| input(format!("{}: {e}", stim.display())))?;
    let duration = duration.unwrap_or(*table.times.last().expect("non-empty table"));
    let result = simulate(&chart, &StimulusSet { dt, duration, inputs }).map_err(|e| match e {
        SimError::InputMismatch(_) | SimError::BadTiming(_) => input(e),
        other => runtime(other),
    })?;
    let file = std::fs::File::create(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    write_csv(file, &result.outputs).map_err(runtime)?;
    Ok(())
}

fn localize_cmd(model: &Path, tests: &Path, out: &Path) -> Outcome {
    let chart = load_chart(model)?;
    let suite = TestSuite::load_unchecked(tests, &chart).map_err(input)?;
    let ranking = localize(&chart, &suite).map_err(runtime)?;
    std::fs::write(out, ranking.to_json() + "\n").map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    for e in ranking.entries().iter().take(5) {
        println!("{:>5} {:<28} {:.3}", e.component.to_string(), chart.label(e.component), e.score);
    }
    Ok(())
}

fn seed_from_env(default: u64) -> Result<u64, Failure> {
    match std::env::var("FLOWMEND_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| input(format!("FLOWMEND_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(default),
    }
}

fn repair_cmd(model: &Path, tests: &Path, cfg: RunConfig, out: &Path) -> Outcome {
    let chart = load_chart(model)?;
    let suite = TestSuite::load(tests, &chart).map_err(input)?;
    let ranking = localize(&chart, &suite).map_err(runtime)?;
    let (plausible, log) = run(&chart, &suite, &ranking, &cfg).map_err(|e| match e {
        RepairError::SuiteInvalid | RepairError::Config(_) => input(e),
    })?;
    write_run(out, &chart, &plausible, &log).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    println!(
        "{} plausible patch(es) from {} candidates in {:.1}s (seed {})",
        plausible.len(),
        log.candidates.len(),
        log.elapsed,
        cfg.seed
    );
    Ok(())
}

fn bench_failure(e: BenchError) -> Failure {
    input(e)
}

fn experiment_cmd(spec: &Path, out: &Path) -> Outcome {
    let spec = ExperimentSpec::from_file(spec).map_err(bench_failure)?;
    let report = run_experiment(&spec, out).map_err(bench_failure)?;
    print!("{}", format_report(&report.rows));
    Ok(())
}

fn report_cmd(dir: &Path) -> Outcome {
    let report = aggregate(dir).map_err(bench_failure)?;
    if report.rows.is_empty() {
        return Err(input(format!("{}: no runs found", dir.display())));
    }
    print!("{}", format_report(&report.rows));
    Ok(())
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Check { model } => check(&model),
        Command::Simulate { model, stim, out, dt, duration } => simulate_cmd(&model, &stim, &out, dt, duration),
        Command::Localize { model, tests, out } => localize_cmd(&model, &tests, &out),
        Command::Repair { model, tests, budget, local_tries, seed, algo, clock, parallelism, out } => {
            let cfg = RunConfig {
                budget,
                local_tries,
                seed: seed_from_env(seed)?,
                algo,
                clock,
                parallelism: parallelism.max(1),
                ..RunConfig::default()
            };
            repair_cmd(&model, &tests, cfg, &out)
        }
        Command::Experiment { spec, out } => experiment_cmd(&spec, &out),
        Command::Report { dir } => report_cmd(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
