//! Command-line front end of the `dtemt` simulator.
//!
//! * `run` simulates a scenario and writes the trajectory CSV and a run
//!   summary JSON.
//! * `bench` searches the admissible step of each method, order and tolerance
//!   against a stored benchmark trajectory.
//! * `compare` reports the maximum absolute deviation between two trajectory
//!   files.
//!
//! Exit codes: 0 success, 1 usage or invalid input, 2 simulation or
//! comparison failure, 3 I/O failure. `DTEMT_THREADS` caps the number of
//! benchmark cells searched in parallel.

mod table;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dtemt::scenario::{parse_config, shipped_two_area, Scenario, ScenarioConfig};
use dtemt::solvers::{
    admissible_step_search, error_report, simulate_with, Method, SolverConfig, StepSearch,
};
use rayon::prelude::*;
use serde::Serialize;

pub use table::{read_run, CsvWriter};

/// Environment variable capping benchmark parallelism.
pub const THREADS_VAR: &str = "DTEMT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dtemt", version, about = "EMT simulation with a differential transformation integrator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write its trajectory.
    Run(RunArgs),
    /// Search admissible steps against a benchmark trajectory.
    Bench(BenchArgs),
    /// Maximum absolute deviation between two trajectory files.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Differential transformation: a truncated Taylor series per step.
    Dt,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
    /// Modified Euler (Heun) predictor-corrector.
    Me,
    /// Implicit trapezoidal rule with Newton iteration.
    Trap,
}

#[derive(Debug, Args)]
struct ScenarioArg {
    /// Scenario JSON file; the bundled two-area fault study when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Integration method; the scenario default when omitted.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Series order, DT only.
    #[arg(long)]
    order: Option<usize>,
    /// Fixed step in seconds.
    #[arg(long)]
    step: Option<f64>,
    /// Start time in seconds; the system is initialized in steady state here.
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Keep every n-th grid point; event and limiter points are always kept.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Newton tolerance of the trapezoidal rule.
    #[arg(long, default_value_t = 1e-8)]
    trap_tol: f64,
    /// Ignore the scenario's fault events.
    #[arg(long)]
    no_events: bool,
    /// Trajectory CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Run summary JSON; defaults to the CSV path with a `.json` extension.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Benchmark trajectory CSV, e.g. from `run --method rk4 --step 1e-6`;
    /// its time span is the span searched.
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dt")]
    methods: Vec<MethodArg>,
    /// DT orders, required when `dt` is among the methods.
    #[arg(long, value_delimiter = ',')]
    orders: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1e-3")]
    tolerances: Vec<f64>,
    /// Smallest step tried, in seconds.
    #[arg(long, default_value_t = 2e-6)]
    h_min: f64,
    /// Largest step tried, in seconds.
    #[arg(long, default_value_t = 1e-3)]
    h_max: f64,
    /// Step lattice spacing, in seconds.
    #[arg(long, default_value_t = 2e-6)]
    resolution: f64,
    #[arg(long, default_value_t = 1e-8)]
    trap_tol: f64,
    /// Report CSV to write; a JSON copy goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Trajectory to check.
    result: PathBuf,
    /// Reference trajectory, interpolated onto the times of `result`.
    reference: PathBuf,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command with its exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Simulation(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Simulation(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Simulation(e) | Failure::Io(e) => e,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

/// Classify a simulator error by the exit code it maps to.
fn core_failure(e: dtemt::Error) -> Failure {
    use dtemt::Error as E;
    match e {
        E::Io { .. } => Failure::Io(e.into()),
        E::Parse { .. } | E::Config { .. } | E::UnknownNode(_) | E::InvalidParameter { .. } | E::Solver(_) => {
            Failure::Usage(e.into())
        }
        _ => Failure::Simulation(e.into()),
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Io(e.into())
}

/// Parse `args` (program name first), execute the command and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.code()
        }
    }
}

fn load_scenario(arg: &ScenarioArg) -> Result<ScenarioConfig, Failure> {
    match &arg.scenario {
        Some(path) => parse_config(path).map_err(core_failure),
        None => Ok(shipped_two_area()),
    }
}

fn method_of(arg: MethodArg, order: Option<usize>, trap_tol: f64) -> Result<Method, Failure> {
    match (arg, order) {
        (MethodArg::Dt, Some(order)) => Ok(Method::Dt { order }),
        (MethodArg::Dt, None) => Err(usage("--method dt needs --order")),
        (_, Some(_)) => Err(usage("--order applies to --method dt only")),
        (MethodArg::Rk4, None) => Ok(Method::Rk4),
        (MethodArg::Me, None) => Ok(Method::ModifiedEuler),
        (MethodArg::Trap, None) => Ok(Method::Trapezoidal {
            tol: trap_tol,
            max_iter: 20,
        }),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(io_failure)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("cannot write `{}`", path.display()))
        .map_err(io_failure)
}

#[derive(Debug, Serialize)]
struct RunSummaryFile<'a> {
    scenario: &'a str,
    solver: &'a SolverConfig,
    events: bool,
    output: String,
    rows: usize,
    steps_taken: usize,
    t_final: f64,
    wall_time_s: f64,
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let config = load_scenario(&a.scenario)?;
    let defaults = config.solver.to_config();
    let method = match a.method {
        Some(m) => method_of(m, a.order, a.trap_tol)?,
        None => match (defaults.method, a.order) {
            (Method::Dt { .. }, Some(order)) => Method::Dt { order },
            (_, Some(_)) => return Err(usage("--order applies to --method dt only")),
            (m, None) => m,
        },
    };
    let solver = SolverConfig {
        method,
        step: a.step.unwrap_or(defaults.step),
        t_start: a.t_start.unwrap_or(defaults.t_start),
        t_end: a.t_end.unwrap_or(defaults.t_end),
        record_every: a.record_every,
    };
    solver.validate().map_err(core_failure)?;
    let scenario = Scenario::build(&config, solver.t_start).map_err(core_failure)?;
    let system = if a.no_events {
        scenario.system.without_events()
    } else {
        scenario.system.clone()
    };
    let names = dtemt::solvers::OdeSystem::state_names(&system);
    let mut writer = CsvWriter::create(&a.out, &names, solver.record_every).map_err(io_failure)?;
    let summary = simulate_with(&system, &scenario.x0, &solver, &mut writer).map_err(core_failure)?;
    let rows = writer
        .finish()
        .with_context(|| format!("cannot write `{}`", a.out.display()))
        .map_err(io_failure)?;
    if !summary.completed {
        return Err(io_failure(anyhow!("writing `{}` stopped early", a.out.display())));
    }
    let summary_path = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    write_json(
        &summary_path,
        &RunSummaryFile {
            scenario: &config.name,
            solver: &solver,
            events: !a.no_events,
            output: a.out.display().to_string(),
            rows,
            steps_taken: summary.steps_taken,
            t_final: summary.t_final,
            wall_time_s: summary.wall_time,
        },
    )?;
    println!(
        "{}: {} steps, {rows} rows in {:.3} s -> {}",
        method.label(),
        summary.steps_taken,
        summary.wall_time,
        a.out.display()
    );
    Ok(())
}

/// One cell of the benchmark report.
#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    method: &'static str,
    order: Option<usize>,
    tolerance: f64,
    /// Admissible step in microseconds; `None` when no lattice step passes.
    step_us: Option<f64>,
    max_abs_error: Option<f64>,
    wall_time_s: Option<f64>,
    runs: usize,
}

#[derive(Debug, Serialize)]
struct BenchReport<'a> {
    scenario: &'a str,
    benchmark: String,
    t_start: f64,
    t_end: f64,
    h_min: f64,
    h_max: f64,
    resolution: f64,
    rows: Vec<BenchRow>,
}

fn thread_count() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Failure> {
    if a.methods.is_empty() {
        return Err(usage("--methods is empty"));
    }
    if a.tolerances.is_empty() || a.tolerances.iter().any(|t| !(*t > 0.0)) {
        return Err(usage("--tolerances must list positive values"));
    }
    let wants_dt = a.methods.contains(&MethodArg::Dt);
    if wants_dt && a.orders.is_empty() {
        return Err(usage("--orders is required when dt is benchmarked"));
    }
    if !wants_dt && !a.orders.is_empty() {
        return Err(usage("--orders applies to dt only"));
    }
    if a.orders.contains(&0) {
        return Err(usage("DT orders must be at least 1"));
    }
    let mut methods = Vec::new();
    for &m in &a.methods {
        if m == MethodArg::Dt {
            methods.extend(a.orders.iter().map(|&order| Method::Dt { order }));
        } else {
            methods.push(method_of(m, None, a.trap_tol)?);
        }
    }
    let search = StepSearch {
        h_min: a.h_min,
        h_max: a.h_max,
        resolution: a.resolution,
    };
    if !(search.resolution > 0.0 && search.h_min > 0.0 && search.h_max >= search.h_min) {
        return Err(usage("need 0 < --h-min <= --h-max and --resolution > 0"));
    }
    let threads = thread_count()?;

    let config = load_scenario(&a.scenario)?;
    let bench = read_run(&a.benchmark).map_err(io_failure)?;
    if bench.len() < 2 {
        return Err(Failure::Simulation(anyhow!("benchmark `{}` has fewer than two rows", a.benchmark.display())));
    }
    let (t_start, t_end) = (bench.times[0], *bench.times.last().unwrap());
    let scenario = Scenario::build(&config, t_start).map_err(core_failure)?;

    let cells: Vec<(Method, f64)> =
        methods.iter().flat_map(|m| a.tolerances.iter().map(move |t| (*m, *t))).collect();
    let run_cell = |&(method, tolerance): &(Method, f64)| -> Result<BenchRow, Failure> {
        let found = admissible_step_search(&scenario.system, &scenario.x0, method, t_start, t_end, &bench, tolerance, search);
        let row = |step_us, err, wall, runs| BenchRow {
            method: method.label(),
            order: method.order(),
            tolerance,
            step_us,
            max_abs_error: err,
            wall_time_s: wall,
            runs,
        };
        match found {
            Ok(s) => Ok(row(Some(s.step * 1e6), Some(s.max_abs_error).filter(|e| e.is_finite()), Some(s.wall_time), s.runs)),
            Err(dtemt::Error::NoAdmissibleStep { .. }) => Ok(row(None, None, None, 0)),
            Err(e) => Err(core_failure(e)),
        }
    };
    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Simulation(e.into()))?;
    let rows = pool.install(|| cells.par_iter().map(run_cell).collect::<Result<Vec<_>, _>>())?;

    let mut text = String::from("method,order,tolerance,step_us,max_abs_error,wall_time_s,runs\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{:e},{},{},{},{}\n",
            r.method,
            r.order.map_or_else(String::new, |o| o.to_string()),
            r.tolerance,
            fmt_opt(r.step_us),
            fmt_opt(r.max_abs_error),
            fmt_opt(r.wall_time_s),
            r.runs
        ));
    }
    std::fs::write(&a.out, &text)
        .with_context(|| format!("cannot write `{}`", a.out.display()))
        .map_err(io_failure)?;
    let report = BenchReport {
        scenario: &config.name,
        benchmark: a.benchmark.display().to_string(),
        t_start,
        t_end,
        h_min: search.h_min,
        h_max: search.h_max,
        resolution: search.resolution,
        rows: rows.clone(),
    };
    write_json(&a.out.with_extension("json"), &report)?;

    println!("{:<6}{:>6}{:>10}{:>12}{:>14}{:>10}", "method", "order", "tol", "step (us)", "max error", "time (s)");
    for r in &rows {
        println!(
            "{:<6}{:>6}{:>10.0e}{:>12}{:>14}{:>10}",
            r.method,
            r.order.map_or_else(|| "-".into(), |o| o.to_string()),
            r.tolerance,
            r.step_us.map_or_else(|| "none".into(), |s| format!("{s:.0}")),
            r.max_abs_error.map_or_else(|| "-".into(), |e| format!("{e:.2e}")),
            r.wall_time_s.map_or_else(|| "-".into(), |w| format!("{w:.2}")),
        );
    }
    println!("{} cells in {:.1} s -> {}", rows.len(), started.elapsed().as_secs_f64(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareReport {
    max_abs_error: f64,
    worst_state: String,
    time_of_worst: f64,
    per_state: Vec<(String, f64)>,
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    let result = read_run(&a.result).map_err(io_failure)?;
    let reference = read_run(&a.reference).map_err(io_failure)?;
    let mut names_a = result.names.clone();
    let mut names_b = reference.names.clone();
    names_a.sort();
    names_b.sort();
    if names_a != names_b {
        let missing: Vec<&String> = result.names.iter().filter(|n| !reference.names.contains(n)).collect();
        let extra: Vec<&String> = reference.names.iter().filter(|n| !result.names.contains(n)).collect();
        return Err(Failure::Simulation(anyhow!(
            "state sets differ: {} only in `{}`, {} only in `{}`",
            missing.len(),
            a.result.display(),
            extra.len(),
            a.reference.display()
        )));
    }
    let report = error_report(&result, &reference).map_err(core_failure)?;
    let worst = result.names[report.worst_state].clone();
    println!("max abs error {:.6e} in {worst} at t = {:.9} s", report.max_abs_error, report.time_of_worst);
    if let Some(path) = &a.out {
        let mut per_state: Vec<(String, f64)> = result.names.iter().cloned().zip(report.per_state.iter().copied()).collect();
        per_state.sort_by(|x, y| y.1.total_cmp(&x.1));
        write_json(
            path,
            &CompareReport {
                max_abs_error: report.max_abs_error,
                worst_state: worst,
                time_of_worst: report.time_of_worst,
                per_state,
            },
        )?;
    }
    Ok(())
}
