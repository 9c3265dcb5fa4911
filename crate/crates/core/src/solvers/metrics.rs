//! Error against a fine-step benchmark and the admissible-step search.

use std::ops::ControlFlow;

use super::{simulate_with, Method, Observer, RunResult, Sample, SampleKind, SolverConfig, TaylorModel};
use crate::{Error, Result};

/// Time stamps closer than this are treated as the same instant.
pub const TIME_MATCH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Before,
    After,
}

/// Samples a recorded benchmark at arbitrary times by cubic interpolation
/// through the four nearest rows, never across an event.
///
/// Columns are matched by name, so the benchmark may order states
/// differently from the run being checked.
pub struct BenchmarkSampler<'a> {
    bench: &'a RunResult,
    columns: Vec<usize>,
}

impl<'a> BenchmarkSampler<'a> {
    pub fn new(bench: &'a RunResult, names: &[String]) -> Result<Self> {
        if bench.len() < 2 {
            return Err(Error::Benchmark("benchmark needs at least two samples".into()));
        }
        if names.len() != bench.dim() {
            return Err(Error::Benchmark(format!(
                "run has {} states, benchmark has {}",
                names.len(),
                bench.dim()
            )));
        }
        let columns = names
            .iter()
            .map(|n| {
                bench
                    .index_of(n)
                    .ok_or_else(|| Error::Benchmark(format!("state `{n}` missing from benchmark")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bench, columns })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.bench.times[0], *self.bench.times.last().unwrap())
    }

    fn sample_side(&self, t: f64, side: Side, out: &mut [f64]) -> Result<()> {
        let times = &self.bench.times;
        let first = times.partition_point(|&bt| bt < t - TIME_MATCH);
        if first < times.len() && (times[first] - t).abs() <= TIME_MATCH {
            let row = match side {
                Side::Before => first,
                Side::After => {
                    let mut j = first;
                    while j + 1 < times.len() && (times[j + 1] - t).abs() <= TIME_MATCH {
                        j += 1;
                    }
                    j
                }
            };
            let r = self.bench.row(row);
            for (o, &c) in out.iter_mut().zip(&self.columns) {
                *o = r[c];
            }
            return Ok(());
        }
        if first == 0 || first >= times.len() {
            let (a, b) = self.span();
            return Err(Error::Benchmark(format!(
                "t = {t} s lies outside the benchmark span [{a}, {b}]"
            )));
        }
        // widen [first - 1, first] to up to four rows without crossing a
        // duplicated time stamp
        let joined = |j: usize| times[j + 1] - times[j] > TIME_MATCH;
        let (mut lo, mut hi) = (first - 1, first);
        while hi - lo < 3 {
            let can_lo = lo > 0 && joined(lo - 1);
            let can_hi = hi + 1 < times.len() && joined(hi);
            match (can_lo, can_hi) {
                (true, true) if first - 1 - lo <= hi - first => lo -= 1,
                (_, true) => hi += 1,
                (true, false) => lo -= 1,
                (false, false) => break,
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in lo..=hi {
            let w: f64 = (lo..=hi).filter(|&m| m != j).map(|m| (t - times[m]) / (times[j] - times[m])).product();
            let r = self.bench.row(j);
            for (o, &c) in out.iter_mut().zip(&self.columns) {
                *o += w * r[c];
            }
        }
        Ok(())
    }

    /// Benchmark state at `t`; at an event time this is the post-event state.
    pub fn sample(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.sample_side(t, Side::After, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs_error: f64,
    /// Index of the state with the largest deviation.
    pub worst_state: usize,
    pub time_of_worst: f64,
    /// Largest deviation of each state.
    pub per_state: Vec<f64>,
}

/// Detailed comparison of `result` against `bench` at the result's time stamps.
pub fn error_report(result: &RunResult, bench: &RunResult) -> Result<ErrorReport> {
    let sampler = BenchmarkSampler::new(bench, &result.names)?;
    let n = result.dim();
    let mut buf = vec![0.0; n];
    let mut report = ErrorReport {
        max_abs_error: 0.0,
        worst_state: 0,
        time_of_worst: result.times.first().copied().unwrap_or(0.0),
        per_state: vec![0.0; n],
    };
    for i in 0..result.len() {
        let t = result.times[i];
        let side = if i + 1 < result.len() && (result.times[i + 1] - t).abs() <= TIME_MATCH {
            Side::Before
        } else {
            Side::After
        };
        sampler.sample_side(t, side, &mut buf)?;
        for (j, (a, b)) in result.row(i).iter().zip(&buf).enumerate() {
            let e = (a - b).abs();
            if e.is_nan() {
                return Err(Error::Benchmark(format!("NaN in `{}` at t = {t}", result.names[j])));
            }
            if e > report.per_state[j] {
                report.per_state[j] = e;
            }
            if e > report.max_abs_error {
                report.max_abs_error = e;
                report.worst_state = j;
                report.time_of_worst = t;
            }
        }
    }
    Ok(report)
}

/// Maximum absolute deviation over all states and result time stamps.
pub fn max_abs_error(result: &RunResult, bench: &RunResult) -> Result<f64> {
    Ok(error_report(result, bench)?.max_abs_error)
}

/// Tracks the running maximum error of a simulation against a benchmark and
/// stops the run once it exceeds `tolerance`.
pub struct ErrorObserver<'a> {
    sampler: BenchmarkSampler<'a>,
    tolerance: f64,
    buf: Vec<f64>,
    pub max_abs_error: f64,
    pub time_of_worst: f64,
    pub error: Option<Error>,
}

impl<'a> ErrorObserver<'a> {
    pub fn new(bench: &'a RunResult, names: &[String], tolerance: f64) -> Result<Self> {
        Ok(Self {
            sampler: BenchmarkSampler::new(bench, names)?,
            tolerance,
            buf: vec![0.0; names.len()],
            max_abs_error: 0.0,
            time_of_worst: f64::NAN,
            error: None,
        })
    }

    pub fn exceeded(&self) -> bool {
        self.max_abs_error > self.tolerance
    }
}

impl Observer for ErrorObserver<'_> {
    fn observe(&mut self, s: &Sample<'_>) -> ControlFlow<()> {
        let side = if s.kind == SampleKind::PreEvent {
            Side::Before
        } else {
            Side::After
        };
        if let Err(e) = self.sampler.sample_side(s.t, side, &mut self.buf) {
            self.error = Some(e);
            return ControlFlow::Break(());
        }
        for (a, b) in s.x.iter().zip(&self.buf) {
            let e = (a - b).abs();
            if !(e <= self.max_abs_error) {
                self.max_abs_error = if e.is_nan() { f64::INFINITY } else { e };
                self.time_of_worst = s.t;
            }
        }
        if self.exceeded() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

/// Search range for [`admissible_step_search`]; steps are multiples of
/// `resolution`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSearch {
    pub h_min: f64,
    pub h_max: f64,
    pub resolution: f64,
}

impl Default for StepSearch {
    fn default() -> Self {
        Self {
            h_min: 2e-6,
            h_max: 1e-3,
            resolution: 2e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleStep {
    pub step: f64,
    /// Error of the run at `step`; NaN when no run was needed.
    pub max_abs_error: f64,
    pub wall_time: f64,
    /// Number of simulations performed by the search.
    pub runs: usize,
}

struct Trial {
    pass: bool,
    error: f64,
    wall_time: f64,
}

fn trial<S: TaylorModel + Clone>(
    system: &S,
    x0: &[f64],
    config: &SolverConfig,
    bench: &RunResult,
    tolerance: f64,
) -> Result<Trial> {
    let names = system.state_names();
    let mut obs = ErrorObserver::new(bench, &names, tolerance)?;
    match simulate_with(system, x0, config, &mut obs) {
        Ok(summary) => {
            if let Some(e) = obs.error {
                return Err(e);
            }
            Ok(Trial {
                pass: summary.completed && !obs.exceeded(),
                error: obs.max_abs_error,
                wall_time: summary.wall_time,
            })
        }
        // a run that blows up or fails to converge does not meet any tolerance
        Err(Error::Step { .. } | Error::Newton { .. } | Error::Series(_) | Error::Singular { .. }) => {
            Ok(Trial {
                pass: false,
                error: f64::INFINITY,
                wall_time: 0.0,
            })
        }
        Err(e) => Err(e),
    }
}

/// Largest step on the search lattice whose run stays within `tolerance` of
/// `bench`, found by bisection.
#[allow(clippy::too_many_arguments)]
pub fn admissible_step_search<S: TaylorModel + Clone>(
    system: &S,
    x0: &[f64],
    method: Method,
    t_start: f64,
    t_end: f64,
    bench: &RunResult,
    tolerance: f64,
    search: StepSearch,
) -> Result<AdmissibleStep> {
    let res = search.resolution;
    if !(res > 0.0 && search.h_min > 0.0 && search.h_max >= search.h_min) {
        return Err(Error::Solver(format!("invalid step search range {search:?}")));
    }
    let n_min = ((search.h_min / res) - 1e-9).ceil().max(1.0) as usize;
    let n_max = ((search.h_max / res) + 1e-9).floor() as usize;
    if n_max < n_min {
        return Err(Error::Solver(format!("empty step lattice for {search:?}")));
    }
    if tolerance.is_infinite() && tolerance > 0.0 {
        return Ok(AdmissibleStep {
            step: n_max as f64 * res,
            max_abs_error: f64::NAN,
            wall_time: 0.0,
            runs: 0,
        });
    }
    let mut runs = 0;
    let mut run = |n: usize| {
        runs += 1;
        let cfg = SolverConfig::new(method, n as f64 * res, t_start, t_end);
        trial(system, x0, &cfg, bench, tolerance)
    };
    let top = run(n_max)?;
    if top.pass {
        return Ok(AdmissibleStep {
            step: n_max as f64 * res,
            max_abs_error: top.error,
            wall_time: top.wall_time,
            runs,
        });
    }
    let mut best = run(n_min)?;
    if !best.pass {
        return Err(Error::NoAdmissibleStep {
            h_min: n_min as f64 * res,
            h_max: n_max as f64 * res,
            tolerance,
        });
    }
    let (mut lo, mut hi) = (n_min, n_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let t = run(mid)?;
        if t.pass {
            lo = mid;
            best = t;
        } else {
            hi = mid;
        }
    }
    Ok(AdmissibleStep {
        step: lo as f64 * res,
        max_abs_error: best.error,
        wall_time: best.wall_time,
        runs,
    })
}
