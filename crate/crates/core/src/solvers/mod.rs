//! Time integration: the multi-stage DT method and numerical baselines.
//!
//! Models implement [`OdeSystem`] (right-hand side, hard bounds, switching
//! events) and, for the DT method, [`TaylorModel`], which builds the Taylor
//! coefficients of every state about an expansion point. [`simulate`] marches
//! a fixed grid `t_n = t_start + n·h`, splitting steps exactly at events and,
//! for DT, at limiter crossings.

mod explicit;
mod metrics;
mod taylor;
mod trapezoidal;

use std::ops::ControlFlow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use explicit::{modified_euler_step, rk4_step};
pub use metrics::{
    admissible_step_search, error_report, max_abs_error, AdmissibleStep, BenchmarkSampler,
    ErrorObserver, ErrorReport, StepSearch,
};
pub use taylor::dt_step;
pub use trapezoidal::{trapezoidal_step, Trapezoidal};

/// States whose magnitude beyond this is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// A first-order ODE system `dx/dt = f(t, x)` with optional switching events.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn state_names(&self) -> Vec<String>;

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Limiter decisions at `(t, x)`; empty when the system has none.
    fn switches(&self, _t: f64, _x: &[f64]) -> Result<Vec<bool>> {
        Ok(Vec::new())
    }

    /// Right-hand side with the limiter decisions held at `switches`, as
    /// returned by [`switches`](Self::switches).
    fn rhs_held(&self, t: f64, x: &[f64], _switches: &[bool], dx: &mut [f64]) -> Result<()> {
        self.rhs(t, x, dx)
    }

    /// Enforce hard state bounds after a step.
    fn project(&self, _x: &mut [f64]) {}

    /// Sorted event times.
    fn event_times(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Apply event `index` of [`event_times`](Self::event_times) and fix up
    /// the state for the new topology.
    fn apply_event(&mut self, _index: usize, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

/// Hard bound on one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBound {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

/// A system that can produce Taylor coefficients of its states.
pub trait TaylorModel: OdeSystem {
    type Workspace;

    fn workspace(&self, order: usize) -> Self::Workspace;

    /// Build coefficients `0..=K` of every state about `(t0, x0)`.
    fn expand(&self, ws: &mut Self::Workspace, t0: f64, x0: &[f64]) -> Result<()>;

    /// Evaluate all state series at offset `h`.
    fn evaluate(&self, ws: &Self::Workspace, h: f64, x: &mut [f64]);

    /// Coefficients of state `index` from the last expansion.
    fn series<'w>(&self, ws: &'w Self::Workspace, index: usize) -> &'w [f64];

    fn bounds(&self) -> Vec<StateBound> {
        Vec::new()
    }

    /// Series of the unclamped rate of bounded state `index` when the last
    /// expansion held it on a limit.
    fn clamped_rate<'w>(&self, _ws: &'w Self::Workspace, _index: usize) -> Option<&'w [f64]> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Dt { order: usize },
    Rk4,
    ModifiedEuler,
    Trapezoidal { tol: f64, max_iter: usize },
}

impl Method {
    pub fn trapezoidal() -> Self {
        Method::Trapezoidal {
            tol: 1e-8,
            max_iter: 20,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Dt { .. } => "dt",
            Method::Rk4 => "rk4",
            Method::ModifiedEuler => "me",
            Method::Trapezoidal { .. } => "trap",
        }
    }

    pub fn order(&self) -> Option<usize> {
        match self {
            Method::Dt { order } => Some(*order),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub step: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Keep every n-th grid point; event and limiter points are always kept.
    pub record_every: usize,
}

impl SolverConfig {
    pub fn new(method: Method, step: f64, t_start: f64, t_end: f64) -> Self {
        Self {
            method,
            step,
            t_start,
            t_end,
            record_every: 1,
        }
    }

    pub fn with_record_every(mut self, n: usize) -> Self {
        self.record_every = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Solver(format!("step must be positive, got {}", self.step)));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::Solver(format!(
                "t_end ({}) must exceed t_start ({})",
                self.t_end, self.t_start
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Solver("record_every must be at least 1".into()));
        }
        match self.method {
            Method::Dt { order } if order == 0 => {
                Err(Error::Solver("DT order must be at least 1".into()))
            }
            Method::Trapezoidal { tol, max_iter } if !(tol > 0.0) || max_iter == 0 => Err(
                Error::Solver("trapezoidal tolerance and iteration cap must be positive".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Where a sample sits relative to the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Initial,
    Grid(usize),
    /// State just before an event at this time.
    PreEvent,
    /// State just after an event at this time.
    PostEvent,
    /// End of a partial step at a limiter crossing.
    Limiter,
    /// Last grid point of the run.
    Final,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub kind: SampleKind,
}

/// Receives every accepted step; `Break` stops the run early.
pub trait Observer {
    fn observe(&mut self, sample: &Sample<'_>) -> ControlFlow<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub wall_time: f64,
    pub steps_taken: usize,
    pub t_final: f64,
    /// `false` when an observer stopped the run.
    pub completed: bool,
}

/// Recorded trajectories of a run.
///
/// Times are non-decreasing. At an event the state before and after the
/// switch is stored under the same time stamp, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub times: Vec<f64>,
    /// Row-major `[time × state]`.
    pub states: Vec<f64>,
    pub names: Vec<String>,
    pub wall_time: f64,
    pub steps_taken: usize,
}

impl RunResult {
    pub fn empty(names: Vec<String>) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            names,
            wall_time: 0.0,
            steps_taken: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.states[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index_of(name)?;
        Some((0..self.len()).map(|i| self.row(i)[j]).collect())
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.row(self.len() - 1))
    }
}

struct Recorder {
    result: RunResult,
    every: usize,
}

impl Observer for Recorder {
    fn observe(&mut self, s: &Sample<'_>) -> ControlFlow<()> {
        let keep = match s.kind {
            SampleKind::Grid(n) => n % self.every == 0,
            _ => true,
        };
        if keep {
            self.result.push(s.t, s.x);
        }
        ControlFlow::Continue(())
    }
}

/// Run `system` from `x0` and record the trajectory.
pub fn simulate<S>(system: &S, x0: &[f64], config: &SolverConfig) -> Result<RunResult>
where
    S: TaylorModel + Clone,
{
    config.validate()?;
    let steps = ((config.t_end - config.t_start) / config.step).ceil() as usize;
    let mut result = RunResult::empty(system.state_names());
    let rows = steps / config.record_every + 2 + 2 * system.event_times().len();
    result.times.reserve(rows);
    result.states.reserve(rows * system.dim());
    let mut rec = Recorder {
        result,
        every: config.record_every,
    };
    let summary = simulate_with(system, x0, config, &mut rec)?;
    let mut result = rec.result;
    result.wall_time = summary.wall_time;
    result.steps_taken = summary.steps_taken;
    Ok(result)
}

enum Stepper<S: TaylorModel> {
    Dt(S::Workspace),
    Rk4(explicit::Scratch),
    ModifiedEuler(explicit::Scratch),
    Trapezoidal(Trapezoidal),
}

impl<S: TaylorModel> Stepper<S> {
    fn new(system: &S, method: Method) -> Self {
        let n = system.dim();
        match method {
            Method::Dt { order } => Stepper::Dt(system.workspace(order)),
            Method::Rk4 => Stepper::Rk4(explicit::Scratch::new(n, 4)),
            Method::ModifiedEuler => Stepper::ModifiedEuler(explicit::Scratch::new(n, 2)),
            Method::Trapezoidal { tol, max_iter } => {
                Stepper::Trapezoidal(Trapezoidal::new(n, tol, max_iter))
            }
        }
    }

    /// Advance from `t` toward `t + h`; returns the time actually covered.
    fn advance(&mut self, system: &S, bounds: &[StateBound], t: f64, x: &mut [f64], h: f64) -> Result<f64> {
        match self {
            Stepper::Dt(ws) => taylor::dt_step_bounded(system, ws, bounds, t, x, h),
            Stepper::Rk4(s) => {
                explicit::rk4_with(system, s, t, x, h)?;
                system.project(x);
                Ok(h)
            }
            Stepper::ModifiedEuler(s) => {
                explicit::modified_euler_with(system, s, t, x, h)?;
                system.project(x);
                Ok(h)
            }
            Stepper::Trapezoidal(tr) => {
                tr.step(system, t, x, h)?;
                system.project(x);
                Ok(h)
            }
        }
    }

    fn invalidate(&mut self) {
        if let Stepper::Trapezoidal(tr) = self {
            tr.invalidate();
        }
    }
}

fn check_state(names: &[String], t: f64, x: &[f64]) -> Result<()> {
    for (i, v) in x.iter().enumerate() {
        if !v.is_finite() || v.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Step {
                time: t,
                variable: names.get(i).cloned().unwrap_or_else(|| format!("x[{i}]")),
                reason: if v.is_finite() {
                    format!("magnitude {v:e} exceeds {DIVERGENCE_LIMIT:e}")
                } else {
                    "non-finite value".into()
                },
            });
        }
    }
    Ok(())
}

fn fire_events<S: OdeSystem>(
    sys: &mut S,
    events: &[f64],
    next: &mut usize,
    t: f64,
    eps: f64,
    x: &mut [f64],
) -> Result<()> {
    while *next < events.len() && (events[*next] - t).abs() <= eps {
        sys.apply_event(*next, x)?;
        *next += 1;
    }
    Ok(())
}

/// Run `system` from `x0`, streaming every accepted step to `observer`.
pub fn simulate_with<S>(
    system: &S,
    x0: &[f64],
    config: &SolverConfig,
    observer: &mut dyn Observer,
) -> Result<RunSummary>
where
    S: TaylorModel + Clone,
{
    config.validate()?;
    if x0.len() != system.dim() {
        return Err(Error::Solver(format!(
            "initial state has {} entries, system has {}",
            x0.len(),
            system.dim()
        )));
    }
    let mut sys = system.clone();
    let names = sys.state_names();
    let bounds = sys.bounds();
    let h = config.step;
    let t0 = config.t_start;
    let t_end = config.t_end;
    // grid points and events closer than this coincide
    let eps = 1e-9 * h.min(1.0);
    let events = sys.event_times();
    let mut next_event = events.iter().position(|&te| te >= t0 - eps).unwrap_or(events.len());
    let mut x = x0.to_vec();
    let mut stepper = Stepper::new(&sys, config.method);
    let start = Instant::now();
    let mut steps = 0usize;
    let mut t = t0;
    let n_final = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
    let event_at = |next: usize, t: f64| next < events.len() && (events[next] - t).abs() <= eps;

    let mut flow;
    if event_at(next_event, t) {
        flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::PreEvent });
        fire_events(&mut sys, &events, &mut next_event, t, eps, &mut x)?;
        stepper.invalidate();
        if flow.is_continue() {
            flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::PostEvent });
        }
    } else {
        flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::Initial });
    }

    let mut n = 0usize;
    while flow.is_continue() && n < n_final {
        let t_grid = if n + 1 == n_final { t_end } else { t0 + (n + 1) as f64 * h };
        let split = next_event < events.len() && events[next_event] < t_grid - eps;
        let target = if split { events[next_event] } else { t_grid };
        while flow.is_continue() && t < target - eps {
            let taken = stepper.advance(&sys, &bounds, t, &mut x, target - t)?;
            steps += 1;
            if taken < target - t - eps {
                t += taken;
                check_state(&names, t, &x)?;
                flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::Limiter });
            } else {
                t = target;
                check_state(&names, t, &x)?;
            }
        }
        if flow.is_break() {
            break;
        }
        if !split {
            n += 1;
        }
        if event_at(next_event, t) {
            flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::PreEvent });
            fire_events(&mut sys, &events, &mut next_event, t, eps, &mut x)?;
            stepper.invalidate();
            if flow.is_continue() {
                flow = observer.observe(&Sample { t, x: &x, kind: SampleKind::PostEvent });
            }
        } else {
            let kind = if n == n_final { SampleKind::Final } else { SampleKind::Grid(n) };
            flow = observer.observe(&Sample { t, x: &x, kind });
        }
    }
    Ok(RunSummary {
        wall_time: start.elapsed().as_secs_f64(),
        steps_taken: steps,
        t_final: t,
        completed: flow.is_continue(),
    })
}
