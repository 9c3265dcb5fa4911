//! One DT step: expand every state about the current point, then evaluate
//! the truncated series. A bounded state whose series leaves its interval
//! inside the step shortens the step to the crossing; so does a clamped
//! state whose unclamped rate turns back inward.

use super::{StateBound, TaylorModel};
use crate::controls::LIMIT_TOL;
use crate::dt_algebra::horner;
use crate::Result;

/// Samples per step used to locate a switching time before bisection.
const CROSSING_SAMPLES: usize = 8;
/// Shortest partial step, relative to the requested step.
const MIN_PARTIAL: f64 = 1e-6;
/// Time resolution of a located release, relative to the requested step.
const RELEASE_RES: f64 = 1e-9;

/// Advance `x` from `t0` by `h` with a fresh expansion; bounds are ignored.
pub fn dt_step<S: TaylorModel>(sys: &S, ws: &mut S::Workspace, t0: f64, x: &mut [f64], h: f64) -> Result<()> {
    sys.expand(ws, t0, x)?;
    sys.evaluate(ws, h, x);
    Ok(())
}

fn outside(v: f64, b: &StateBound) -> bool {
    v > b.hi || v < b.lo
}

/// Earliest time in `(0, h]` at which `switched` holds for the series value,
/// refined by bisection until `settled(a, z, value at z)`. The returned time
/// always satisfies `switched`.
fn first_switch(
    series: &[f64],
    h: f64,
    switched: impl Fn(f64) -> bool,
    settled: impl Fn(f64, f64, f64) -> bool,
) -> Option<f64> {
    if series[1..].iter().all(|c| *c == 0.0) {
        return None;
    }
    let mut a = 0.0;
    let mut hit = None;
    for j in 1..=CROSSING_SAMPLES {
        let tj = h * j as f64 / CROSSING_SAMPLES as f64;
        if switched(horner(series, tj)) {
            hit = Some(tj);
            break;
        }
        a = tj;
    }
    let mut z = hit?;
    for _ in 0..200 {
        if settled(a, z, horner(series, z)) || z - a <= f64::EPSILON * h {
            break;
        }
        let m = 0.5 * (a + z);
        if switched(horner(series, m)) {
            z = m;
        } else {
            a = m;
        }
    }
    Some(z.max(MIN_PARTIAL * h))
}

/// Earliest time in `(0, h]` at which `series` leaves `[lo, hi]`.
fn crossing(series: &[f64], b: &StateBound, h: f64) -> Option<f64> {
    // z overshoots the limit by at most the tolerance
    first_switch(
        series,
        h,
        |v| outside(v, b),
        |_, _, v| (if v > b.hi { v - b.hi } else { b.lo - v }) <= LIMIT_TOL,
    )
}

/// Earliest time in `(0, h]` at which the unclamped `rate` of a state held at
/// `limit` points back into the interval.
fn release(rate: &[f64], limit: f64, b: &StateBound, h: f64) -> Option<f64> {
    let at_hi = (limit - b.hi).abs() <= (limit - b.lo).abs();
    first_switch(
        rate,
        h,
        |r| if at_hi { r <= 0.0 } else { r >= 0.0 },
        |a, z, _| z - a <= RELEASE_RES * h,
    )
}

/// DT step honouring state bounds; returns the time actually advanced.
pub(crate) fn dt_step_bounded<S: TaylorModel>(
    sys: &S,
    ws: &mut S::Workspace,
    bounds: &[StateBound],
    t0: f64,
    x: &mut [f64],
    h: f64,
) -> Result<f64> {
    sys.expand(ws, t0, x)?;
    let mut tau = h;
    let mut hit = None;
    for (i, b) in bounds.iter().enumerate() {
        if let Some(rate) = sys.clamped_rate(ws, b.index) {
            if let Some(tr) = release(rate, sys.series(ws, b.index)[0], b, h) {
                if tr < tau {
                    tau = tr;
                    hit = None;
                }
            }
        } else if let Some(tc) = crossing(sys.series(ws, b.index), b, h) {
            if tc < tau {
                tau = tc;
                hit = Some(i);
            }
        }
    }
    sys.evaluate(ws, tau, x);
    if let Some(i) = hit {
        let b = &bounds[i];
        let v = x[b.index];
        // land exactly on the limit that was reached
        x[b.index] = if (v - b.hi).abs() <= (v - b.lo).abs() { b.hi } else { b.lo };
    }
    for b in bounds {
        x[b.index] = x[b.index].clamp(b.lo, b.hi);
    }
    sys.project(x);
    Ok(tau)
}
