//! Implicit trapezoidal rule solved by a chord (simplified) Newton method.
//!
//! The iteration matrix `I − (h/2)·J` uses a forward-difference Jacobian. It
//! is kept across iterations and across steps, and rebuilt when convergence
//! slows, after an event, when the step size changes or when a limiter
//! switches. Limiter decisions are taken at the start of each step and held
//! through the iteration so the residual stays smooth; the state is projected
//! back onto its bounds afterwards.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::OdeSystem;
use crate::{Error, Result};

/// Relative perturbation of the finite-difference Jacobian.
const FD_REL: f64 = 1e-7;
/// Contraction factor above which the Jacobian is refreshed.
const SLOW_RATIO: f64 = 0.3;
/// Relative step change that forces a new iteration matrix; grid steps
/// differ in their last bits and must not trigger a refresh.
const STEP_CHANGE: f64 = 1e-6;

pub struct Trapezoidal {
    tol: f64,
    max_iter: usize,
    lu: Option<LU<f64, Dyn, Dyn>>,
    lu_h: f64,
    f0: Vec<f64>,
    f1: Vec<f64>,
    y: Vec<f64>,
    switches: Vec<bool>,
    jac_evals: usize,
}

impl Trapezoidal {
    pub fn new(n: usize, tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            lu: None,
            lu_h: 0.0,
            f0: vec![0.0; n],
            f1: vec![0.0; n],
            y: vec![0.0; n],
            switches: Vec::new(),
            jac_evals: 0,
        }
    }

    /// Drop the cached iteration matrix.
    pub fn invalidate(&mut self) {
        self.lu = None;
    }

    /// Number of Jacobian evaluations so far.
    pub fn jacobian_evaluations(&self) -> usize {
        self.jac_evals
    }

    fn refresh<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, at: &[f64], h: f64) -> Result<()> {
        let n = at.len();
        let mut base = vec![0.0; n];
        sys.rhs_held(t, at, &self.switches, &mut base)?;
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut xp = at.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let d = FD_REL * at[j].abs().max(1.0);
            xp[j] = at[j] + d;
            sys.rhs_held(t, &xp, &self.switches, &mut fp)?;
            xp[j] = at[j];
            for i in 0..n {
                m[(i, j)] -= 0.5 * h * (fp[i] - base[i]) / d;
            }
        }
        self.lu = Some(m.lu());
        self.lu_h = h;
        self.jac_evals += 1;
        Ok(())
    }

    /// Solve `y = x + (h/2)(f(t, x) + f(t+h, y))` and store `y` in `x`.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, x: &mut [f64], h: f64) -> Result<()> {
        let n = x.len();
        let switches = sys.switches(t, x)?;
        if switches != self.switches {
            self.switches = switches;
            self.lu = None;
        }
        sys.rhs_held(t, x, &self.switches, &mut self.f0)?;
        self.y.copy_from_slice(x);
        if self.lu.is_none() || (self.lu_h - h).abs() > STEP_CHANGE * h {
            self.refresh(sys, t + h, x, h)?;
        }
        let mut refreshed = false;
        let mut prev = f64::INFINITY;
        let mut iter = 0;
        let mut g = DVector::<f64>::zeros(n);
        loop {
            sys.rhs_held(t + h, &self.y, &self.switches, &mut self.f1)?;
            let mut res = 0.0f64;
            for i in 0..n {
                g[i] = self.y[i] - x[i] - 0.5 * h * (self.f0[i] + self.f1[i]);
                res = res.max(g[i].abs());
            }
            if !res.is_finite() {
                return Err(Error::Newton {
                    time: t + h,
                    iterations: iter,
                    residual: res,
                });
            }
            if res < self.tol {
                break;
            }
            if iter >= self.max_iter {
                if refreshed {
                    return Err(Error::Newton {
                        time: t + h,
                        iterations: iter,
                        residual: res,
                    });
                }
                // one more attempt from the start with a fresh Jacobian
                self.y.copy_from_slice(x);
                let y = self.y.clone();
                self.refresh(sys, t + h, &y, h)?;
                refreshed = true;
                iter = 0;
                prev = f64::INFINITY;
                continue;
            }
            if iter >= 2 && res > SLOW_RATIO * prev && !refreshed {
                let y = self.y.clone();
                self.refresh(sys, t + h, &y, h)?;
                refreshed = true;
            }
            prev = res;
            let lu = self.lu.as_ref().expect("iteration matrix present");
            if !lu.solve_mut(&mut g) {
                return Err(Error::Singular {
                    what: "trapezoidal iteration matrix".into(),
                    det: 0.0,
                });
            }
            for i in 0..n {
                self.y[i] -= g[i];
            }
            iter += 1;
        }
        x.copy_from_slice(&self.y);
        Ok(())
    }
}

/// One trapezoidal step with a freshly built Jacobian.
pub fn trapezoidal_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    x: &mut [f64],
    h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<()> {
    let mut tr = Trapezoidal::new(x.len(), tol, max_iter);
    tr.step(sys, t, x, h)?;
    sys.project(x);
    Ok(())
}
