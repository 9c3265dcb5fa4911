//! TGOV1 turbine-governor and SEXS exciter with windup limits.
//!
//! Both controllers clamp an integrator state: the governor valve position
//! `p1` and the field voltage `e_fd`. A state is clamped when it sits on a
//! limit and its unclamped rate points outward; the clamp releases as soon as
//! the rate points back inward. In the DT form the decision is taken once per
//! expansion point, so a clamped series is exactly `[limit, 0, 0, …]`. The
//! unclamped rate of a clamped state is expanded as well so the integrator
//! can end the step where that rate turns inward.
//!
//! The governor speed input is the per-unit deviation `Δω_r/ω0`.

use crate::{Error, Result};

/// Distance from a limit inside which a state counts as sitting on it.
pub const LIMIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Tgov1Params {
    /// Droop (pu).
    pub r: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Turbine damping (pu).
    pub dt: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Reference, back-solved at initialization.
    pub p_ref: f64,
}

impl Tgov1Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("t1", self.t1), ("t3", self.t3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.t2 >= 0.0) || !self.dt.is_finite() {
            return Err(Error::param("t2", "must be non-negative"));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::param(
                "v_min",
                format!("must be below v_max ({} ≥ {})", self.v_min, self.v_max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SexsParams {
    pub k_e: f64,
    pub t_e: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub e_max: f64,
    pub e_min: f64,
    /// Reference, back-solved at initialization.
    pub v_ref: f64,
}

impl SexsParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_e", self.k_e), ("t_e", self.t_e), ("t_b", self.t_b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.t_a >= 0.0) {
            return Err(Error::param("t_a", "must be non-negative"));
        }
        if !(self.e_min < self.e_max) {
            return Err(Error::param(
                "e_min",
                format!("must be below e_max ({} ≥ {})", self.e_min, self.e_max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlState {
    pub p1: f64,
    pub p2: f64,
    pub e_fd: f64,
    pub v3: f64,
    pub p1_at_limit: bool,
    pub efd_at_limit: bool,
}

/// Apply the anti-windup rule to an integrator rate.
///
/// Returns the effective rate and whether the clamp is active.
pub fn limit_rate(x: f64, rate: f64, lo: f64, hi: f64) -> (f64, bool) {
    if (x >= hi - LIMIT_TOL && rate > 0.0) || (x <= lo + LIMIT_TOL && rate < 0.0) {
        (0.0, true)
    } else {
        (rate, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorRates {
    pub dp1: f64,
    pub dp2: f64,
    pub p_m: f64,
    pub clamped: bool,
}

/// Governor rates and mechanical power for speed deviation `dw_pu`.
pub fn tgov1_derivatives(p1: f64, p2: f64, g: &Tgov1Params, dw_pu: f64) -> GovernorRates {
    let free = ((g.p_ref - dw_pu) / g.r - p1) / g.t1;
    tgov1_derivatives_held(p1, p2, g, dw_pu, limit_rate(p1, free, g.v_min, g.v_max).1)
}

/// Governor rates with the valve clamp forced to `clamped`.
pub fn tgov1_derivatives_held(p1: f64, p2: f64, g: &Tgov1Params, dw_pu: f64, clamped: bool) -> GovernorRates {
    let dp1 = if clamped { 0.0 } else { ((g.p_ref - dw_pu) / g.r - p1) / g.t1 };
    GovernorRates {
        dp1,
        dp2: (g.t2 * dp1 + p1 - p2) / g.t3,
        p_m: p2 - g.dt * dw_pu,
        clamped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExciterRates {
    pub de_fd: f64,
    pub dv3: f64,
    pub clamped: bool,
}

/// Exciter rates for terminal voltage magnitude `v_t` and its rate `dv_t`.
pub fn sexs_derivatives(e_fd: f64, v3: f64, x: &SexsParams, v_t: f64, dv_t: f64) -> ExciterRates {
    let free = (x.k_e * v3 - e_fd) / x.t_e;
    sexs_derivatives_held(e_fd, v3, x, v_t, dv_t, limit_rate(e_fd, free, x.e_min, x.e_max).1)
}

/// Exciter rates with the field-voltage clamp forced to `clamped`.
pub fn sexs_derivatives_held(e_fd: f64, v3: f64, x: &SexsParams, v_t: f64, dv_t: f64, clamped: bool) -> ExciterRates {
    let v2 = x.v_ref - v_t;
    ExciterRates {
        de_fd: if clamped { 0.0 } else { (x.k_e * v3 - e_fd) / x.t_e },
        dv3: (-x.t_a * dv_t + v2 - v3) / x.t_b,
        clamped,
    }
}

/// Taylor series of one machine's governor and exciter.
#[derive(Debug, Clone)]
pub struct ControlSeries {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p_m: Vec<f64>,
    pub e_fd: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
    pub p1_clamped: bool,
    pub efd_clamped: bool,
    /// Unclamped rate of `p1`; filled by [`finish`](Self::finish) while clamped.
    pub p1_free: Vec<f64>,
    /// Unclamped rate of `e_fd`; filled by [`finish`](Self::finish) while clamped.
    pub efd_free: Vec<f64>,
}

impl ControlSeries {
    pub fn new(order: usize) -> Self {
        let z = || vec![0.0; order + 1];
        Self {
            p1: z(),
            p2: z(),
            p_m: z(),
            e_fd: z(),
            v2: z(),
            v3: z(),
            p1_clamped: false,
            efd_clamped: false,
            p1_free: z(),
            efd_free: z(),
        }
    }

    /// Load order 0 and decide both clamps from the expansion-point rates.
    pub fn seed(
        &mut self,
        s: &ControlState,
        g: &Tgov1Params,
        x: &SexsParams,
        omega0: f64,
        dw: f64,
        v_t: f64,
    ) {
        let dw_pu = dw / omega0;
        self.p1[0] = s.p1;
        self.p2[0] = s.p2;
        self.p_m[0] = s.p2 - g.dt * dw_pu;
        self.e_fd[0] = s.e_fd;
        self.v3[0] = s.v3;
        self.v2[0] = x.v_ref - v_t;
        let gov = tgov1_derivatives(s.p1, s.p2, g, dw_pu);
        self.p1_clamped = gov.clamped;
        let free = (x.k_e * s.v3 - s.e_fd) / x.t_e;
        self.efd_clamped = limit_rate(s.e_fd, free, x.e_min, x.e_max).1;
    }

    /// Order `k+1` of the integrator states `p1` and `e_fd`.
    pub fn advance_states(&mut self, g: &Tgov1Params, x: &SexsParams, omega0: f64, k: usize, dw: &[f64]) {
        let inv = 1.0 / (k + 1) as f64;
        self.p1[k + 1] = if self.p1_clamped {
            0.0
        } else {
            let p_ref = if k == 0 { g.p_ref } else { 0.0 };
            ((p_ref - dw[k] / omega0) / g.r - self.p1[k]) / g.t1 * inv
        };
        self.e_fd[k + 1] = if self.efd_clamped {
            0.0
        } else {
            (x.k_e * self.v3[k] - self.e_fd[k]) / x.t_e * inv
        };
    }

    /// Order `k+1` of `p2`, `p_m`, `v2` and `v3`; needs `p1`, speed and
    /// terminal-voltage magnitude at order `k+1`.
    pub fn advance_outputs(
        &mut self,
        g: &Tgov1Params,
        x: &SexsParams,
        omega0: f64,
        k: usize,
        dw: &[f64],
        v_t: &[f64],
    ) {
        let k1 = (k + 1) as f64;
        self.p2[k + 1] = (k1 * g.t2 * self.p1[k + 1] + self.p1[k] - self.p2[k]) / (g.t3 * k1);
        self.p_m[k + 1] = self.p2[k + 1] - g.dt * dw[k + 1] / omega0;
        self.v2[k + 1] = -v_t[k + 1];
        self.v3[k + 1] = (k1 * x.t_a * self.v2[k + 1] + self.v2[k] - self.v3[k]) / (x.t_b * k1);
    }

    /// Expand the unclamped rates of the clamped states once every order is known.
    pub fn finish(&mut self, g: &Tgov1Params, x: &SexsParams, omega0: f64, dw: &[f64]) {
        if self.p1_clamped {
            for k in 0..self.p1.len() {
                let p_ref = if k == 0 { g.p_ref } else { 0.0 };
                self.p1_free[k] = ((p_ref - dw[k] / omega0) / g.r - self.p1[k]) / g.t1;
            }
        }
        if self.efd_clamped {
            for k in 0..self.e_fd.len() {
                self.efd_free[k] = (x.k_e * self.v3[k] - self.e_fd[k]) / x.t_e;
            }
        }
    }

    pub fn state_at(&self, h: f64) -> ControlState {
        use crate::dt_algebra::horner;
        ControlState {
            p1: horner(&self.p1, h),
            p2: horner(&self.p2, h),
            e_fd: horner(&self.e_fd, h),
            v3: horner(&self.v3, h),
            p1_at_limit: self.p1_clamped,
            efd_at_limit: self.efd_clamped,
        }
    }
}
