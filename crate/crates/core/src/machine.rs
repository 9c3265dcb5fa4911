//! Voltage-behind-reactance (VBR) round-rotor synchronous generator.
//!
//! Conventions: per unit on the system base with reactances standing in for
//! inductances at rated frequency, time in seconds and `ω0` the rated
//! electrical angular frequency. Flux-linkage equations therefore carry an
//! `ω0` factor. `Δω_r` is in rad/s and `ω_r = ω0 + Δω_r`. Stator currents are
//! positive flowing out of the machine (generator convention).
//!
//! The Park transform is magnitude invariant with rows ordered `0, d, q`;
//! balanced phase quantities `x_a = X cos θ` map to `x_d = X`, `x_q = 0`. The
//! q-axis leads the d-axis by 90°.
//!
//! Stator phase currents are states. The rotor is represented by the field
//! winding, one d-axis and two q-axis dampers. With equal subtransient
//! inductances on both axes the stator inductance matrix `L″_abc` is
//! independent of rotor position, so its inverse is computed once.

use std::f64::consts::PI;

use nalgebra::Matrix3;

use crate::dt_algebra::{hypot_coeff, product_coeff, sin_cos_coeff, CoeffSeries, SeriesError};
use crate::{Abc, Error, Result};

pub(crate) const SQRT3_2: f64 = 0.866_025_403_784_438_6;
pub(crate) const INV_SQRT3: f64 = 0.577_350_269_189_625_8;
const TWO_THIRDS: f64 = 2.0 / 3.0;
const PHASE_SHIFT: [f64; 3] = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];

/// Relative tolerance for the equal-subtransient-inductance check.
pub const ROUND_ROTOR_TOL: f64 = 1e-9;
/// Smallest determinant accepted when inverting a 3×3 parameter matrix.
pub const DET_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MachineParams {
    /// Inertia constant (s).
    pub h: f64,
    /// Damping (pu power per pu speed).
    pub d: f64,
    /// Rated electrical angular frequency (rad/s).
    pub omega0: f64,
    /// Number of poles. Speeds and angles in the model are electrical.
    pub pole_count: u32,
    pub r_fd: f64,
    pub r_1d: f64,
    pub r_1q: f64,
    pub r_2q: f64,
    pub l_fdl: f64,
    pub l_1dl: f64,
    pub l_1ql: f64,
    pub l_2ql: f64,
    pub l_ad: f64,
    pub l_aq: f64,
    pub l_al: f64,
    pub l_0: f64,
    pub r_s: Matrix3<f64>,
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("omega0", self.omega0),
            ("r_fd", self.r_fd),
            ("r_1d", self.r_1d),
            ("r_1q", self.r_1q),
            ("r_2q", self.r_2q),
            ("l_fdl", self.l_fdl),
            ("l_1dl", self.l_1dl),
            ("l_1ql", self.l_1ql),
            ("l_2ql", self.l_2ql),
            ("l_ad", self.l_ad),
            ("l_aq", self.l_aq),
            ("l_al", self.l_al),
            ("l_0", self.l_0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {value}")));
            }
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::param("d", format!("must be non-negative, got {}", self.d)));
        }
        if self.pole_count < 2 || self.pole_count % 2 != 0 {
            return Err(Error::param("pole_count", "must be an even number ≥ 2"));
        }
        if self.r_s.iter().any(|r| !r.is_finite()) || (0..3).any(|i| self.r_s[(i, i)] <= 0.0) {
            return Err(Error::param("r_s", "diagonal entries must be positive"));
        }
        Ok(())
    }

    /// Parallel combination `1/(1/L_ad + 1/L_fdl + 1/L_1dl)`.
    pub fn l_ad_pp(&self) -> f64 {
        1.0 / (1.0 / self.l_ad + 1.0 / self.l_fdl + 1.0 / self.l_1dl)
    }

    /// Parallel combination `1/(1/L_aq + 1/L_1ql + 1/L_2ql)`.
    pub fn l_aq_pp(&self) -> f64 {
        1.0 / (1.0 / self.l_aq + 1.0 / self.l_1ql + 1.0 / self.l_2ql)
    }
}

/// Dynamic states of one machine, also used for their time derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MachineState {
    pub delta: f64,
    pub dw: f64,
    pub lambda_fd: f64,
    pub lambda_1d: f64,
    pub lambda_1q: f64,
    pub lambda_2q: f64,
    pub i_abc: Abc,
    pub theta: f64,
}

impl MachineState {
    pub const LEN: usize = 10;
    pub const NAMES: [&'static str; Self::LEN] = [
        "delta",
        "dw",
        "lambda_fd",
        "lambda_1d",
        "lambda_1q",
        "lambda_2q",
        "i_a",
        "i_b",
        "i_c",
        "theta",
    ];

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            dw: x[1],
            lambda_fd: x[2],
            lambda_1d: x[3],
            lambda_1q: x[4],
            lambda_2q: x[5],
            i_abc: [x[6], x[7], x[8]],
            theta: x[9],
        }
    }

    pub fn write_to(&self, x: &mut [f64]) {
        x[..Self::LEN].copy_from_slice(&self.to_array());
    }

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.delta,
            self.dw,
            self.lambda_fd,
            self.lambda_1d,
            self.lambda_1q,
            self.lambda_2q,
            self.i_abc[0],
            self.i_abc[1],
            self.i_abc[2],
            self.theta,
        ]
    }
}

/// Quantities fixed by the machine state, terminal voltage and field voltage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MachineAlgebraic {
    pub i_d: f64,
    pub i_q: f64,
    pub v_d: f64,
    pub v_q: f64,
    pub lambda_d_pp: f64,
    pub lambda_q_pp: f64,
    pub lambda_ad: f64,
    pub lambda_aq: f64,
    pub v_d_pp: f64,
    pub v_q_pp: f64,
    pub v_abc_pp: Abc,
    pub omega_r: f64,
    pub p_e: f64,
    pub v_t: f64,
}

/// Magnitude-invariant Park transform, rows `0, d, q`.
pub fn park(theta: f64) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        let a = theta - PHASE_SHIFT[j];
        m[(0, j)] = 1.0 / 3.0;
        m[(1, j)] = TWO_THIRDS * a.cos();
        m[(2, j)] = -TWO_THIRDS * a.sin();
    }
    m
}

/// Inverse Park transform, columns `0, d, q`.
pub fn park_inv(theta: f64) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        let a = theta - PHASE_SHIFT[j];
        m[(j, 0)] = 1.0;
        m[(j, 1)] = a.cos();
        m[(j, 2)] = -a.sin();
    }
    m
}

/// Series-valued forward and inverse Park matrices.
#[derive(Debug, Clone)]
pub struct ParkSeries {
    pub forward: [[CoeffSeries; 3]; 3],
    pub inverse: [[CoeffSeries; 3]; 3],
}

/// Park matrices as functions of an angle series.
///
/// Each entry is `c₁·cos Θ + c₂·sin Θ + c₀`, built from the sine/cosine rule
/// and linear combinations.
pub fn park_series(theta: &CoeffSeries) -> std::result::Result<ParkSeries, SeriesError> {
    let (sin, cos) = theta.sin_cos()?;
    let order = theta.order();
    let t0 = theta.t0();
    // cos(θ−φ) = cos θ cos φ + sin θ sin φ, sin(θ−φ) = sin θ cos φ − cos θ sin φ
    let cos_shift = |phi: f64| cos.scale(phi.cos())?.add(&sin.scale(phi.sin())?);
    let sin_shift = |phi: f64| sin.scale(phi.cos())?.sub(&cos.scale(phi.sin())?);
    let zero = CoeffSeries::zeros(order, t0);
    let mut forward: [[CoeffSeries; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| zero.clone()));
    let mut inverse = forward.clone();
    for j in 0..3 {
        let c = cos_shift(PHASE_SHIFT[j])?;
        let s = sin_shift(PHASE_SHIFT[j])?;
        forward[0][j] = CoeffSeries::constant(1.0 / 3.0, order, t0);
        forward[1][j] = c.scale(TWO_THIRDS)?;
        forward[2][j] = s.scale(-TWO_THIRDS)?;
        inverse[j][0] = CoeffSeries::constant(1.0, order, t0);
        inverse[j][1] = c;
        inverse[j][2] = s.scale(-1.0)?;
    }
    Ok(ParkSeries { forward, inverse })
}

/// Stationary-frame components `(α, β)` of a phase quantity.
#[inline]
pub(crate) fn alpha_beta(x: Abc) -> (f64, f64) {
    (
        TWO_THIRDS * (x[0] - 0.5 * (x[1] + x[2])),
        (x[1] - x[2]) * INV_SQRT3,
    )
}

/// Phase quantity with zero sequence 0 from `(α, β)`.
#[inline]
pub(crate) fn abc_from_alpha_beta(a: f64, b: f64) -> Abc {
    [a, -0.5 * a + SQRT3_2 * b, -0.5 * a - SQRT3_2 * b]
}

#[inline]
pub(crate) fn mul3(m: &Matrix3<f64>, v: Abc) -> Abc {
    [
        m[(0, 0)] * v[0] + m[(0, 1)] * v[1] + m[(0, 2)] * v[2],
        m[(1, 0)] * v[0] + m[(1, 1)] * v[1] + m[(1, 2)] * v[2],
        m[(2, 0)] * v[0] + m[(2, 1)] * v[1] + m[(2, 2)] * v[2],
    ]
}

/// Invert a 3×3 parameter matrix, rejecting near-singular ones.
pub(crate) fn checked_inverse(m: &Matrix3<f64>, what: &str) -> Result<Matrix3<f64>> {
    guarded_inverse(m, what, DET_GUARD)
}

/// Like [`checked_inverse`] but with the guard relative to the cube of the
/// largest entry, for matrices whose natural scale is far from one.
pub(crate) fn checked_inverse_scaled(m: &Matrix3<f64>, what: &str) -> Result<Matrix3<f64>> {
    let scale = m.amax();
    guarded_inverse(m, what, DET_GUARD * scale * scale * scale)
}

fn guarded_inverse(m: &Matrix3<f64>, what: &str, guard: f64) -> Result<Matrix3<f64>> {
    let det = m.determinant();
    if !(det.abs() > guard) {
        return Err(Error::Singular {
            what: what.to_string(),
            det,
        });
    }
    m.try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        det,
    })
}

/// Validated machine with precomputed constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    params: MachineParams,
    l_ad_pp: f64,
    l_aq_pp: f64,
    l_abc: Matrix3<f64>,
    l_abc_inv: Matrix3<f64>,
    // r/L and r/L² groups used by the flux and subtransient-voltage equations
    c_fd: f64,
    c_1d: f64,
    c_1q: f64,
    c_2q: f64,
    k_fd: f64,
    k_1d: f64,
    k_1q: f64,
    k_2q: f64,
}

impl MachineModel {
    pub fn new(params: MachineParams) -> Result<Self> {
        params.validate()?;
        let l_ad_pp = params.l_ad_pp();
        let l_aq_pp = params.l_aq_pp();
        if (l_ad_pp - l_aq_pp).abs() > ROUND_ROTOR_TOL * l_ad_pp.max(l_aq_pp) {
            return Err(Error::param(
                "l_aq",
                format!(
                    "round rotor requires equal subtransient inductances, got L″_ad = {l_ad_pp} and L″_aq = {l_aq_pp}"
                ),
            ));
        }
        let l_s = params.l_al + (params.l_0 - params.l_al + 2.0 * l_ad_pp) / 3.0;
        let l_m = (params.l_0 - params.l_al - l_ad_pp) / 3.0;
        let l_abc = Matrix3::from_fn(|i, j| if i == j { l_s } else { l_m });
        let l_abc_inv = checked_inverse(&l_abc, "subtransient inductance matrix")?;
        let p = &params;
        Ok(Self {
            l_ad_pp,
            l_aq_pp,
            l_abc,
            l_abc_inv,
            c_fd: p.r_fd / p.l_fdl,
            c_1d: p.r_1d / p.l_1dl,
            c_1q: p.r_1q / p.l_1ql,
            c_2q: p.r_2q / p.l_2ql,
            k_fd: p.r_fd / (p.l_fdl * p.l_fdl),
            k_1d: p.r_1d / (p.l_1dl * p.l_1dl),
            k_1q: p.r_1q / (p.l_1ql * p.l_1ql),
            k_2q: p.r_2q / (p.l_2ql * p.l_2ql),
            params,
        })
    }

    pub fn params(&self) -> &MachineParams {
        &self.params
    }

    pub fn omega0(&self) -> f64 {
        self.params.omega0
    }

    pub fn l_ad_pp(&self) -> f64 {
        self.l_ad_pp
    }

    pub fn l_aq_pp(&self) -> f64 {
        self.l_aq_pp
    }

    /// Constant stator inductance matrix `L″_abc`.
    pub fn l_abc(&self) -> &Matrix3<f64> {
        &self.l_abc
    }

    pub fn l_abc_inv(&self) -> &Matrix3<f64> {
        &self.l_abc_inv
    }

    /// `L″_abc` obtained by rotating `diag(L_0, L″_d, L″_q)` into phase
    /// coordinates at rotor angle `theta`.
    pub fn l_abc_at(&self, theta: f64) -> Matrix3<f64> {
        let p = &self.params;
        let l_0dq = Matrix3::from_diagonal(&nalgebra::Vector3::new(
            p.l_0,
            p.l_al + self.l_ad_pp,
            p.l_al + self.l_aq_pp,
        ));
        park_inv(theta) * l_0dq * park(theta)
    }

    /// Mutual flux `λ_ad` from the rotor fluxes and the d-axis current.
    pub fn lambda_ad(&self, lambda_fd: f64, lambda_1d: f64, i_d: f64) -> f64 {
        self.l_ad_pp * (lambda_fd / self.params.l_fdl + lambda_1d / self.params.l_1dl - i_d)
    }

    /// Mutual flux `λ_aq` from the rotor fluxes and the q-axis current.
    pub fn lambda_aq(&self, lambda_1q: f64, lambda_2q: f64, i_q: f64) -> f64 {
        self.l_aq_pp * (lambda_1q / self.params.l_1ql + lambda_2q / self.params.l_2ql - i_q)
    }

    /// Algebraic variables for a given state, terminal voltage and field voltage.
    pub fn algebraics(&self, s: &MachineState, v_abc: Abc, e_fd: f64) -> MachineAlgebraic {
        let p = &self.params;
        let w0 = p.omega0;
        let (sin, cos) = s.theta.sin_cos();
        let (i_al, i_be) = alpha_beta(s.i_abc);
        let i_d = i_al * cos + i_be * sin;
        let i_q = -i_al * sin + i_be * cos;
        let (v_al, v_be) = alpha_beta(v_abc);
        let v_d = v_al * cos + v_be * sin;
        let v_q = -v_al * sin + v_be * cos;
        let lambda_d_pp = self.l_ad_pp * (s.lambda_fd / p.l_fdl + s.lambda_1d / p.l_1dl);
        let lambda_q_pp = self.l_aq_pp * (s.lambda_1q / p.l_1ql + s.lambda_2q / p.l_2ql);
        let lambda_ad = lambda_d_pp - self.l_ad_pp * i_d;
        let lambda_aq = lambda_q_pp - self.l_aq_pp * i_q;
        let omega_r = w0 + s.dw;
        let v_d_pp = self.l_ad_pp
            * (e_fd / p.l_fdl
                - self.k_fd * (s.lambda_fd - lambda_ad)
                - self.k_1d * (s.lambda_1d - lambda_ad))
            - omega_r * lambda_q_pp / w0;
        let v_q_pp = -self.l_aq_pp
            * (self.k_1q * (s.lambda_1q - lambda_aq) + self.k_2q * (s.lambda_2q - lambda_aq))
            + omega_r * lambda_d_pp / w0;
        let v_al_pp = v_d_pp * cos - v_q_pp * sin;
        let v_be_pp = v_d_pp * sin + v_q_pp * cos;
        let torque = lambda_ad * i_q - lambda_aq * i_d;
        MachineAlgebraic {
            i_d,
            i_q,
            v_d,
            v_q,
            lambda_d_pp,
            lambda_q_pp,
            lambda_ad,
            lambda_aq,
            v_d_pp,
            v_q_pp,
            v_abc_pp: abc_from_alpha_beta(v_al_pp, v_be_pp),
            omega_r,
            p_e: omega_r * torque / w0,
            v_t: (v_al * v_al + v_be * v_be).sqrt(),
        }
    }

    /// Time derivatives of every machine state.
    pub fn derivatives(
        &self,
        s: &MachineState,
        alg: &MachineAlgebraic,
        v_abc: Abc,
        p_m: f64,
        e_fd: f64,
    ) -> MachineState {
        let p = &self.params;
        let w0 = p.omega0;
        let ri = mul3(&p.r_s, s.i_abc);
        let drive = [
            alg.v_abc_pp[0] - v_abc[0] - ri[0],
            alg.v_abc_pp[1] - v_abc[1] - ri[1],
            alg.v_abc_pp[2] - v_abc[2] - ri[2],
        ];
        let di = mul3(&self.l_abc_inv, drive);
        MachineState {
            delta: s.dw,
            dw: w0 / (2.0 * p.h) * (p_m - alg.p_e - p.d * s.dw / w0),
            lambda_fd: w0 * (e_fd - self.c_fd * (s.lambda_fd - alg.lambda_ad)),
            lambda_1d: -w0 * self.c_1d * (s.lambda_1d - alg.lambda_ad),
            lambda_1q: -w0 * self.c_1q * (s.lambda_1q - alg.lambda_aq),
            lambda_2q: -w0 * self.c_2q * (s.lambda_2q - alg.lambda_aq),
            i_abc: [w0 * di[0], w0 * di[1], w0 * di[2]],
            theta: alg.omega_r,
        }
    }
}

/// Taylor series of one machine's states and algebraic variables.
#[derive(Debug, Clone)]
pub struct MachineSeries {
    pub delta: Vec<f64>,
    pub dw: Vec<f64>,
    pub lambda_fd: Vec<f64>,
    pub lambda_1d: Vec<f64>,
    pub lambda_1q: Vec<f64>,
    pub lambda_2q: Vec<f64>,
    pub i_abc: [Vec<f64>; 3],
    pub theta: Vec<f64>,
    pub sin: Vec<f64>,
    pub cos: Vec<f64>,
    pub i_alpha: Vec<f64>,
    pub i_beta: Vec<f64>,
    pub i_d: Vec<f64>,
    pub i_q: Vec<f64>,
    pub lambda_d_pp: Vec<f64>,
    pub lambda_q_pp: Vec<f64>,
    pub lambda_ad: Vec<f64>,
    pub lambda_aq: Vec<f64>,
    pub omega_r: Vec<f64>,
    pub v_d_pp: Vec<f64>,
    pub v_q_pp: Vec<f64>,
    pub v_alpha_pp: Vec<f64>,
    pub v_beta_pp: Vec<f64>,
    pub v_abc_pp: [Vec<f64>; 3],
    pub v_alpha: Vec<f64>,
    pub v_beta: Vec<f64>,
    pub v_t_sq: Vec<f64>,
    pub v_t: Vec<f64>,
    pub torque: Vec<f64>,
    pub p_e: Vec<f64>,
}

impl MachineSeries {
    pub fn new(order: usize) -> Self {
        let z = || vec![0.0; order + 1];
        Self {
            delta: z(),
            dw: z(),
            lambda_fd: z(),
            lambda_1d: z(),
            lambda_1q: z(),
            lambda_2q: z(),
            i_abc: [z(), z(), z()],
            theta: z(),
            sin: z(),
            cos: z(),
            i_alpha: z(),
            i_beta: z(),
            i_d: z(),
            i_q: z(),
            lambda_d_pp: z(),
            lambda_q_pp: z(),
            lambda_ad: z(),
            lambda_aq: z(),
            omega_r: z(),
            v_d_pp: z(),
            v_q_pp: z(),
            v_alpha_pp: z(),
            v_beta_pp: z(),
            v_abc_pp: [z(), z(), z()],
            v_alpha: z(),
            v_beta: z(),
            v_t_sq: z(),
            v_t: z(),
            torque: z(),
            p_e: z(),
        }
    }

    pub fn order(&self) -> usize {
        self.delta.len() - 1
    }

    /// State series in [`MachineState::NAMES`] order.
    pub fn state_series(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.delta,
            1 => &self.dw,
            2 => &self.lambda_fd,
            3 => &self.lambda_1d,
            4 => &self.lambda_1q,
            5 => &self.lambda_2q,
            6..=8 => &self.i_abc[index - 6],
            9 => &self.theta,
            _ => panic!("machine state index {index} out of range"),
        }
    }

    /// Load order 0 of the states and compute order 0 of the algebraics.
    pub fn seed(
        &mut self,
        model: &MachineModel,
        s: &MachineState,
        v_abc: [&[f64]; 3],
        e_fd: &[f64],
    ) -> std::result::Result<(), SeriesError> {
        self.delta[0] = s.delta;
        self.dw[0] = s.dw;
        self.lambda_fd[0] = s.lambda_fd;
        self.lambda_1d[0] = s.lambda_1d;
        self.lambda_1q[0] = s.lambda_1q;
        self.lambda_2q[0] = s.lambda_2q;
        for ph in 0..3 {
            self.i_abc[ph][0] = s.i_abc[ph];
        }
        self.theta[0] = s.theta;
        self.advance_algebraics(model, 0, v_abc, e_fd)
    }

    /// Order `k+1` of the states from orders `≤ k` of states, algebraics and
    /// the terminal voltage, mechanical power and field voltage series.
    pub fn advance_states(
        &mut self,
        model: &MachineModel,
        k: usize,
        v_abc: [&[f64]; 3],
        p_m: &[f64],
        e_fd: &[f64],
    ) {
        let p = &model.params;
        let w0 = p.omega0;
        let inv = 1.0 / (k + 1) as f64;
        self.delta[k + 1] = self.dw[k] * inv;
        self.dw[k + 1] = w0 / (2.0 * p.h) * (p_m[k] - self.p_e[k] - p.d * self.dw[k] / w0) * inv;
        self.lambda_fd[k + 1] =
            w0 * (e_fd[k] - model.c_fd * (self.lambda_fd[k] - self.lambda_ad[k])) * inv;
        self.lambda_1d[k + 1] = -w0 * model.c_1d * (self.lambda_1d[k] - self.lambda_ad[k]) * inv;
        self.lambda_1q[k + 1] = -w0 * model.c_1q * (self.lambda_1q[k] - self.lambda_aq[k]) * inv;
        self.lambda_2q[k + 1] = -w0 * model.c_2q * (self.lambda_2q[k] - self.lambda_aq[k]) * inv;
        let i_k = [self.i_abc[0][k], self.i_abc[1][k], self.i_abc[2][k]];
        let ri = mul3(&p.r_s, i_k);
        let drive = [
            self.v_abc_pp[0][k] - v_abc[0][k] - ri[0],
            self.v_abc_pp[1][k] - v_abc[1][k] - ri[1],
            self.v_abc_pp[2][k] - v_abc[2][k] - ri[2],
        ];
        let di = mul3(&model.l_abc_inv, drive);
        for ph in 0..3 {
            self.i_abc[ph][k + 1] = w0 * di[ph] * inv;
        }
        self.theta[k + 1] = self.omega_r[k] * inv;
    }

    /// Order `n` of every algebraic series; states must be known to order `n`.
    pub fn advance_algebraics(
        &mut self,
        model: &MachineModel,
        n: usize,
        v_abc: [&[f64]; 3],
        e_fd: &[f64],
    ) -> std::result::Result<(), SeriesError> {
        let p = &model.params;
        let w0 = p.omega0;
        if n == 0 {
            (self.sin[0], self.cos[0]) = self.theta[0].sin_cos();
        } else {
            (self.sin[n], self.cos[n]) = sin_cos_coeff(&self.theta, &self.sin, &self.cos, n)?;
        }
        let (i_al, i_be) = alpha_beta([self.i_abc[0][n], self.i_abc[1][n], self.i_abc[2][n]]);
        self.i_alpha[n] = i_al;
        self.i_beta[n] = i_be;
        let (ca, cb) = (&self.cos, &self.sin);
        let mut i_d = 0.0;
        let mut i_q = 0.0;
        for j in 0..=n {
            i_d += self.i_alpha[j] * ca[n - j] + self.i_beta[j] * cb[n - j];
            i_q += -self.i_alpha[j] * cb[n - j] + self.i_beta[j] * ca[n - j];
        }
        self.i_d[n] = i_d;
        self.i_q[n] = i_q;
        self.lambda_d_pp[n] =
            model.l_ad_pp * (self.lambda_fd[n] / p.l_fdl + self.lambda_1d[n] / p.l_1dl);
        self.lambda_q_pp[n] =
            model.l_aq_pp * (self.lambda_1q[n] / p.l_1ql + self.lambda_2q[n] / p.l_2ql);
        let lad = self.lambda_d_pp[n] - model.l_ad_pp * i_d;
        let laq = self.lambda_q_pp[n] - model.l_aq_pp * i_q;
        self.lambda_ad[n] = lad;
        self.lambda_aq[n] = laq;
        self.omega_r[n] = self.dw[n] + if n == 0 { w0 } else { 0.0 };
        let wl_q = product_coeff(&self.omega_r, &self.lambda_q_pp, n);
        let wl_d = product_coeff(&self.omega_r, &self.lambda_d_pp, n);
        let vd = model.l_ad_pp
            * (e_fd[n] / p.l_fdl
                - model.k_fd * (self.lambda_fd[n] - lad)
                - model.k_1d * (self.lambda_1d[n] - lad))
            - wl_q / w0;
        let vq = -model.l_aq_pp
            * (model.k_1q * (self.lambda_1q[n] - laq) + model.k_2q * (self.lambda_2q[n] - laq))
            + wl_d / w0;
        self.v_d_pp[n] = vd;
        self.v_q_pp[n] = vq;
        let mut va = 0.0;
        let mut vb = 0.0;
        for j in 0..=n {
            va += self.v_d_pp[j] * ca[n - j] - self.v_q_pp[j] * cb[n - j];
            vb += self.v_d_pp[j] * cb[n - j] + self.v_q_pp[j] * ca[n - j];
        }
        self.v_alpha_pp[n] = va;
        self.v_beta_pp[n] = vb;
        let v_pp = abc_from_alpha_beta(va, vb);
        for ph in 0..3 {
            self.v_abc_pp[ph][n] = v_pp[ph];
        }
        let (v_al, v_be) = alpha_beta([v_abc[0][n], v_abc[1][n], v_abc[2][n]]);
        self.v_alpha[n] = v_al;
        self.v_beta[n] = v_be;
        if n == 0 {
            self.v_t_sq[0] = v_al * v_al + v_be * v_be;
            self.v_t[0] = self.v_t_sq[0].sqrt();
        } else {
            (self.v_t_sq[n], self.v_t[n]) = hypot_coeff(&self.v_alpha, &self.v_beta, &self.v_t, n)?;
        }
        let mut te = 0.0;
        for j in 0..=n {
            te += self.lambda_ad[j] * self.i_q[n - j] - self.lambda_aq[j] * self.i_d[n - j];
        }
        self.torque[n] = te;
        self.p_e[n] = product_coeff(&self.omega_r, &self.torque, n) / w0;
        Ok(())
    }

    /// States at order `k+1` followed by algebraics at order `k+1`.
    ///
    /// The inputs must be known to order `k` (terminal voltage, `p_m`) and to
    /// order `k+1` (terminal voltage, `e_fd`) respectively.
    pub fn advance(
        &mut self,
        model: &MachineModel,
        k: usize,
        v_abc: [&[f64]; 3],
        p_m: &[f64],
        e_fd: &[f64],
    ) -> std::result::Result<(), SeriesError> {
        self.advance_states(model, k, v_abc, p_m, e_fd);
        self.advance_algebraics(model, k + 1, v_abc, e_fd)
    }

    /// Evaluate the state series at offset `h` from the expansion point.
    pub fn state_at(&self, h: f64) -> MachineState {
        use crate::dt_algebra::horner;
        MachineState {
            delta: horner(&self.delta, h),
            dw: horner(&self.dw, h),
            lambda_fd: horner(&self.lambda_fd, h),
            lambda_1d: horner(&self.lambda_1d, h),
            lambda_1q: horner(&self.lambda_1q, h),
            lambda_2q: horner(&self.lambda_2q, h),
            i_abc: [
                horner(&self.i_abc[0], h),
                horner(&self.i_abc[1], h),
                horner(&self.i_abc[2], h),
            ],
            theta: horner(&self.theta, h),
        }
    }

    /// Order-1 coefficients as a state-shaped value.
    pub fn first_order(&self) -> MachineState {
        MachineState {
            delta: self.delta[1],
            dw: self.dw[1],
            lambda_fd: self.lambda_fd[1],
            lambda_1d: self.lambda_1d[1],
            lambda_1q: self.lambda_1q[1],
            lambda_2q: self.lambda_2q[1],
            i_abc: [self.i_abc[0][1], self.i_abc[1][1], self.i_abc[2][1]],
            theta: self.theta[1],
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Round-rotor machine on its own 900 MVA base (Kundur two-area unit data).
    pub(crate) fn sample_params() -> MachineParams {
        // the shipped dataset stores these on 100 MVA; scale back by 9
        let z = 9.0;
        MachineParams {
            h: 6.5,
            d: 0.0,
            omega0: 2.0 * PI * 60.0,
            pole_count: 2,
            r_fd: 6.287_602_690_050_187e-5 * z,
            r_1d: 0.001_964_875_840_640_683 * z,
            r_1q: 0.001_441_620_861_339_631_6 * z,
            r_2q: 0.002_406_972_904_784_836_7 * z,
            l_fdl: 0.011_851_851_851_851_85 * z,
            l_1dl: 0.011_111_111_111_111_108 * z,
            l_1ql: 0.050_724_637_681_159_424 * z,
            l_2ql: 0.006_481_481_481_481_479_6 * z,
            l_ad: 1.6,
            l_aq: 1.5,
            l_al: 0.2,
            l_0: 0.1,
            r_s: Matrix3::identity() * 0.0025,
        }
    }

    #[test]
    fn park_inverse_pairs() {
        for theta in [0.0, PI / 4.0, 1.7] {
            let prod = park(theta) * park_inv(theta);
            assert!((prod - Matrix3::identity()).abs().max() < 1e-15, "{prod}");
        }
    }

    #[test]
    fn park_d_row_at_zero() {
        let p = park(0.0);
        assert_relative_eq!(p[(1, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p[(1, 1)], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p[(1, 2)], -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn balanced_set_maps_to_d_axis() {
        let theta: f64 = 0.83;
        let i = nalgebra::Vector3::new(
            theta.cos(),
            (theta - 2.0 * PI / 3.0).cos(),
            (theta + 2.0 * PI / 3.0).cos(),
        );
        let i0dq = park(theta) * i;
        assert!(i0dq[0].abs() < 1e-15);
        assert_relative_eq!(i0dq[1], 1.0, epsilon = 1e-15);
        assert!(i0dq[2].abs() < 1e-15);
    }

    #[test]
    fn alpha_beta_helpers_match_park() {
        let x = [0.3, -1.1, 0.5];
        let theta: f64 = 2.2;
        let (a, b) = alpha_beta(x);
        let (s, c) = theta.sin_cos();
        let dq = park(theta) * nalgebra::Vector3::from(x);
        assert_relative_eq!(a * c + b * s, dq[1], epsilon = 1e-15);
        assert_relative_eq!(-a * s + b * c, dq[2], epsilon = 1e-15);
        let back = abc_from_alpha_beta(a, b);
        let zero_seq = (x[0] + x[1] + x[2]) / 3.0;
        for ph in 0..3 {
            assert_relative_eq!(back[ph] + zero_seq, x[ph], epsilon = 1e-15);
        }
    }

    #[test]
    fn park_series_frozen_angle() {
        let theta = CoeffSeries::constant(0.7, 5, 0.0);
        let ps = park_series(&theta).unwrap();
        let p = park(0.7);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(ps.forward[i][j].coeffs()[0], p[(i, j)], epsilon = 1e-15);
                assert!(ps.forward[i][j].coeffs()[1..].iter().all(|c| *c == 0.0));
            }
        }
    }

    #[test]
    fn park_series_product_is_identity() {
        let theta = CoeffSeries::from_coeffs(vec![0.4, 377.0, 2.0, -0.5, 0.1, 0.0, 0.0], 0.0).unwrap();
        let ps = park_series(&theta).unwrap();
        let p0 = park(0.4);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(ps.forward[i][j].coeffs()[0], p0[(i, j)], epsilon = 1e-15);
                let mut acc = CoeffSeries::zeros(6, 0.0);
                for m in 0..3 {
                    acc = acc.add(&ps.forward[i][m].mul(&ps.inverse[m][j]).unwrap()).unwrap();
                }
                for (k, c) in acc.coeffs().iter().enumerate() {
                    let expected = if k == 0 && i == j { 1.0 } else { 0.0 };
                    // coefficients scale like 377^k
                    let scale = 377f64.powi(k as i32);
                    assert!((c - expected).abs() <= 1e-11 * scale, "({i},{j}) k={k}: {c}");
                }
            }
        }
    }

    #[test]
    fn electrical_power_substitution() {
        // λ_ad = 1, i_q = 1, λ_aq = 0 at rated speed gives p_e = 1 per unit
        let m = MachineModel::new(sample_params()).unwrap();
        let p = m.params().clone();
        let theta: f64 = 0.3;
        let lam_d = 1.0 / (m.l_ad_pp() * (1.0 / p.l_fdl + 1.0 / p.l_1dl));
        let lam_q = 1.0 / (1.0 / p.l_1ql + 1.0 / p.l_2ql);
        let state = MachineState {
            lambda_fd: lam_d,
            lambda_1d: lam_d,
            lambda_1q: lam_q,
            lambda_2q: lam_q,
            i_abc: abc_from_alpha_beta(-theta.sin(), theta.cos()),
            theta,
            ..Default::default()
        };
        let alg = m.algebraics(&state, [0.0; 3], 0.0);
        assert!(alg.i_d.abs() < 1e-15);
        assert_relative_eq!(alg.i_q, 1.0, epsilon = 1e-15);
        assert_relative_eq!(alg.lambda_ad, 1.0, epsilon = 1e-13);
        assert!(alg.lambda_aq.abs() < 1e-13);
        assert_relative_eq!(alg.p_e, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn mutual_flux_is_weighted_parallel_sum() {
        let m = MachineModel::new(sample_params()).unwrap();
        let p = m.params();
        let lam = 0.8;
        let expected = lam * (1.0 / p.l_fdl + 1.0 / p.l_1dl)
            / (1.0 / p.l_ad + 1.0 / p.l_fdl + 1.0 / p.l_1dl);
        assert_relative_eq!(m.lambda_ad(lam, lam, 0.0), expected, epsilon = 1e-15);
        let expected_q = lam * (1.0 / p.l_1ql + 1.0 / p.l_2ql)
            / (1.0 / p.l_aq + 1.0 / p.l_1ql + 1.0 / p.l_2ql);
        assert_relative_eq!(m.lambda_aq(lam, lam, 0.0), expected_q, epsilon = 1e-15);
    }

    #[test]
    fn swing_and_field_balance() {
        let m = MachineModel::new(sample_params()).unwrap();
        let state = MachineState {
            lambda_fd: 1.1,
            lambda_1d: 0.9,
            lambda_1q: -0.4,
            lambda_2q: -0.3,
            i_abc: [0.5, -0.2, -0.3],
            theta: 0.4,
            ..Default::default()
        };
        let alg = m.algebraics(&state, [1.0, -0.5, -0.5], 0.0);
        let e_fd = m.params().r_fd / m.params().l_fdl * (state.lambda_fd - alg.lambda_ad);
        let alg = m.algebraics(&state, [1.0, -0.5, -0.5], e_fd);
        let rates = m.derivatives(&state, &alg, [1.0, -0.5, -0.5], alg.p_e, e_fd);
        assert!(rates.dw.abs() < 1e-12);
        assert!(rates.lambda_fd.abs() < 1e-12);
    }

    #[test]
    fn stator_inductance_is_rotor_independent() {
        let m = MachineModel::new(sample_params()).unwrap();
        for i in 0..64 {
            let theta = 2.0 * PI * i as f64 / 64.0;
            let diff = (m.l_abc_at(theta) - m.l_abc()).abs().max();
            assert!(diff < 1e-12, "θ = {theta}: {diff}");
        }
    }

    #[test]
    fn salient_rotor_rejected() {
        let mut p = sample_params();
        p.l_2ql *= 1.5;
        assert!(matches!(MachineModel::new(p), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = sample_params();
        p.h = 0.0;
        assert!(MachineModel::new(p).is_err());
        let mut p = sample_params();
        p.pole_count = 3;
        assert!(MachineModel::new(p).is_err());
    }

    fn driven_series(model: &MachineModel, state: &MachineState, order: usize) -> MachineSeries {
        // terminal voltage, p_m and e_fd held constant at their order-0 values
        let v = [vec![0.0; order + 1], vec![0.0; order + 1], vec![0.0; order + 1]];
        let mut v = v;
        v[0][0] = 0.9;
        v[1][0] = -0.3;
        v[2][0] = -0.6;
        let mut p_m = vec![0.0; order + 1];
        p_m[0] = 0.7;
        let mut e_fd = vec![0.0; order + 1];
        e_fd[0] = 0.002;
        let vr = [v[0].as_slice(), v[1].as_slice(), v[2].as_slice()];
        let mut ms = MachineSeries::new(order);
        ms.seed(model, state, vr, &e_fd).unwrap();
        for k in 0..order {
            ms.advance(model, k, vr, &p_m, &e_fd).unwrap();
        }
        ms
    }

    #[test]
    fn first_order_coefficients_equal_derivatives() {
        let m = MachineModel::new(sample_params()).unwrap();
        let state = MachineState {
            delta: 0.5,
            dw: 0.3,
            lambda_fd: 1.1,
            lambda_1d: 0.9,
            lambda_1q: -0.4,
            lambda_2q: -0.3,
            i_abc: [0.5, -0.2, -0.3],
            theta: 0.4,
        };
        let ms = driven_series(&m, &state, 4);
        let v = [0.9, -0.3, -0.6];
        let alg = m.algebraics(&state, v, 0.002);
        let rates = m.derivatives(&state, &alg, v, 0.7, 0.002);
        let dt = ms.first_order().to_array();
        for (a, b) in dt.iter().zip(rates.to_array()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert_relative_eq!(ms.p_e[0], alg.p_e, epsilon = 1e-12);
        assert_relative_eq!(ms.v_t[0], alg.v_t, epsilon = 1e-15);
    }
}
