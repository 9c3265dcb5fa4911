//! Scenario files, system assembly and steady-state initialization.
//!
//! A scenario is a JSON document in per unit on `base_mva` with angles in
//! radians. It lists nodes with their operating-point voltage phasors,
//! branches, shunt capacitances, constant-impedance loads, generators with
//! governor, exciter and dispatch, switching events and solver defaults.
//! Matrix-valued parameters accept a scalar (the same value on every phase,
//! no coupling) or a full 3×3 array. Exciter gains and limits are given on
//! the air-gap-line field base and converted to the machine's field-voltage
//! base on load.
//!
//! Phasors are peak values: a node with voltage `V∠φ` has
//! `v_a(t) = V cos(ω0 t + φ)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{Complex, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::controls::{SexsParams, Tgov1Params};
use crate::machine::{MachineModel, MachineParams, MachineState};
use crate::network::{NetworkEvent, NetworkModel, RlBranch, ShuntCap};
use crate::solvers::{Method, OdeSystem, SolverConfig};
use crate::system::{Generator, PowerSystem, TimedEvent, GEN_STATES};
use crate::{Error, Result};

/// Largest accepted current mismatch of the operating point (pu).
pub const KCL_TOL: f64 = 1e-6;
/// Largest accepted deviation of the initial state derivatives from the
/// sinusoidal steady state.
pub const DERIVATIVE_TOL: f64 = 1e-6;

const SHIPPED_TWO_AREA: &str = include_str!("../data/two_area.json");

/// A scalar applies to every phase without coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Full([[f64; 3]; 3]),
}

impl MatrixValue {
    pub fn to_matrix(&self) -> Matrix3<f64> {
        match self {
            MatrixValue::Scalar(v) => Matrix3::identity() * *v,
            MatrixValue::Full(m) => Matrix3::from_fn(|i, j| m[i][j]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phasor {
    pub magnitude: f64,
    pub angle: f64,
}

impl Phasor {
    pub fn to_complex(&self) -> Complex<f64> {
        Complex::from_polar(self.magnitude, self.angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub voltage: Phasor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuntConfig {
    pub node: String,
    pub c: MatrixValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub id: String,
    pub from_node: String,
    pub to_node: String,
    pub r: MatrixValue,
    pub l: MatrixValue,
}

/// Series RL impedance from a node to ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub id: String,
    pub node: String,
    pub r: MatrixValue,
    pub l: MatrixValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineParamsConfig {
    pub h: f64,
    pub d: f64,
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
    pub r_s: MatrixValue,
}

impl MachineParamsConfig {
    pub fn to_params(&self, omega0: f64) -> MachineParams {
        MachineParams {
            h: self.h,
            d: self.d,
            omega0,
            pole_count: self.pole_count,
            r_fd: self.r_fd,
            r_1d: self.r_1d,
            r_1q: self.r_1q,
            r_2q: self.r_2q,
            l_fdl: self.l_fdl,
            l_1dl: self.l_1dl,
            l_1ql: self.l_1ql,
            l_2ql: self.l_2ql,
            l_ad: self.l_ad,
            l_aq: self.l_aq,
            l_al: self.l_al,
            l_0: self.l_0,
            r_s: self.r_s.to_matrix(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernorConfig {
    pub r: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub dt: f64,
    pub v_max: f64,
    pub v_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExciterConfig {
    pub k_e: f64,
    pub t_e: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub e_max: f64,
    pub e_min: f64,
}

/// Generator output at the operating point (pu on the system base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dispatch {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    pub id: String,
    pub node: String,
    pub params: MachineParamsConfig,
    pub governor: GovernorConfig,
    pub exciter: ExciterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispatch: Option<Dispatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventConfig {
    /// Balanced RL fault to ground, applied at `time` and removed after
    /// `duration` seconds.
    ThreePhaseFault {
        time: f64,
        node: String,
        duration: f64,
        r_fault: f64,
        l_fault: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDefaults {
    #[serde(flatten)]
    pub method: Method,
    pub step: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl SolverDefaults {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig::new(self.method, self.step, self.t_start, self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub frequency_hz: f64,
    pub base_mva: f64,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub shunts: Vec<ShuntConfig>,
    pub branches: Vec<BranchConfig>,
    #[serde(default)]
    pub loads: Vec<LoadConfig>,
    pub machines: Vec<MachineConfig>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    pub solver: SolverDefaults,
}

fn check_unique<'a>(kind: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::config(id, format!("duplicate {kind} id")));
        }
    }
    Ok(())
}

fn check_finite(id: &str, what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(id, format!("{what} must be finite")))
    }
}

impl ScenarioConfig {
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    /// Semantic checks: unique ids, resolvable references, dispatch for
    /// every machine, well-formed events and solver defaults.
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            return Err(Error::config("frequency_hz", "must be positive"));
        }
        if !(self.base_mva > 0.0) {
            return Err(Error::config("base_mva", "must be positive"));
        }
        if self.nodes.is_empty() {
            return Err(Error::config("nodes", "at least one node is required"));
        }
        check_unique("node", self.nodes.iter().map(|n| n.id.as_str()))?;
        check_unique(
            "branch",
            self.branches.iter().map(|b| b.id.as_str()).chain(self.loads.iter().map(|l| l.id.as_str())),
        )?;
        check_unique("machine", self.machines.iter().map(|m| m.id.as_str()))?;
        let node_exists = |id: &str, owner: &str| -> Result<()> {
            if self.nodes.iter().any(|n| n.id == id) {
                Ok(())
            } else {
                Err(Error::config(owner, format!("unknown node `{id}`")))
            }
        };
        for n in &self.nodes {
            check_finite(&n.id, "voltage", &[n.voltage.magnitude, n.voltage.angle])?;
            if !(n.voltage.magnitude > 0.0) {
                return Err(Error::config(n.id.clone(), "voltage magnitude must be positive"));
            }
        }
        for s in &self.shunts {
            node_exists(&s.node, &format!("shunt at {}", s.node))?;
        }
        for b in &self.branches {
            node_exists(&b.from_node, &b.id)?;
            node_exists(&b.to_node, &b.id)?;
        }
        for l in &self.loads {
            node_exists(&l.node, &l.id)?;
        }
        for m in &self.machines {
            node_exists(&m.node, &m.id)?;
            if m.dispatch.is_none() {
                return Err(Error::config(m.id.clone(), "missing dispatch"));
            }
            if self.machines.iter().filter(|o| o.node == m.node).count() > 1 {
                return Err(Error::config(m.id.clone(), "another machine shares its node"));
            }
        }
        let t_end = self.solver.t_end;
        for e in &self.events {
            let EventConfig::ThreePhaseFault {
                time,
                node,
                duration,
                r_fault,
                l_fault,
            } = e;
            let id = format!("fault at {node}");
            node_exists(node, &id)?;
            check_finite(&id, "event parameters", &[*time, *duration, *r_fault, *l_fault])?;
            if !(*time >= 0.0 && *time <= t_end) {
                return Err(Error::config(id, format!("time {time} outside [0, {t_end}]")));
            }
            if !(*duration > 0.0) {
                return Err(Error::config(id, "duration must be positive"));
            }
            if !(*r_fault >= 0.0 && *l_fault > 0.0) {
                return Err(Error::config(id, "fault needs r_fault ≥ 0 and l_fault > 0"));
            }
            for other in &self.events {
                let EventConfig::ThreePhaseFault {
                    node: n2,
                    r_fault: r2,
                    l_fault: l2,
                    ..
                } = other;
                if n2 == node && (r2 != r_fault || l2 != l_fault) {
                    return Err(Error::config(id, "faults at one node must share r_fault and l_fault"));
                }
            }
        }
        self.solver.to_config().validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse and validate a scenario document.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Read, parse and validate a scenario file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

/// The bundled two-area, four-machine system with its bus-7 fault.
pub fn shipped_two_area() -> ScenarioConfig {
    parse_config_str(SHIPPED_TWO_AREA).expect("bundled scenario is valid")
}

/// Network with every branch, shunt, load and a fault slot per faulted node.
pub fn build_network(config: &ScenarioConfig) -> Result<NetworkModel> {
    let ids: Vec<String> = config.nodes.iter().map(|n| n.id.clone()).collect();
    let index = |id: &str| ids.iter().position(|n| n == id).ok_or_else(|| Error::UnknownNode(id.into()));
    let mut branches = Vec::with_capacity(config.branches.len() + config.loads.len());
    for b in &config.branches {
        branches.push(RlBranch::new(
            b.id.clone(),
            index(&b.from_node)?,
            Some(index(&b.to_node)?),
            b.r.to_matrix(),
            b.l.to_matrix(),
        )?);
    }
    for l in &config.loads {
        branches.push(RlBranch::new(l.id.clone(), index(&l.node)?, None, l.r.to_matrix(), l.l.to_matrix())?);
    }
    let shunts = config
        .shunts
        .iter()
        .map(|s| {
            Ok(ShuntCap {
                node: index(&s.node)?,
                c: s.c.to_matrix(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = NetworkModel::new(config.omega0(), ids, branches, shunts)?;
    for e in &config.events {
        let EventConfig::ThreePhaseFault {
            node, r_fault, l_fault, ..
        } = e;
        net.add_fault_slot(node, *r_fault, *l_fault)?;
    }
    Ok(net)
}

fn timed_events(config: &ScenarioConfig) -> Vec<TimedEvent> {
    let mut out = Vec::with_capacity(2 * config.events.len());
    for e in &config.events {
        let EventConfig::ThreePhaseFault {
            time, node, duration, ..
        } = e;
        out.push(TimedEvent {
            time: *time,
            event: NetworkEvent::FaultOn { node: node.clone() },
        });
        out.push(TimedEvent {
            time: time + duration,
            event: NetworkEvent::FaultOff { node: node.clone() },
        });
    }
    out
}

/// Time dependence of one state in sinusoidal steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyState {
    Constant(f64),
    /// `Re(X e^{jω0 t})`.
    Sinusoid(Complex<f64>),
    /// `value + ω0 (t − t_start)`.
    Ramp(f64),
}

/// Exact steady-state trajectory of every state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateTrajectory {
    pub omega0: f64,
    pub t_start: f64,
    pub states: Vec<SteadyState>,
}

impl SteadyStateTrajectory {
    pub fn at(&self, t: f64) -> Vec<f64> {
        let w = self.omega0;
        let rot = Complex::from_polar(1.0, w * t);
        self.states
            .iter()
            .map(|s| match s {
                SteadyState::Constant(v) => *v,
                SteadyState::Sinusoid(x) => (x * rot).re,
                SteadyState::Ramp(v) => v + w * (t - self.t_start),
            })
            .collect()
    }

    pub fn rate(&self, t: f64) -> Vec<f64> {
        let w = self.omega0;
        let rot = Complex::from_polar(1.0, w * t);
        self.states
            .iter()
            .map(|s| match s {
                SteadyState::Constant(_) => 0.0,
                SteadyState::Sinusoid(x) => (Complex::new(0.0, w) * x * rot).re,
                SteadyState::Ramp(_) => w,
            })
            .collect()
    }
}

/// Residuals of the initialization self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    /// Largest nodal current mismatch of the operating point.
    pub kcl_residual: f64,
    /// `‖f(x0) − ẋ_ss(t_start)‖∞`.
    pub derivative_residual: f64,
    /// States with the largest derivative residual, largest first.
    pub worst: Vec<(String, f64)>,
}

/// An assembled, initialized system ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: PowerSystem,
    pub x0: Vec<f64>,
    pub steady_state: SteadyStateTrajectory,
    pub t_start: f64,
    pub report: InitReport,
    pub solver: SolverDefaults,
}

impl Scenario {
    /// Assemble the system and initialize it in steady state at `t_start`.
    pub fn build(config: &ScenarioConfig, t_start: f64) -> Result<Self> {
        config.validate()?;
        let network = build_network(config)?;
        let (generators, x0, steady_state, kcl) = init_steady_state(config, &network, t_start)?;
        let system = PowerSystem::new(network, generators, timed_events(config))?;
        let mut f = vec![0.0; system.dim()];
        system.rhs(t_start, &x0, &mut f)?;
        let expected = steady_state.rate(t_start);
        let names = system.state_names();
        let mut dev: Vec<(String, f64)> = names
            .into_iter()
            .zip(f.iter().zip(&expected).map(|(a, b)| (a - b).abs()))
            .collect();
        dev.sort_by(|a, b| b.1.total_cmp(&a.1));
        dev.truncate(5);
        let derivative_residual = dev.first().map_or(0.0, |d| d.1);
        if !(derivative_residual < DERIVATIVE_TOL) {
            let list: Vec<String> = dev.iter().map(|(n, v)| format!("{n} ({v:.3e})")).collect();
            return Err(Error::Init(format!(
                "state derivatives deviate from steady state by up to {derivative_residual:.3e}: {}",
                list.join(", ")
            )));
        }
        Ok(Self {
            system,
            x0,
            steady_state,
            t_start,
            report: InitReport {
                kcl_residual: kcl,
                derivative_residual,
                worst: dev,
            },
            solver: config.solver.clone(),
        })
    }

    /// Solver defaults of the scenario, starting at the initialization time.
    pub fn solver_config(&self) -> SolverConfig {
        let mut c = self.solver.to_config();
        c.t_start = self.t_start;
        c
    }
}

/// Phasors of the three phases of a positive-sequence quantity `x`.
fn abc_phasors(x: Complex<f64>) -> Vector3<Complex<f64>> {
    let a = Complex::from_polar(1.0, 2.0 * PI / 3.0);
    Vector3::new(x, x * a.conj(), x * a)
}

fn complex_matrix(re: &Matrix3<f64>, im: &Matrix3<f64>) -> Matrix3<Complex<f64>> {
    Matrix3::from_fn(|i, j| Complex::new(re[(i, j)], im[(i, j)]))
}

/// Positive-sequence value of a balanced 3×3 parameter matrix.
fn positive_sequence(id: &str, what: &str, m: &Matrix3<f64>) -> Result<f64> {
    let (s, mu) = (m[(0, 0)], m[(0, 1)]);
    let balanced = (0..3).all(|i| {
        (0..3).all(|j| {
            let want = if i == j { s } else { mu };
            (m[(i, j)] - want).abs() <= 1e-12 * s.abs().max(1.0)
        })
    });
    if balanced {
        Ok(s - mu)
    } else {
        Err(Error::config(id, format!("{what} must be balanced (equal self and mutual terms)")))
    }
}

type InitParts = (Vec<Generator>, Vec<f64>, SteadyStateTrajectory, f64);

/// Machine, control and network states of the sinusoidal steady state
/// described by the operating point, plus the operating-point KCL residual.
pub fn init_steady_state(config: &ScenarioConfig, network: &NetworkModel, t_start: f64) -> Result<InitParts> {
    let w0 = config.omega0();
    let node_v: Vec<Complex<f64>> = config.nodes.iter().map(|n| n.voltage.to_complex()).collect();
    let nn = node_v.len();
    let nb = GEN_STATES * config.machines.len();
    let mut states = vec![SteadyState::Constant(0.0); nb + network.dim()];

    // nodal balance: generator output + branch currents in = capacitor current
    let mut mismatch = vec![Vector3::<Complex<f64>>::zeros(); nn];
    for (n, v) in node_v.iter().enumerate() {
        let v_abc = abc_phasors(*v);
        let c = complex_matrix(&Matrix3::zeros(), &network_shunt(network, n));
        mismatch[n] -= c * v_abc;
        for ph in 0..3 {
            states[nb + network.node_offset(n) + ph] = SteadyState::Sinusoid(v_abc[ph]);
        }
    }
    for (b, br) in network.branches().iter().enumerate() {
        let z = complex_matrix(&br.r, &br.l);
        let z_inv = z
            .try_inverse()
            .ok_or_else(|| Error::Singular {
                what: format!("impedance of branch `{}`", br.id),
                det: 0.0,
            })?;
        let dv = abc_phasors(node_v[br.from]) - br.to.map_or(Vector3::zeros(), |t| abc_phasors(node_v[t]));
        let i = z_inv * dv;
        mismatch[br.from] -= i;
        if let Some(t) = br.to {
            mismatch[t] += i;
        }
        for ph in 0..3 {
            states[nb + network.branch_offset(b) + ph] = SteadyState::Sinusoid(i[ph]);
        }
    }

    let mut generators = Vec::with_capacity(config.machines.len());
    for (g, m) in config.machines.iter().enumerate() {
        let node = network.node_index(&m.node).ok_or_else(|| Error::UnknownNode(m.node.clone()))?;
        let model = MachineModel::new(m.params.to_params(w0)).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::config(m.id.clone(), format!("{name}: {reason}")),
            other => other,
        })?;
        let p = model.params().clone();
        let dispatch = m.dispatch.as_ref().ok_or_else(|| Error::config(m.id.clone(), "missing dispatch"))?;
        let v = node_v[node];
        let i = (Complex::new(dispatch.p, dispatch.q) / v).conj();
        mismatch[node] += abc_phasors(i);

        let r_s = positive_sequence(&m.id, "r_s", &p.r_s)?;
        let x_q = p.l_al + p.l_aq;
        let x_d = p.l_al + p.l_ad;
        let e = v + Complex::new(r_s, x_q) * i;
        let delta = e.arg();
        let theta0 = delta - FRAC_PI_2;
        // rotor frame: d + jq = phasor · e^{−jθ0}
        let rot = Complex::from_polar(1.0, -theta0);
        let (vdq, idq) = (v * rot, i * rot);
        let (v_q, i_d, i_q) = (vdq.im, idq.re, idq.im);
        let i_fd = (v_q + r_s * i_q + x_d * i_d) / p.l_ad;
        let lambda_ad = p.l_ad * (-i_d + i_fd);
        let lambda_aq = -p.l_aq * i_q;
        let e_fd = p.r_fd * i_fd;

        let o = GEN_STATES * g;
        let i_abc = abc_phasors(i);
        let theta = w0 * t_start + theta0;
        let ms = MachineState {
            delta,
            dw: 0.0,
            lambda_fd: p.l_fdl * i_fd + lambda_ad,
            lambda_1d: lambda_ad,
            lambda_1q: lambda_aq,
            lambda_2q: lambda_aq,
            i_abc: [0.0; 3],
            theta,
        };
        for (j, value) in ms.to_array().into_iter().enumerate() {
            states[o + j] = SteadyState::Constant(value);
        }
        for ph in 0..3 {
            states[o + 6 + ph] = SteadyState::Sinusoid(i_abc[ph]);
        }
        states[o + 9] = SteadyState::Ramp(theta);

        // mechanical power and references that make the point an equilibrium
        let rot_t = Complex::from_polar(1.0, w0 * t_start);
        let inst = |x: Complex<f64>| (x * rot_t).re;
        let mut s_now = ms;
        s_now.i_abc = [inst(i_abc[0]), inst(i_abc[1]), inst(i_abc[2])];
        let v_abc = abc_phasors(v);
        let alg = model.algebraics(&s_now, [inst(v_abc[0]), inst(v_abc[1]), inst(v_abc[2])], e_fd);
        let p_m = alg.p_e;
        let gc = &m.governor;
        let governor = Tgov1Params {
            r: gc.r,
            t1: gc.t1,
            t2: gc.t2,
            t3: gc.t3,
            dt: gc.dt,
            v_max: gc.v_max,
            v_min: gc.v_min,
            p_ref: gc.r * p_m,
        };
        if !(p_m >= gc.v_min && p_m <= gc.v_max) {
            return Err(Error::Init(format!(
                "{}: mechanical power {p_m:.6} outside valve limits [{}, {}]",
                m.id, gc.v_min, gc.v_max
            )));
        }
        let ec = &m.exciter;
        let field_base = p.r_fd / p.l_ad;
        let exciter = SexsParams {
            k_e: ec.k_e * field_base,
            t_e: ec.t_e,
            t_a: ec.t_a,
            t_b: ec.t_b,
            e_max: ec.e_max * field_base,
            e_min: ec.e_min * field_base,
            v_ref: 0.0,
        };
        let v3 = e_fd / exciter.k_e;
        let exciter = SexsParams {
            v_ref: alg.v_t + v3,
            ..exciter
        };
        if !(e_fd >= exciter.e_min && e_fd <= exciter.e_max) {
            return Err(Error::Init(format!(
                "{}: field voltage {:.6} outside exciter limits [{}, {}] (air-gap-line base)",
                m.id,
                e_fd / field_base,
                ec.e_min,
                ec.e_max
            )));
        }
        for (j, value) in [p_m, p_m, e_fd, v3].into_iter().enumerate() {
            states[o + MachineState::LEN + j] = SteadyState::Constant(value);
        }
        generators.push(Generator {
            id: m.id.clone(),
            node,
            model,
            governor,
            exciter,
        });
    }

    let kcl = mismatch
        .iter()
        .flat_map(|m| m.iter().map(|c| c.norm()))
        .fold(0.0, f64::max);
    if !(kcl < KCL_TOL) {
        let (worst, _) = mismatch
            .iter()
            .enumerate()
            .map(|(n, m)| (n, m.iter().map(|c| c.norm()).fold(0.0, f64::max)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one node");
        return Err(Error::Init(format!(
            "operating point violates current balance by {kcl:.3e} pu, worst at node `{}`",
            config.nodes[worst].id
        )));
    }
    let trajectory = SteadyStateTrajectory {
        omega0: w0,
        t_start,
        states,
    };
    let x0 = trajectory.at(t_start);
    Ok((generators, x0, trajectory, kcl))
}

/// Total shunt capacitance at node `n`.
fn network_shunt(network: &NetworkModel, n: usize) -> Matrix3<f64> {
    network
        .shunts()
        .iter()
        .filter(|s| s.node == n)
        .fold(Matrix3::zeros(), |acc, s| acc + s.c)
}
