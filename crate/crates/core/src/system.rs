//! The coupled system of generators, controls and network, exposed to the
//! solvers as one state vector.
//!
//! State layout: 14 states per generator (the ten machine states followed by
//! `p1`, `p2`, `e_fd`, `v3`), then the network states. Names are qualified by
//! component id, e.g. `gen2.i_a`, `line7_8a.i_b`, `bus7.v_a`.

use crate::controls::{
    sexs_derivatives, sexs_derivatives_held, tgov1_derivatives, tgov1_derivatives_held, ControlSeries,
    SexsParams, Tgov1Params,
};
use crate::dt_algebra::{horner, SeriesError, EPS_SQRT};
use crate::machine::{alpha_beta, MachineAlgebraic, MachineModel, MachineSeries, MachineState};
use crate::network::{NetworkEvent, NetworkModel, NetworkSeries};
use crate::solvers::{OdeSystem, StateBound, TaylorModel};
use crate::{Abc, Error, Result};

/// Control states appended to the machine states of each generator.
pub const CONTROL_NAMES: [&str; 4] = ["p1", "p2", "e_fd", "v3"];
/// States per generator.
pub const GEN_STATES: usize = MachineState::LEN + CONTROL_NAMES.len();

const P1: usize = MachineState::LEN;
const P2: usize = MachineState::LEN + 1;
const EFD: usize = MachineState::LEN + 2;
const V3: usize = MachineState::LEN + 3;

/// A machine with its governor and exciter, connected at a network node.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub node: usize,
    pub model: MachineModel,
    pub governor: Tgov1Params,
    pub exciter: SexsParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub time: f64,
    pub event: NetworkEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    omega0: f64,
    generators: Vec<Generator>,
    network: NetworkModel,
    events: Vec<TimedEvent>,
    names: Vec<String>,
}

impl PowerSystem {
    /// Assemble a system; events are sorted by time and checked against the
    /// network's fault slots.
    pub fn new(network: NetworkModel, generators: Vec<Generator>, mut events: Vec<TimedEvent>) -> Result<Self> {
        let omega0 = network.omega0();
        for g in &generators {
            if g.node >= network.nodes().len() {
                return Err(Error::config(g.id.clone(), "generator node out of range"));
            }
            if (g.model.omega0() - omega0).abs() > 1e-12 * omega0 {
                return Err(Error::config(g.id.clone(), "machine frequency differs from the network"));
            }
            g.governor.validate()?;
            g.exciter.validate()?;
        }
        for (i, g) in generators.iter().enumerate() {
            if generators[..i].iter().any(|o| o.id == g.id) {
                return Err(Error::config(g.id.clone(), "duplicate generator id"));
            }
        }
        if events.iter().any(|e| !e.time.is_finite()) {
            return Err(Error::config("events", "event time must be finite"));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut probe = network.clone();
        for e in &events {
            probe.apply_event_mut(&e.event)?;
        }
        let mut names = Vec::with_capacity(GEN_STATES * generators.len() + network.dim());
        for g in &generators {
            names.extend(MachineState::NAMES.iter().map(|n| format!("{}.{n}", g.id)));
            names.extend(CONTROL_NAMES.iter().map(|n| format!("{}.{n}", g.id)));
        }
        names.extend(network.state_names());
        Ok(Self {
            omega0,
            generators,
            network,
            events,
            names,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn network(&self) -> &NetworkModel {
        &self.network
    }

    pub fn events(&self) -> &[TimedEvent] {
        &self.events
    }

    /// Same system without switching events.
    pub fn without_events(&self) -> Self {
        Self {
            events: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_events(&self, events: Vec<TimedEvent>) -> Result<Self> {
        Self::new(self.network.clone(), self.generators.clone(), events)
    }

    /// Mutable access to a generator's controls, e.g. to tighten limits.
    pub fn generator_mut(&mut self, g: usize) -> &mut Generator {
        &mut self.generators[g]
    }

    pub fn generator_offset(&self, g: usize) -> usize {
        GEN_STATES * g
    }

    pub fn network_offset(&self) -> usize {
        GEN_STATES * self.generators.len()
    }

    fn node_voltage(&self, x: &[f64], node: usize) -> Abc {
        let off = self.network_offset() + self.network.node_offset(node);
        [x[off], x[off + 1], x[off + 2]]
    }

    /// Algebraic variables of every generator at state `x`.
    pub fn algebraics(&self, x: &[f64]) -> Vec<MachineAlgebraic> {
        self.generators
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                let o = self.generator_offset(g);
                let s = MachineState::from_slice(&x[o..]);
                gen.model.algebraics(&s, self.node_voltage(x, gen.node), x[o + EFD])
            })
            .collect()
    }

    /// Right-hand side; limiter decisions are taken from `held` when given,
    /// otherwise from `x`, and reported through `flags`.
    fn rhs_with(
        &self,
        t: f64,
        x: &[f64],
        held: Option<&[bool]>,
        dx: &mut [f64],
        mut flags: Option<&mut Vec<bool>>,
    ) -> Result<()> {
        let nb = self.network_offset();
        let mut inj = vec![[0.0; 3]; self.network.nodes().len()];
        let algs = self.algebraics(x);
        for (g, gen) in self.generators.iter().enumerate() {
            let i = &x[self.generator_offset(g) + 6..];
            for ph in 0..3 {
                inj[gen.node][ph] += i[ph];
            }
        }
        self.network.derivatives(&x[nb..], &inj, &mut dx[nb..]);
        for (g, gen) in self.generators.iter().enumerate() {
            let o = self.generator_offset(g);
            let alg = &algs[g];
            let s = MachineState::from_slice(&x[o..]);
            let v_abc = self.node_voltage(x, gen.node);
            if alg.v_t < EPS_SQRT {
                return Err(self.series_error(t, g, SeriesError::SingularMagnitude { value: alg.v_t }));
            }
            let (v_al, v_be) = alpha_beta(v_abc);
            let off = nb + self.network.node_offset(gen.node);
            let (dv_al, dv_be) = alpha_beta([dx[off], dx[off + 1], dx[off + 2]]);
            let dv_t = (v_al * dv_al + v_be * dv_be) / alg.v_t;
            let dw_pu = s.dw / self.omega0;
            let (gov, exc) = match held {
                Some(h) => (
                    tgov1_derivatives_held(x[o + P1], x[o + P2], &gen.governor, dw_pu, h[2 * g]),
                    sexs_derivatives_held(x[o + EFD], x[o + V3], &gen.exciter, alg.v_t, dv_t, h[2 * g + 1]),
                ),
                None => (
                    tgov1_derivatives(x[o + P1], x[o + P2], &gen.governor, dw_pu),
                    sexs_derivatives(x[o + EFD], x[o + V3], &gen.exciter, alg.v_t, dv_t),
                ),
            };
            if let Some(f) = flags.as_deref_mut() {
                f.push(gov.clamped);
                f.push(exc.clamped);
            }
            let md = gen.model.derivatives(&s, alg, v_abc, gov.p_m, x[o + EFD]);
            md.write_to(&mut dx[o..]);
            dx[o + P1] = gov.dp1;
            dx[o + P2] = gov.dp2;
            dx[o + EFD] = exc.de_fd;
            dx[o + V3] = exc.dv3;
        }
        Ok(())
    }

    fn series_error(&self, t: f64, g: usize, e: SeriesError) -> Error {
        Error::Step {
            time: t,
            variable: format!("{}.v_t", self.generators[g].id),
            reason: e.to_string(),
        }
    }
}

impl OdeSystem for PowerSystem {
    fn dim(&self) -> usize {
        self.names.len()
    }

    fn state_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.rhs_with(t, x, None, dx, None)
    }

    fn switches(&self, t: f64, x: &[f64]) -> Result<Vec<bool>> {
        let mut dx = vec![0.0; x.len()];
        let mut flags = Vec::with_capacity(2 * self.generators.len());
        self.rhs_with(t, x, None, &mut dx, Some(&mut flags))?;
        Ok(flags)
    }

    fn rhs_held(&self, t: f64, x: &[f64], switches: &[bool], dx: &mut [f64]) -> Result<()> {
        self.rhs_with(t, x, Some(switches), dx, None)
    }

    fn project(&self, x: &mut [f64]) {
        for (g, gen) in self.generators.iter().enumerate() {
            let o = self.generator_offset(g);
            x[o + P1] = x[o + P1].clamp(gen.governor.v_min, gen.governor.v_max);
            x[o + EFD] = x[o + EFD].clamp(gen.exciter.e_min, gen.exciter.e_max);
        }
    }

    fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    fn apply_event(&mut self, index: usize, x: &mut [f64]) -> Result<()> {
        let slot = self.network.apply_event_mut(&self.events[index].event)?;
        // the fault branch starts from zero current and is interrupted instantly
        let off = self.network_offset() + self.network.fault_offset(slot);
        x[off..off + 3].fill(0.0);
        Ok(())
    }
}

/// Series workspace of a [`PowerSystem`].
#[derive(Debug, Clone)]
pub struct PowerSeries {
    machines: Vec<MachineSeries>,
    controls: Vec<ControlSeries>,
    network: NetworkSeries,
    inj: Vec<Abc>,
}

impl PowerSeries {
    pub fn machine(&self, g: usize) -> &MachineSeries {
        &self.machines[g]
    }

    pub fn control(&self, g: usize) -> &ControlSeries {
        &self.controls[g]
    }

    pub fn network(&self) -> &NetworkSeries {
        &self.network
    }
}

impl TaylorModel for PowerSystem {
    type Workspace = PowerSeries;

    fn workspace(&self, order: usize) -> PowerSeries {
        PowerSeries {
            machines: self.generators.iter().map(|_| MachineSeries::new(order)).collect(),
            controls: self.generators.iter().map(|_| ControlSeries::new(order)).collect(),
            network: NetworkSeries::new(&self.network, order),
            inj: vec![[0.0; 3]; self.network.nodes().len()],
        }
    }

    fn expand(&self, ws: &mut PowerSeries, t0: f64, x0: &[f64]) -> Result<()> {
        let nb = self.network_offset();
        let net = &self.network;
        let w0 = self.omega0;
        let PowerSeries {
            machines,
            controls,
            network,
            inj,
        } = ws;
        let order = network.order();
        network.seed(&x0[nb..]);
        for (g, gen) in self.generators.iter().enumerate() {
            let o = self.generator_offset(g);
            let s = MachineState::from_slice(&x0[o..]);
            let cs = &mut controls[g];
            cs.e_fd[0] = x0[o + EFD];
            machines[g]
                .seed(&gen.model, &s, network.node_voltage(net, gen.node), &cs.e_fd)
                .map_err(|e| self.series_error(t0, g, e))?;
            let state = crate::controls::ControlState {
                p1: x0[o + P1],
                p2: x0[o + P2],
                e_fd: x0[o + EFD],
                v3: x0[o + V3],
                ..Default::default()
            };
            cs.seed(&state, &gen.governor, &gen.exciter, w0, s.dw, machines[g].v_t[0]);
        }
        for k in 0..order {
            for (g, gen) in self.generators.iter().enumerate() {
                let (ms, cs) = (&mut machines[g], &mut controls[g]);
                cs.advance_states(&gen.governor, &gen.exciter, w0, k, &ms.dw);
                ms.advance_states(&gen.model, k, network.node_voltage(net, gen.node), &cs.p_m, &cs.e_fd);
            }
            inj.iter_mut().for_each(|v| *v = [0.0; 3]);
            for (g, gen) in self.generators.iter().enumerate() {
                for ph in 0..3 {
                    inj[gen.node][ph] += machines[g].i_abc[ph][k];
                }
            }
            network.advance(net, k, inj);
            for (g, gen) in self.generators.iter().enumerate() {
                let (ms, cs) = (&mut machines[g], &mut controls[g]);
                ms.advance_algebraics(&gen.model, k + 1, network.node_voltage(net, gen.node), &cs.e_fd)
                    .map_err(|e| self.series_error(t0, g, e))?;
                cs.advance_outputs(&gen.governor, &gen.exciter, w0, k, &ms.dw, &ms.v_t);
            }
        }
        for (g, gen) in self.generators.iter().enumerate() {
            controls[g].finish(&gen.governor, &gen.exciter, w0, &machines[g].dw);
        }
        Ok(())
    }

    fn evaluate(&self, ws: &PowerSeries, h: f64, x: &mut [f64]) {
        for g in 0..self.generators.len() {
            let o = self.generator_offset(g);
            ws.machines[g].state_at(h).write_to(&mut x[o..]);
            let cs = &ws.controls[g];
            x[o + P1] = horner(&cs.p1, h);
            x[o + P2] = horner(&cs.p2, h);
            x[o + EFD] = horner(&cs.e_fd, h);
            x[o + V3] = horner(&cs.v3, h);
        }
        let nb = self.network_offset();
        ws.network.evaluate(h, &mut x[nb..]);
    }

    fn series<'w>(&self, ws: &'w PowerSeries, index: usize) -> &'w [f64] {
        let nb = self.network_offset();
        if index >= nb {
            return ws.network.row(index - nb);
        }
        let (g, j) = (index / GEN_STATES, index % GEN_STATES);
        let cs = &ws.controls[g];
        match j {
            P1 => &cs.p1,
            P2 => &cs.p2,
            EFD => &cs.e_fd,
            V3 => &cs.v3,
            _ => ws.machines[g].state_series(j),
        }
    }

    fn bounds(&self) -> Vec<StateBound> {
        let mut b = Vec::with_capacity(2 * self.generators.len());
        for (g, gen) in self.generators.iter().enumerate() {
            let o = self.generator_offset(g);
            b.push(StateBound {
                index: o + P1,
                lo: gen.governor.v_min,
                hi: gen.governor.v_max,
            });
            b.push(StateBound {
                index: o + EFD,
                lo: gen.exciter.e_min,
                hi: gen.exciter.e_max,
            });
        }
        b
    }

    fn clamped_rate<'w>(&self, ws: &'w PowerSeries, index: usize) -> Option<&'w [f64]> {
        if index >= self.network_offset() {
            return None;
        }
        let cs = &ws.controls[index / GEN_STATES];
        match index % GEN_STATES {
            P1 if cs.p1_clamped => Some(&cs.p1_free),
            EFD if cs.efd_clamped => Some(&cs.efd_free),
            _ => None,
        }
    }
}

/// A network driven by constant current injections at its nodes; a linear
/// time-invariant system.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedNetwork {
    pub network: NetworkModel,
    /// Current injected into each node.
    pub injections: Vec<Abc>,
}

impl SourcedNetwork {
    pub fn new(network: NetworkModel, injections: Vec<Abc>) -> Result<Self> {
        if injections.len() != network.nodes().len() {
            return Err(Error::config(
                "injections",
                format!("expected {} nodes, got {}", network.nodes().len(), injections.len()),
            ));
        }
        Ok(Self { network, injections })
    }
}

impl OdeSystem for SourcedNetwork {
    fn dim(&self) -> usize {
        self.network.dim()
    }

    fn state_names(&self) -> Vec<String> {
        self.network.state_names()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.network.derivatives(x, &self.injections, dx);
        Ok(())
    }
}

impl TaylorModel for SourcedNetwork {
    type Workspace = (NetworkSeries, Vec<Abc>);

    fn workspace(&self, order: usize) -> Self::Workspace {
        (NetworkSeries::new(&self.network, order), vec![[0.0; 3]; self.injections.len()])
    }

    fn expand(&self, ws: &mut Self::Workspace, _t0: f64, x0: &[f64]) -> Result<()> {
        let (series, zero) = ws;
        series.seed(x0);
        for k in 0..series.order() {
            let inj = if k == 0 { &self.injections } else { &*zero };
            series.advance(&self.network, k, inj);
        }
        Ok(())
    }

    fn evaluate(&self, ws: &Self::Workspace, h: f64, x: &mut [f64]) {
        ws.0.evaluate(h, x);
    }

    fn series<'w>(&self, ws: &'w Self::Workspace, index: usize) -> &'w [f64] {
        ws.0.row(index)
    }
}
