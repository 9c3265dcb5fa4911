//! Three-phase state-space network of series RL branches and node shunt
//! capacitances.
//!
//! Branch currents and node voltages are states. A branch whose `to` node is
//! `None` connects to ground, which is how loads and faults are modelled.
//! With reactances in per unit the equations read
//!
//! ```text
//! di/dt = ω0 L⁻¹ (v_from − v_to − R i)
//! dv/dt = ω0 C⁻¹ (i_injected + Σ i_in − Σ i_out)
//! ```
//!
//! State layout: branch currents, then fault-branch currents, then node
//! voltages, three phases each.

use log::warn;
use nalgebra::Matrix3;

use crate::dt_algebra::horner;
use crate::machine::{checked_inverse, checked_inverse_scaled, mul3};
use crate::{Abc, Error, Result};

/// Shunt capacitance inserted at nodes that have none.
pub const DEFAULT_SHUNT_C: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RlBranch {
    pub id: String,
    pub from: usize,
    /// `None` connects the branch to ground.
    pub to: Option<usize>,
    pub r: Matrix3<f64>,
    pub l: Matrix3<f64>,
    l_inv: Matrix3<f64>,
}

impl RlBranch {
    pub fn new(
        id: impl Into<String>,
        from: usize,
        to: Option<usize>,
        r: Matrix3<f64>,
        l: Matrix3<f64>,
    ) -> Result<Self> {
        let id = id.into();
        let l_inv = checked_inverse(&l, &format!("inductance of branch `{id}`"))?;
        Ok(Self {
            id,
            from,
            to,
            r,
            l,
            l_inv,
        })
    }

    pub fn l_inv(&self) -> &Matrix3<f64> {
        &self.l_inv
    }

    /// `ω0 L⁻¹ (v_from − v_to − R i)`.
    #[inline]
    pub fn current_rate(&self, omega0: f64, i: Abc, v_from: Abc, v_to: Abc) -> Abc {
        let ri = mul3(&self.r, i);
        let drive = [
            v_from[0] - v_to[0] - ri[0],
            v_from[1] - v_to[1] - ri[1],
            v_from[2] - v_to[2] - ri[2],
        ];
        let di = mul3(&self.l_inv, drive);
        [omega0 * di[0], omega0 * di[1], omega0 * di[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShuntCap {
    pub node: usize,
    pub c: Matrix3<f64>,
}

/// `ω0 C⁻¹ i` for a node with net current `i` flowing into its capacitance.
#[inline]
pub fn node_voltage_rate(omega0: f64, c_inv: &Matrix3<f64>, i_net: Abc) -> Abc {
    let dv = mul3(c_inv, i_net);
    [omega0 * dv[0], omega0 * dv[1], omega0 * dv[2]]
}

/// A pre-registered three-phase fault branch to ground.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSlot {
    pub node: usize,
    pub branch: RlBranch,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkEvent {
    FaultOn { node: String },
    FaultOff { node: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    omega0: f64,
    nodes: Vec<String>,
    branches: Vec<RlBranch>,
    shunts: Vec<ShuntCap>,
    c_inv: Vec<Matrix3<f64>>,
    faults: Vec<FaultSlot>,
}

impl NetworkModel {
    /// Assemble and validate a network.
    ///
    /// Shunts at the same node are summed. Nodes without a shunt get
    /// [`DEFAULT_SHUNT_C`] so that every node voltage is a state.
    pub fn new(
        omega0: f64,
        nodes: Vec<String>,
        branches: Vec<RlBranch>,
        shunts: Vec<ShuntCap>,
    ) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::param("omega0", "must be positive"));
        }
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].contains(n) {
                return Err(Error::config(n.clone(), "duplicate node id"));
            }
        }
        let nn = nodes.len();
        for b in &branches {
            if b.from >= nn || b.to.is_some_and(|t| t >= nn) {
                return Err(Error::config(b.id.clone(), "branch endpoint out of range"));
            }
            if b.to == Some(b.from) {
                return Err(Error::config(b.id.clone(), "branch connects a node to itself"));
            }
        }
        let mut c_total: Vec<Option<Matrix3<f64>>> = vec![None; nn];
        for s in &shunts {
            if s.node >= nn {
                return Err(Error::config(format!("shunt #{}", s.node), "node out of range"));
            }
            let acc = c_total[s.node].get_or_insert_with(Matrix3::zeros);
            *acc += s.c;
        }
        let mut shunts = shunts;
        let mut c_inv = Vec::with_capacity(nn);
        for (n, c) in c_total.into_iter().enumerate() {
            let c = match c {
                Some(c) => c,
                None => {
                    warn!(
                        "node `{}` has no shunt capacitance, inserting {DEFAULT_SHUNT_C:e} pu",
                        nodes[n]
                    );
                    let c = Matrix3::identity() * DEFAULT_SHUNT_C;
                    shunts.push(ShuntCap { node: n, c });
                    c
                }
            };
            c_inv.push(checked_inverse_scaled(&c, &format!("capacitance at node `{}`", nodes[n]))?);
        }
        let model = Self {
            omega0,
            nodes,
            branches,
            shunts,
            c_inv,
            faults: Vec::new(),
        };
        model.check_connected()?;
        Ok(model)
    }

    fn check_connected(&self) -> Result<()> {
        let nn = self.nodes.len();
        if nn == 0 {
            return Ok(());
        }
        let mut seen = vec![false; nn];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for b in &self.branches {
                let Some(to) = b.to else { continue };
                let other = if b.from == n {
                    to
                } else if to == n {
                    b.from
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(n) => Err(Error::config(self.nodes[n].clone(), "node is not connected to the network")),
            None => Ok(()),
        }
    }

    /// Register a fault branch at `node`, initially inactive.
    ///
    /// Returns the slot index; registering the same node twice reuses the slot.
    pub fn add_fault_slot(&mut self, node: &str, r: f64, l: f64) -> Result<usize> {
        let n = self.node_index(node).ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        if let Some(i) = self.faults.iter().position(|f| f.node == n) {
            return Ok(i);
        }
        if !(r >= 0.0 && l > 0.0) {
            return Err(Error::config(
                format!("fault at {node}"),
                "fault branch needs r ≥ 0 and l > 0",
            ));
        }
        let branch = RlBranch::new(
            format!("fault_{node}"),
            n,
            None,
            Matrix3::identity() * r,
            Matrix3::identity() * l,
        )?;
        self.faults.push(FaultSlot {
            node: n,
            branch,
            active: false,
        });
        Ok(self.faults.len() - 1)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn branches(&self) -> &[RlBranch] {
        &self.branches
    }

    pub fn shunts(&self) -> &[ShuntCap] {
        &self.shunts
    }

    pub fn faults(&self) -> &[FaultSlot] {
        &self.faults
    }

    /// Inverse of the total shunt capacitance at each node.
    pub fn c_inv(&self, node: usize) -> &Matrix3<f64> {
        &self.c_inv[node]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn dim(&self) -> usize {
        3 * (self.branches.len() + self.faults.len() + self.nodes.len())
    }

    pub fn branch_offset(&self, b: usize) -> usize {
        3 * b
    }

    pub fn fault_offset(&self, f: usize) -> usize {
        3 * (self.branches.len() + f)
    }

    pub fn node_offset(&self, n: usize) -> usize {
        3 * (self.branches.len() + self.faults.len() + n)
    }

    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        let phases = ["a", "b", "c"];
        for b in &self.branches {
            names.extend(phases.iter().map(|p| format!("{}.i_{p}", b.id)));
        }
        for f in &self.faults {
            names.extend(phases.iter().map(|p| format!("{}.i_{p}", f.branch.id)));
        }
        for n in &self.nodes {
            names.extend(phases.iter().map(|p| format!("{n}.v_{p}")));
        }
        names
    }

    /// Return a copy of the model with `event` applied.
    pub fn apply_event(&self, event: &NetworkEvent) -> Result<NetworkModel> {
        let mut next = self.clone();
        next.apply_event_mut(event)?;
        Ok(next)
    }

    /// Apply `event` in place and return the affected fault slot.
    pub fn apply_event_mut(&mut self, event: &NetworkEvent) -> Result<usize> {
        let (node, active) = match event {
            NetworkEvent::FaultOn { node } => (node, true),
            NetworkEvent::FaultOff { node } => (node, false),
        };
        let n = self.node_index(node).ok_or_else(|| Error::UnknownNode(node.clone()))?;
        let slot = self
            .faults
            .iter()
            .position(|f| f.node == n)
            .ok_or_else(|| Error::config(node.clone(), "no fault branch registered at this node"))?;
        self.faults[slot].active = active;
        Ok(slot)
    }

    fn abc(x: &[f64], off: usize) -> Abc {
        [x[off], x[off + 1], x[off + 2]]
    }

    /// Time derivatives of the network states.
    ///
    /// `node_injection[n]` is the current injected into node `n` by machines
    /// or sources.
    pub fn derivatives(&self, x: &[f64], node_injection: &[Abc], dx: &mut [f64]) {
        let w0 = self.omega0;
        let mut acc: Vec<Abc> = node_injection.to_vec();
        let node_v = |n: usize| Self::abc(x, self.node_offset(n));
        for (b, br) in self.branches.iter().enumerate() {
            let off = self.branch_offset(b);
            let i = Self::abc(x, off);
            let v_to = br.to.map_or([0.0; 3], node_v);
            let di = br.current_rate(w0, i, node_v(br.from), v_to);
            dx[off..off + 3].copy_from_slice(&di);
            for ph in 0..3 {
                acc[br.from][ph] -= i[ph];
                if let Some(t) = br.to {
                    acc[t][ph] += i[ph];
                }
            }
        }
        for (f, slot) in self.faults.iter().enumerate() {
            let off = self.fault_offset(f);
            if slot.active {
                let i = Self::abc(x, off);
                let di = slot.branch.current_rate(w0, i, node_v(slot.node), [0.0; 3]);
                dx[off..off + 3].copy_from_slice(&di);
                for ph in 0..3 {
                    acc[slot.node][ph] -= i[ph];
                }
            } else {
                dx[off..off + 3].fill(0.0);
            }
        }
        for (n, i_net) in acc.iter().enumerate() {
            let off = self.node_offset(n);
            dx[off..off + 3].copy_from_slice(&node_voltage_rate(w0, &self.c_inv[n], *i_net));
        }
    }
}

/// Taylor series of every network state, one row per state.
#[derive(Debug, Clone)]
pub struct NetworkSeries {
    stride: usize,
    data: Vec<f64>,
    acc: Vec<Abc>,
}

impl NetworkSeries {
    pub fn new(model: &NetworkModel, order: usize) -> Self {
        Self {
            stride: order + 1,
            data: vec![0.0; model.dim() * (order + 1)],
            acc: vec![[0.0; 3]; model.nodes.len()],
        }
    }

    pub fn order(&self) -> usize {
        self.stride - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    /// Phase series of the voltage at `node`.
    pub fn node_voltage<'a>(&'a self, model: &NetworkModel, node: usize) -> [&'a [f64]; 3] {
        let off = model.node_offset(node);
        [self.row(off), self.row(off + 1), self.row(off + 2)]
    }

    #[inline]
    fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.stride + k]
    }

    #[inline]
    fn abc(&self, off: usize, k: usize) -> Abc {
        [self.get(off, k), self.get(off + 1, k), self.get(off + 2, k)]
    }

    #[inline]
    fn set_abc(&mut self, off: usize, k: usize, v: Abc) {
        for ph in 0..3 {
            self.data[(off + ph) * self.stride + k] = v[ph];
        }
    }

    /// Load order 0 from the state vector `x` (network part only).
    pub fn seed(&mut self, x: &[f64]) {
        for (i, xi) in x.iter().enumerate() {
            let row = &mut self.data[i * self.stride..(i + 1) * self.stride];
            row.fill(0.0);
            row[0] = *xi;
        }
    }

    /// Order `k+1` of every network state from order `k` and the order-`k`
    /// node injections.
    pub fn advance(&mut self, model: &NetworkModel, k: usize, node_injection: &[Abc]) {
        let w0 = model.omega0 / (k + 1) as f64;
        self.acc.copy_from_slice(node_injection);
        for (b, br) in model.branches.iter().enumerate() {
            let off = model.branch_offset(b);
            let i = self.abc(off, k);
            let v_from = self.abc(model.node_offset(br.from), k);
            let v_to = br.to.map_or([0.0; 3], |t| self.abc(model.node_offset(t), k));
            let di = br.current_rate(w0, i, v_from, v_to);
            self.set_abc(off, k + 1, di);
            for ph in 0..3 {
                self.acc[br.from][ph] -= i[ph];
                if let Some(t) = br.to {
                    self.acc[t][ph] += i[ph];
                }
            }
        }
        for (f, slot) in model.faults.iter().enumerate() {
            let off = model.fault_offset(f);
            if slot.active {
                let i = self.abc(off, k);
                let v = self.abc(model.node_offset(slot.node), k);
                let di = slot.branch.current_rate(w0, i, v, [0.0; 3]);
                self.set_abc(off, k + 1, di);
                for ph in 0..3 {
                    self.acc[slot.node][ph] -= i[ph];
                }
            } else {
                self.set_abc(off, k + 1, [0.0; 3]);
            }
        }
        for n in 0..model.nodes.len() {
            let dv = node_voltage_rate(w0, &model.c_inv[n], self.acc[n]);
            self.set_abc(model.node_offset(n), k + 1, dv);
        }
    }

    /// Net current into each node's capacitance at the last advanced order.
    pub fn capacitor_currents(&self) -> &[Abc] {
        &self.acc
    }

    /// Evaluate every state at offset `h` into `out`.
    pub fn evaluate(&self, h: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = horner(self.row(i), h);
        }
    }
}
