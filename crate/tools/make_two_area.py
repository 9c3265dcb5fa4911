#!/usr/bin/env python3
"""Generate the shipped two-area, four-machine scenario file.

Network and machine data follow the classic two-area test system
(Kundur, "Power System Stability and Control", Example 12.6): 20 kV/900 MVA
round-rotor units, 230 kV lines, loads at buses 7 and 9 with shunt capacitor
banks. Everything is written on the 100 MVA system base with reactances in
per unit at 60 Hz.

The operating point is solved here with a plain Newton power flow on exactly
the network model the simulator uses (series RL branches, node shunt
capacitances, loads as series RL impedances), so the stored bus voltages and
machine dispatch form an exact sinusoidal steady state of that model.

Usage: python3 tools/make_two_area.py > crates/core/data/two_area.json
"""

import json
import math
import sys

import numpy as np

F_HZ = 60.0
OMEGA_B = 2.0 * math.pi * F_HZ
S_SYS = 100.0
S_MACH = 900.0
K_BASE = S_SYS / S_MACH  # machine-base impedance -> system base

# --- machine: standard parameters on machine base --------------------------
XD, XQ, XL = 1.8, 1.7, 0.2
XD1, XQ1 = 0.3, 0.55
XD2, XQ2 = 0.25, 0.25
RA = 0.0025
TD01, TQ01, TD02, TQ02 = 8.0, 0.4, 0.03, 0.05
L0_MACH = 0.1


def equivalent_circuit():
    lad = XD - XL
    laq = XQ - XL
    lfdl = lad * (XD1 - XL) / (lad - (XD1 - XL))
    l1dl = 1.0 / (1.0 / (XD2 - XL) - 1.0 / lad - 1.0 / lfdl)
    l1ql = laq * (XQ1 - XL) / (laq - (XQ1 - XL))
    l2ql = 1.0 / (1.0 / (XQ2 - XL) - 1.0 / laq - 1.0 / l1ql)
    rfd = (lad + lfdl) / (OMEGA_B * TD01)
    r1d = (l1dl + lad * lfdl / (lad + lfdl)) / (OMEGA_B * TD02)
    r1q = (laq + l1ql) / (OMEGA_B * TQ01)
    r2q = (l2ql + laq * l1ql / (laq + l1ql)) / (OMEGA_B * TQ02)
    m = dict(r_fd=rfd, r_1d=r1d, r_1q=r1q, r_2q=r2q,
             l_fdl=lfdl, l_1dl=l1dl, l_1ql=l1ql, l_2ql=l2ql,
             l_ad=lad, l_aq=laq, l_al=XL, l_0=L0_MACH, r_s=RA)
    return {k: v * K_BASE for k, v in m.items()}


# --- network ---------------------------------------------------------------
R_KM, X_KM, B_KM = 0.0001, 0.001, 0.00175
X_TR = 0.15 * K_BASE
# Lumped capacitance at each generator terminal bus (100 Mvar at 1 p.u.).
# It stands in for terminal capacitor banks and keeps the terminal resonance
# with the subtransient and transformer inductances near 4 krad/s. With a
# surge-capacitor-sized value the resonance moves above 25 krad/s and the
# post-fault ripple on the terminal voltage magnitude is much stronger.
C_TERMINAL = 1.0

BUSES = [f"bus{i}" for i in range(1, 12)]
LINES = [("line5_6", "bus5", "bus6", 25.0),
         ("line6_7", "bus6", "bus7", 10.0),
         ("line7_8a", "bus7", "bus8", 110.0),
         ("line7_8b", "bus7", "bus8", 110.0),
         ("line8_9a", "bus8", "bus9", 110.0),
         ("line8_9b", "bus8", "bus9", 110.0),
         ("line9_10", "bus9", "bus10", 10.0),
         ("line10_11", "bus10", "bus11", 25.0)]
TRANSFORMERS = [("tr1_5", "bus1", "bus5"), ("tr2_6", "bus2", "bus6"),
                ("tr3_11", "bus3", "bus11"), ("tr4_10", "bus4", "bus10")]
# (bus, P MW, Q Mvar, capacitor bank Mvar)
LOADS = [("load7", "bus7", 967.0, 100.0, 200.0),
         ("load9", "bus9", 1767.0, 100.0, 350.0)]
# (name, bus, P MW, |V|, slack angle deg or None)
GENS = [("gen1", "bus1", 700.0, 1.03, None),
        ("gen2", "bus2", 700.0, 1.01, None),
        ("gen3", "bus3", None, 1.03, -6.8),
        ("gen4", "bus4", 700.0, 1.01, None)]

H_MACH = {"gen1": 6.5, "gen2": 6.5, "gen3": 6.175, "gen4": 6.175}


def build():
    idx = {b: i for i, b in enumerate(BUSES)}
    n = len(BUSES)
    shunt = np.zeros(n)
    branches = []
    for name, f, t, km in LINES:
        r, x, b = R_KM * km, X_KM * km, B_KM * km
        branches.append(dict(id=name, from_=f, to=t, r=r, l=x))
        shunt[idx[f]] += b / 2
        shunt[idx[t]] += b / 2
    for name, f, t in TRANSFORMERS:
        branches.append(dict(id=name, from_=f, to=t, r=0.0, l=X_TR))
    for _, bus, _, _, qc in LOADS:
        shunt[idx[bus]] += qc / S_SYS
    for _, bus, _, _, _ in GENS:
        shunt[idx[bus]] += C_TERMINAL
    return idx, shunt, branches


def ybus(idx, shunt, branches, load_z=None):
    n = len(idx)
    y = np.zeros((n, n), dtype=complex)
    for br in branches:
        f, t = idx[br["from_"]], idx[br["to"]]
        yb = 1.0 / complex(br["r"], br["l"])
        y[f, f] += yb
        y[t, t] += yb
        y[f, t] -= yb
        y[t, f] -= yb
    for i in range(n):
        y[i, i] += 1j * shunt[i]
    if load_z:
        for bus, z in load_z.items():
            y[idx[bus], idx[bus]] += 1.0 / z
    return y


def power_flow(idx, y):
    n = len(idx)
    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    vm = np.ones(n)
    va = np.zeros(n)
    pv, slack = [], None
    for name, bus, p, v, ang in GENS:
        i = idx[bus]
        vm[i] = v
        if ang is None:
            p_spec[i] += p / S_SYS
            pv.append(i)
        else:
            slack = i
            va[i] = math.radians(ang)
    for _, bus, p, q, _ in LOADS:
        p_spec[idx[bus]] -= p / S_SYS
        q_spec[idx[bus]] -= q / S_SYS
    pq = [i for i in range(n) if i not in pv and i != slack]
    ang_idx = [i for i in range(n) if i != slack]

    def mismatch(z):
        va2, vm2 = va.copy(), vm.copy()
        va2[ang_idx] = z[:len(ang_idx)]
        vm2[pq] = z[len(ang_idx):]
        v = vm2 * np.exp(1j * va2)
        s = v * np.conj(y @ v)
        return np.concatenate([(s.real - p_spec)[ang_idx], (s.imag - q_spec)[pq]]), v

    z = np.concatenate([va[ang_idx], vm[pq]])
    for _ in range(50):
        f, _ = mismatch(z)
        if np.max(np.abs(f)) < 1e-14:
            break
        jac = np.zeros((len(z), len(z)))
        for k in range(len(z)):
            dz = np.zeros(len(z))
            dz[k] = 1e-7
            jac[:, k] = (mismatch(z + dz)[0] - mismatch(z - dz)[0]) / 2e-7
        z = z - np.linalg.solve(jac, f)
    f, v = mismatch(z)
    assert np.max(np.abs(f)) < 1e-12, np.max(np.abs(f))
    return v


def main():
    idx, shunt, branches = build()
    v = power_flow(idx, ybus(idx, shunt, branches))

    # constant-impedance loads reproducing the specified consumption at the
    # solved voltage; the solution stays exact once they replace the PQ loads
    loads = []
    load_z = {}
    for name, bus, p, q, _ in LOADS:
        s = complex(p, q) / S_SYS
        z = abs(v[idx[bus]]) ** 2 / np.conj(s)
        load_z[bus] = z
        loads.append(dict(id=name, node=bus, r=z.real, l=z.imag))
    y = ybus(idx, shunt, branches, load_z)
    inj = v * np.conj(y @ v)
    gen_buses = {bus for _, bus, _, _, _ in GENS}
    for b, i in idx.items():
        if b not in gen_buses:
            assert abs(inj[i]) < 1e-12, (b, inj[i])

    mp = equivalent_circuit()
    machines = []
    for name, bus, _, _, _ in GENS:
        s = inj[idx[bus]]
        machines.append(dict(
            id=name,
            node=bus,
            params=dict(h=H_MACH[name] / K_BASE, d=0.0, pole_count=2,
                        r_fd=mp["r_fd"], r_1d=mp["r_1d"], r_1q=mp["r_1q"], r_2q=mp["r_2q"],
                        l_fdl=mp["l_fdl"], l_1dl=mp["l_1dl"], l_1ql=mp["l_1ql"],
                        l_2ql=mp["l_2ql"], l_ad=mp["l_ad"], l_aq=mp["l_aq"],
                        l_al=mp["l_al"], l_0=mp["l_0"], r_s=mp["r_s"]),
            governor=dict(r=0.05 * K_BASE, t1=0.5, t2=3.0, t3=10.0, dt=0.0,
                          v_max=1.0 / K_BASE, v_min=0.0),
            exciter=dict(k_e=100.0, t_e=0.05, t_a=1.0, t_b=10.0, e_max=4.0, e_min=0.0),
            dispatch=dict(p=s.real, q=s.imag),
        ))

    doc = dict(
        name="two-area four-machine system",
        description=(
            "Classic two-area, four-machine interconnection (Kundur, Power System "
            "Stability and Control, Example 12.6) on a 100 MVA, 230 kV base. "
            "Round-rotor machine data converted to equivalent-circuit form and "
            "scaled from the 900 MVA machine base; reactances in per unit at 60 Hz. "
            "Lines: r=0.0001, x=0.001, b=0.00175 pu/km as series RL plus half "
            "charging at each end. Step-up transformers: x=0.15 on machine base. "
            "Loads at buses 7 and 9 are series RL impedances matching 967+j100 MVA "
            "and 1767+j100 MVA at the solved voltage, with 200 and 350 Mvar "
            f"capacitor banks. Generator terminals carry {C_TERMINAL:g} pu capacitance. "
            "TGOV1 (R=0.05, T1=0.5, T2=3, T3=10, Vmax=1 on machine base) and SEXS "
            "(K=100, TE=0.05, TA/TB=1/10, Emax=4) use typical values; exciter "
            "values are in the air-gap-line field base. Operating point from an "
            "exact power flow of this model (tools/make_two_area.py)."
        ),
        frequency_hz=F_HZ,
        base_mva=S_SYS,
        nodes=[dict(id=b, voltage=dict(magnitude=abs(v[i]), angle=float(np.angle(v[i]))))
               for b, i in idx.items()],
        shunts=[dict(node=b, c=shunt[i]) for b, i in idx.items()],
        branches=[dict(id=br["id"], from_node=br["from_"], to_node=br["to"], r=br["r"], l=br["l"])
                  for br in branches],
        loads=loads,
        machines=machines,
        events=[dict(time=1.0, kind="three_phase_fault", node="bus7",
                     duration=5.0 / F_HZ, r_fault=1e-4, l_fault=1e-3)],
        solver=dict(method="dt", order=20, step=1e-4, t_start=0.0, t_end=3.0),
    )
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
