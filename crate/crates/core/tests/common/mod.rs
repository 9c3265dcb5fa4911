//! Oracles and fixtures shared by the integration tests.
//!
//! Every oracle here is computed independently of the simulator kernels:
//! Taylor coefficients from Cauchy integrals of closed-form functions,
//! linear-network solutions from the matrix exponential of a hand-assembled
//! state matrix, and finite-difference derivatives from Fornberg weights.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use dtemt::dt_algebra::CoeffSeries;
use dtemt::network::{NetworkModel, RlBranch, ShuntCap};
use dtemt::solvers::{simulate, Method, OdeSystem, SolverConfig, TaylorModel};
use dtemt::system::SourcedNetwork;
use dtemt::Abc;
use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const W0: f64 = 2.0 * PI * 60.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `a·sin(b t + c) + p·e^{q t} + d0 + d1 t + d2 t²`, an entire function with
/// closed-form Taylor coefficients about `t = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Smooth {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub q: f64,
    pub d: [f64; 3],
}

impl Smooth {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            a: rng.random_range(-1.0..1.0),
            b: rng.random_range(-2.0..2.0),
            c: rng.random_range(-PI..PI),
            p: rng.random_range(-1.0..1.0),
            q: rng.random_range(-1.5..1.5),
            d: [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
        }
    }

    /// The same function shifted by `offset`.
    pub fn offset(mut self, offset: f64) -> Self {
        self.d[0] += offset;
        self
    }

    pub fn coeffs(&self, order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        let mut fact = 1.0;
        for k in 0..=order {
            if k > 0 {
                fact *= k as f64;
            }
            let kf = k as i32;
            let mut v = self.a * self.b.powi(kf) * (self.c + k as f64 * FRAC_PI_2).sin() / fact
                + self.p * self.q.powi(kf) / fact;
            if k < 3 {
                v += self.d[k];
            }
            out.push(v);
        }
        out
    }

    pub fn series(&self, order: usize) -> CoeffSeries {
        CoeffSeries::from_coeffs(self.coeffs(order), 0.0).unwrap()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (z * self.b + self.c).sin() * self.a
            + (z * self.q).exp() * self.p
            + self.d[0]
            + z * self.d[1]
            + z * z * self.d[2]
    }

    pub fn eval_derivative(&self, z: Complex64) -> Complex64 {
        (z * self.b + self.c).cos() * (self.a * self.b)
            + (z * self.q).exp() * (self.p * self.q)
            + self.d[1]
            + z * (2.0 * self.d[2])
    }
}

/// A Taylor coefficient from the Cauchy integral with an estimate of its
/// own rounding error.
#[derive(Debug, Clone, Copy)]
pub struct OracleCoeff {
    pub value: f64,
    pub error: f64,
}

const CAUCHY_NODES: usize = 256;
const CAUCHY_RADII: [f64; 7] = [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0];

/// Taylor coefficients `0..=k_max` about 0 of the analytic function `f`.
///
/// `analytic(r)` must return true only when `f` is analytic on the closed
/// disk of radius `r`. For each order the radius with the smallest rounding
/// bound `ε·max|f|/r^k` among the admissible ones is used; the contour is
/// sampled at 256 points so aliasing is negligible for entire functions.
pub fn cauchy_coeffs(
    f: impl Fn(Complex64) -> Complex64,
    analytic: impl Fn(f64) -> bool,
    k_max: usize,
) -> Vec<OracleCoeff> {
    let mut best: Vec<OracleCoeff> = vec![
        OracleCoeff {
            value: f64::NAN,
            error: f64::INFINITY,
        };
        k_max + 1
    ];
    for &r in &CAUCHY_RADII {
        // a margin keeps the aliasing of functions with finite radius small
        if !analytic(1.5 * r) {
            continue;
        }
        let n = CAUCHY_NODES;
        let vals: Vec<Complex64> = (0..n)
            .map(|j| f(Complex64::from_polar(r, 2.0 * PI * j as f64 / n as f64)))
            .collect();
        let m = vals.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        if !m.is_finite() {
            continue;
        }
        for (k, slot) in best.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                acc += v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64);
            }
            let value = acc.re / n as f64 / r.powi(k as i32);
            let error = 8.0 * f64::EPSILON * m / r.powi(k as i32);
            if error < slot.error {
                *slot = OracleCoeff { value, error };
            }
        }
    }
    best
}

/// Relative deviation of `got` from the oracle, with the oracle's own
/// rounding bound allowed on top of the relative tolerance.
pub fn rel_excess(got: f64, want: &OracleCoeff, rel: f64) -> f64 {
    let allowed = rel * want.value.abs() + want.error;
    (got - want.value).abs() / allowed
}

/// Worst case over the orders `0..=k_max` of one rule on one input.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleCheck {
    /// Largest `|got − want| / (rel·|want| + oracle error)`; pass when ≤ 1.
    pub worst_ratio: f64,
    /// Largest plain relative deviation among coefficients the oracle
    /// resolves to better than a tenth of the tolerance.
    pub worst_relative: f64,
}

impl RuleCheck {
    pub fn update(&mut self, got: f64, want: &OracleCoeff, rel: f64) {
        let ratio = rel_excess(got, want, rel);
        self.worst_ratio = self.worst_ratio.max(if ratio.is_nan() { f64::INFINITY } else { ratio });
        if want.error <= 0.1 * rel * want.value.abs() {
            self.worst_relative = self.worst_relative.max((got - want.value).abs() / want.value.abs());
        }
    }

    pub fn merge(&mut self, other: RuleCheck) {
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
        self.worst_relative = self.worst_relative.max(other.worst_relative);
    }
}

/// Rules of the series algebra checked by [`rule_oracle_suite`].
pub const RULES: [&str; 7] = [
    "constant",
    "scale",
    "add/sub",
    "product",
    "derivative",
    "sin/cos",
    "sqrt of sum of squares",
];

/// Compare every algebra rule with Cauchy-integral coefficients of the
/// composed closed-form function on `inputs` random smooth inputs.
pub fn rule_oracle_suite(inputs: usize, order: usize, rel: f64, seed: u64) -> Vec<(&'static str, RuleCheck)> {
    let mut rng = rng(seed);
    let mut out: Vec<(&'static str, RuleCheck)> = RULES.iter().map(|r| (*r, RuleCheck::default())).collect();
    let entire = |_: f64| true;
    let mut done = 0;
    while done < inputs {
        let g = Smooth::random(&mut rng);
        let h = Smooth::random(&mut rng);
        let c: f64 = rng.random_range(-3.0..3.0);
        let (gs, hs) = (g.series(order), h.series(order));

        // the magnitude input is offset away from zero; inputs whose sum of
        // squares is not analytic on a usable disk are redrawn
        let (gm, hm) = (g.offset(rng.random_range(1.0..2.0)), h.offset(rng.random_range(-2.0..2.0)));
        let sumsq = |z: Complex64| gm.eval(z) * gm.eval(z) + hm.eval(z) * hm.eval(z);
        let s0 = sumsq(Complex64::new(0.0, 0.0));
        // Re(s) > 0 on the disk keeps the principal square root analytic
        let sqrt_ok = |r: f64| {
            (0..512).all(|j| {
                let z = Complex64::from_polar(r, 2.0 * PI * j as f64 / 512.0);
                (sumsq(z) - s0).norm() < 0.9 * s0.re
            })
        };
        if !sqrt_ok(1.5 * CAUCHY_RADII[0]) {
            continue;
        }
        done += 1;

        let mut check = |rule: usize, got: &[f64], want: &[OracleCoeff]| {
            let mut rc = RuleCheck::default();
            for k in 0..=order {
                rc.update(got[k], &want[k], rel);
            }
            out[rule].1.merge(rc);
        };

        let konst = CoeffSeries::constant(c, order, 0.0);
        check(0, konst.coeffs(), &cauchy_coeffs(|_| Complex64::new(c, 0.0), entire, order));

        let scaled = gs.scale(c).unwrap();
        check(1, scaled.coeffs(), &cauchy_coeffs(|z| g.eval(z) * c, entire, order));

        let sum = gs.add(&hs).unwrap();
        check(2, sum.coeffs(), &cauchy_coeffs(|z| g.eval(z) + h.eval(z), entire, order));
        let diff = gs.sub(&hs).unwrap();
        check(2, diff.coeffs(), &cauchy_coeffs(|z| g.eval(z) - h.eval(z), entire, order));

        let prod = gs.mul(&hs).unwrap();
        check(3, prod.coeffs(), &cauchy_coeffs(|z| g.eval(z) * h.eval(z), entire, order));

        // one extra order so the derivative still reaches `order`
        let deriv = g.series(order + 1).derivative();
        check(4, deriv.coeffs(), &cauchy_coeffs(|z| g.eval_derivative(z), entire, order));

        let (sin, cos) = gs.sin_cos().unwrap();
        check(5, sin.coeffs(), &cauchy_coeffs(|z| g.eval(z).sin(), entire, order));
        check(5, cos.coeffs(), &cauchy_coeffs(|z| g.eval(z).cos(), entire, order));

        let (_, mag) = CoeffSeries::hypot(&gm.series(order), &hm.series(order)).unwrap();
        check(6, mag.coeffs(), &cauchy_coeffs(|z| sumsq(z).sqrt(), sqrt_ok, order));
    }
    out
}

/// Largest deviation of the sin/cos series from `sin² + cos² = 1`,
/// coefficientwise, over `inputs` random smooth arguments.
pub fn pythagorean_defect(inputs: usize, order: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..inputs {
        let h = Smooth::random(&mut rng).series(order);
        let (s, c) = h.sin_cos().unwrap();
        let id = s.mul(&s).unwrap().add(&c.mul(&c).unwrap()).unwrap();
        for (k, v) in id.coeffs().iter().enumerate() {
            let want = if k == 0 { 1.0 } else { 0.0 };
            worst = worst.max((v - want).abs());
        }
    }
    worst
}

/// Fornberg weights for derivatives `0..=m` at `x0` from values at `nodes`.
///
/// `w[d][j]` multiplies `f(nodes[j])` in the `d`-th derivative.
pub fn fornberg(x0: f64, nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn sym(diag: f64, off: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| if i == j { diag } else { off })
}

/// A two-node RL/C test network with constant current sources.
///
/// ```text
///  src1 → n1 ──b12── n2 ← src2
///         │          │
///       load1      load2      plus shunt C at both nodes
/// ```
pub struct LinearFixture {
    pub system: SourcedNetwork,
    /// `dx/dt = a x + b`, assembled independently of the network kernels.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

struct Element {
    id: &'static str,
    from: usize,
    to: Option<usize>,
    r: Matrix3<f64>,
    l: Matrix3<f64>,
}

pub fn linear_fixture() -> LinearFixture {
    let elements = [
        Element {
            id: "b12",
            from: 0,
            to: Some(1),
            r: sym(0.05, 0.01),
            l: sym(0.8, 0.2),
        },
        Element {
            id: "load1",
            from: 0,
            to: None,
            r: sym(0.5, 0.0),
            l: sym(1.2, 0.1),
        },
        Element {
            id: "load2",
            from: 1,
            to: None,
            r: Matrix3::from_row_slice(&[1.0, 0.02, 0.0, 0.02, 1.1, 0.01, 0.0, 0.01, 0.9]),
            l: sym(0.5, 0.05),
        },
    ];
    // spectral radius about 520 rad/s, so |λ|h ≈ 0.5 at h = 1 ms
    let caps = [sym(3.0, -0.3), sym(2.0, -0.15)];
    let injections: Vec<Abc> = vec![[1.0, -0.5, -0.5], [0.2, 0.1, -0.3]];

    let branches = elements
        .iter()
        .map(|e| RlBranch::new(e.id, e.from, e.to, e.r, e.l).unwrap())
        .collect();
    let shunts = caps.iter().enumerate().map(|(n, c)| ShuntCap { node: n, c: *c }).collect();
    let network = NetworkModel::new(W0, vec!["n1".into(), "n2".into()], branches, shunts).unwrap();
    let system = SourcedNetwork::new(network, injections.clone()).unwrap();

    // locate states by name so the assembly does not rely on the layout
    let names = system.state_names();
    let idx = |name: String| names.iter().position(|n| *n == name).unwrap();
    let phases = ["a", "b", "c"];
    let node_ids = ["n1", "n2"];
    let n = names.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for e in &elements {
        let l_inv = e.l.try_inverse().unwrap();
        for p in 0..3 {
            let row = idx(format!("{}.i_{}", e.id, phases[p]));
            for q in 0..3 {
                let w = W0 * l_inv[(p, q)];
                a[(row, idx(format!("{}.v_{}", node_ids[e.from], phases[q])))] += w;
                if let Some(t) = e.to {
                    a[(row, idx(format!("{}.v_{}", node_ids[t], phases[q])))] -= w;
                }
                for s in 0..3 {
                    a[(row, idx(format!("{}.i_{}", e.id, phases[s])))] -= w * e.r[(q, s)];
                }
            }
        }
    }
    for (node, c) in caps.iter().enumerate() {
        let c_inv = c.try_inverse().unwrap();
        for p in 0..3 {
            let row = idx(format!("{}.v_{}", node_ids[node], phases[p]));
            for q in 0..3 {
                let w = W0 * c_inv[(p, q)];
                b[row] += w * injections[node][q];
                for e in &elements {
                    let col = idx(format!("{}.i_{}", e.id, phases[q]));
                    if e.from == node {
                        a[(row, col)] -= w;
                    }
                    if e.to == Some(node) {
                        a[(row, col)] += w;
                    }
                }
            }
        }
    }
    LinearFixture { system, a, b }
}

impl LinearFixture {
    /// Exact state at time `t` from `x0`, via the exponential of the
    /// augmented matrix `[[A, b], [0, 0]]`.
    pub fn solution(&self, x0: &[f64], t: f64) -> DVector<f64> {
        let n = self.a.nrows();
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * t));
        aug.view_mut((0, n), (n, 1)).copy_from(&(&self.b * t));
        let e = aug.exp();
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from_slice(x0);
        z[n] = 1.0;
        (e * z).rows(0, n).into_owned()
    }

    /// Taylor coefficients `d^k x/dt^k / k!` at `x0` for `k = 0..=order`.
    pub fn taylor(&self, x0: &[f64], order: usize) -> Vec<DVector<f64>> {
        let mut out = vec![DVector::from_column_slice(x0)];
        let mut d = &self.a * &out[0] + &self.b;
        for k in 1..=order {
            out.push(&d / factorial(k));
            d = &self.a * d;
        }
        out
    }

    pub fn random_state(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.a.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Largest entry of `|x − y|` relative to the largest entry of `|y|`.
pub fn rel_max_error(x: &[f64], y: &[f64]) -> f64 {
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    x.iter().zip(y).fold(0.0f64, |a, (u, v)| a.max((u - v).abs())) / scale
}

/// `dx/dt = λ·x` on independent components, with exact Taylor expansion.
#[derive(Debug, Clone)]
pub struct Decay {
    pub lambda: Vec<f64>,
}

impl Decay {
    pub fn scalar(lambda: f64) -> Self {
        Self { lambda: vec![lambda] }
    }
}

impl OdeSystem for Decay {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn state_names(&self) -> Vec<String> {
        (0..self.lambda.len()).map(|i| format!("x{i}")).collect()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> dtemt::Result<()> {
        for ((d, l), v) in dx.iter_mut().zip(&self.lambda).zip(x) {
            *d = l * v;
        }
        Ok(())
    }
}

impl TaylorModel for Decay {
    type Workspace = Vec<Vec<f64>>;

    fn workspace(&self, order: usize) -> Self::Workspace {
        vec![vec![0.0; order + 1]; self.lambda.len()]
    }

    fn expand(&self, ws: &mut Self::Workspace, _t0: f64, x0: &[f64]) -> dtemt::Result<()> {
        for ((s, l), v) in ws.iter_mut().zip(&self.lambda).zip(x0) {
            s[0] = *v;
            for k in 1..s.len() {
                s[k] = l * s[k - 1] / k as f64;
            }
        }
        Ok(())
    }

    fn evaluate(&self, ws: &Self::Workspace, h: f64, x: &mut [f64]) {
        for (xi, s) in x.iter_mut().zip(ws) {
            *xi = dtemt::dt_algebra::horner(s, h);
        }
    }

    fn series<'w>(&self, ws: &'w Self::Workspace, index: usize) -> &'w [f64] {
        &ws[index]
    }
}

/// Worst relative error of DT on the linear fixture over `[0, 0.2]` s.
pub fn linear_dt_error(order: usize, h: f64) -> f64 {
    let fx = linear_fixture();
    let x0 = fx.random_state(&mut rng(23));
    let r = simulate(&fx.system, &x0, &SolverConfig::new(Method::Dt { order }, h, 0.0, 0.2)).unwrap();
    let mut worst = 0.0f64;
    for (i, t) in r.times.iter().enumerate() {
        let exact = fx.solution(&x0, *t);
        worst = worst.max(rel_max_error(r.row(i), exact.as_slice()));
    }
    worst
}

/// Relative error at the end of `[0, 0.05]` s for a baseline at step `h`.
pub fn linear_baseline_error(method: Method, h: f64) -> f64 {
    let fx = linear_fixture();
    let x0 = fx.random_state(&mut rng(29));
    let r = simulate(&fx.system, &x0, &SolverConfig::new(method, h, 0.0, 0.05)).unwrap();
    let exact = fx.solution(&x0, 0.05);
    rel_max_error(r.last_state().unwrap(), exact.as_slice())
}

/// Observed order on the linear fixture from halving the step twice.
pub fn observed_order(method: Method, h: f64) -> (f64, f64) {
    let e = [
        linear_baseline_error(method, h),
        linear_baseline_error(method, h / 2.0),
        linear_baseline_error(method, h / 4.0),
    ];
    ((e[0] / e[1]).log2(), (e[1] / e[2]).log2())
}
