//! Classical RK4 and modified Euler (Heun) steps.

use super::OdeSystem;
use crate::Result;

pub(crate) struct Scratch {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(n: usize, stages: usize) -> Self {
        Self {
            k: vec![vec![0.0; n]; stages],
            tmp: vec![0.0; n],
        }
    }
}

pub(crate) fn rk4_with<S: OdeSystem + ?Sized>(
    sys: &S,
    s: &mut Scratch,
    t: f64,
    x: &mut [f64],
    h: f64,
) -> Result<()> {
    let [k1, k2, k3, k4] = &mut s.k[..] else {
        unreachable!("RK4 scratch has four stages")
    };
    let tmp = &mut s.tmp;
    sys.rhs(t, x, k1)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    sys.rhs(t + 0.5 * h, tmp, k2)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    sys.rhs(t + 0.5 * h, tmp, k3)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k3[i];
    }
    sys.rhs(t + h, tmp, k4)?;
    let h6 = h / 6.0;
    for i in 0..x.len() {
        x[i] += h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(())
}

pub(crate) fn modified_euler_with<S: OdeSystem + ?Sized>(
    sys: &S,
    s: &mut Scratch,
    t: f64,
    x: &mut [f64],
    h: f64,
) -> Result<()> {
    let [k1, k2] = &mut s.k[..] else {
        unreachable!("modified Euler scratch has two stages")
    };
    let tmp = &mut s.tmp;
    sys.rhs(t, x, k1)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k1[i];
    }
    sys.rhs(t + h, tmp, k2)?;
    for i in 0..x.len() {
        x[i] += 0.5 * h * (k1[i] + k2[i]);
    }
    Ok(())
}

/// One classical fourth-order Runge–Kutta step, in place.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, x: &mut [f64], h: f64) -> Result<()> {
    let mut s = Scratch::new(x.len(), 4);
    rk4_with(sys, &mut s, t, x, h)?;
    sys.project(x);
    Ok(())
}

/// One modified Euler (Heun predictor–corrector) step, in place.
pub fn modified_euler_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, x: &mut [f64], h: f64) -> Result<()> {
    let mut s = Scratch::new(x.len(), 2);
    modified_euler_with(sys, &mut s, t, x, h)?;
    sys.project(x);
    Ok(())
}
