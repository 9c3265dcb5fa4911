//! Truncated Taylor-coefficient arithmetic (differential transformation).
//!
//! A smooth function `f(t)` expanded about `t0` is represented by its scaled
//! Taylor coefficients `F(k) = f^(k)(t0) / k!` for `k = 0..=K`. Linear
//! operations act coefficientwise, products become Cauchy convolutions, and
//! the nonlinear rules used by the machine model (sine/cosine of a series and
//! the magnitude `sqrt(g² + h²)`) become recurrences that produce order `k`
//! from orders `< k`.
//!
//! The free functions at the bottom of the module work on plain slices and
//! compute a single coefficient; they are what the simulation kernels call
//! order by order. [`CoeffSeries`] wraps whole series for direct use.

use thiserror::Error;

/// Smallest magnitude accepted for `F(0)` in the square-root rule.
pub const EPS_SQRT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("series expanded about different points ({left} vs {right})")]
    ExpansionPointMismatch { left: f64, right: f64 },
    #[error("magnitude {value:e} at the expansion point is below {EPS_SQRT:e}")]
    SingularMagnitude { value: f64 },
    #[error("order 0 is seeded from the function value, not from the recurrence")]
    SeedOrder,
    #[error("non-finite coefficient at order {order}")]
    NonFinite { order: usize },
}

/// Taylor coefficients `F(0..=K)` of one variable about `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeries {
    coeffs: Vec<f64>,
    t0: f64,
}

impl CoeffSeries {
    /// Constant `c`: `F(k) = c·η(k)`.
    pub fn constant(c: f64, order: usize, t0: f64) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = c;
        Self { coeffs, t0 }
    }

    pub fn zeros(order: usize, t0: f64) -> Self {
        Self::constant(0.0, order, t0)
    }

    pub fn from_coeffs(coeffs: Vec<f64>, t0: f64) -> Result<Self, SeriesError> {
        if let Some(order) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(SeriesError::NonFinite { order });
        }
        assert!(!coeffs.is_empty(), "a series carries at least F(0)");
        Ok(Self { coeffs, t0 })
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn check_compatible(&self, other: &Self) -> Result<(), SeriesError> {
        if self.coeffs.len() != other.coeffs.len() {
            return Err(SeriesError::LengthMismatch {
                left: self.coeffs.len(),
                right: other.coeffs.len(),
            });
        }
        if self.t0 != other.t0 {
            return Err(SeriesError::ExpansionPointMismatch {
                left: self.t0,
                right: other.t0,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self, SeriesError> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Self::from_coeffs(coeffs, self.t0)
    }

    pub fn add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Result<Self, SeriesError> {
        Self::from_coeffs(self.coeffs.iter().map(|a| c * a).collect(), self.t0)
    }

    /// Cauchy product, truncated at `K`.
    pub fn mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_compatible(other)?;
        let coeffs = (0..self.coeffs.len())
            .map(|k| product_coeff(&self.coeffs, &other.coeffs, k))
            .collect();
        Self::from_coeffs(coeffs, self.t0)
    }

    /// Series of `dg/dt`: `(k+1)·G(k+1)`, one order shorter.
    pub fn derivative(&self) -> Self {
        let coeffs = (0..self.order())
            .map(|k| (k + 1) as f64 * self.coeffs[k + 1])
            .collect::<Vec<_>>();
        let coeffs = if coeffs.is_empty() { vec![0.0] } else { coeffs };
        Self {
            coeffs,
            t0: self.t0,
        }
    }

    /// Truncated sum `Σ F(k)·h^k`.
    pub fn eval(&self, h: f64) -> f64 {
        horner(&self.coeffs, h)
    }

    /// `(sin h(t), cos h(t))` where `self` is the argument series.
    pub fn sin_cos(&self) -> Result<(Self, Self), SeriesError> {
        let n = self.coeffs.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        (s[0], c[0]) = self.coeffs[0].sin_cos();
        for k in 1..n {
            (s[k], c[k]) = sin_cos_coeff(&self.coeffs, &s, &c, k)?;
        }
        Ok((Self::from_coeffs(s, self.t0)?, Self::from_coeffs(c, self.t0)?))
    }

    /// `(g² + h², sqrt(g² + h²))` as series.
    pub fn hypot(g: &Self, h: &Self) -> Result<(Self, Self), SeriesError> {
        g.check_compatible(h)?;
        let n = g.coeffs.len();
        let mut s = vec![0.0; n];
        let mut f = vec![0.0; n];
        s[0] = g.coeffs[0] * g.coeffs[0] + h.coeffs[0] * h.coeffs[0];
        f[0] = s[0].sqrt();
        for k in 1..n {
            (s[k], f[k]) = hypot_coeff(&g.coeffs, &h.coeffs, &f, k)?;
        }
        Ok((Self::from_coeffs(s, g.t0)?, Self::from_coeffs(f, g.t0)?))
    }
}

/// Coefficient `k` of the Cauchy product of `a` and `b`.
#[inline]
pub fn product_coeff(a: &[f64], b: &[f64], k: usize) -> f64 {
    let mut acc = 0.0;
    for m in 0..=k {
        acc += a[m] * b[k - m];
    }
    acc
}

/// Order `k ≥ 1` of `sin(h)` and `cos(h)` given orders `< k` of both.
///
/// `sin` and `cos` must already hold `sin(H(0))`, `cos(H(0))` at index 0.
#[inline]
pub fn sin_cos_coeff(
    h: &[f64],
    sin: &[f64],
    cos: &[f64],
    k: usize,
) -> Result<(f64, f64), SeriesError> {
    if k == 0 {
        return Err(SeriesError::SeedOrder);
    }
    let mut s = 0.0;
    let mut c = 0.0;
    for m in 0..k {
        let w = (k - m) as f64 * h[k - m];
        s += w * cos[m];
        c -= w * sin[m];
    }
    let kf = k as f64;
    Ok((s / kf, c / kf))
}

/// Order `k ≥ 1` of `f = sqrt(s)` given `S(k)` and `F(0..k)`.
#[inline]
pub fn sqrt_coeff(s_k: f64, f: &[f64], k: usize) -> Result<f64, SeriesError> {
    if k == 0 {
        return Err(SeriesError::SeedOrder);
    }
    if f[0].abs() < EPS_SQRT {
        return Err(SeriesError::SingularMagnitude { value: f[0] });
    }
    let mut acc = s_k;
    for m in 1..k {
        acc -= f[m] * f[k - m];
    }
    Ok(acc / (2.0 * f[0]))
}

/// Order `k ≥ 1` of `s = g² + h²` and `f = sqrt(s)`.
#[inline]
pub fn hypot_coeff(g: &[f64], h: &[f64], f: &[f64], k: usize) -> Result<(f64, f64), SeriesError> {
    let s_k = product_coeff(g, g, k) + product_coeff(h, h, k);
    Ok((s_k, sqrt_coeff(s_k, f, k)?))
}

/// Evaluate `Σ c[k]·h^k` by Horner's scheme.
#[inline]
pub fn horner(c: &[f64], h: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * h + ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn series(c: &[f64]) -> CoeffSeries {
        CoeffSeries::from_coeffs(c.to_vec(), 0.0).unwrap()
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn constants() {
        assert_eq!(CoeffSeries::constant(5.0, 3, 0.0).coeffs(), &[5.0, 0.0, 0.0, 0.0]);
        assert_eq!(CoeffSeries::constant(0.0, 2, 0.0).coeffs(), &[0.0, 0.0, 0.0]);
        assert_eq!(CoeffSeries::constant(-1.5, 1, 0.0).coeffs(), &[-1.5, 0.0]);
    }

    #[test]
    fn linear_rules() {
        let a = series(&[1.0, 2.0]);
        let b = series(&[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().coeffs(), &[4.0, 6.0]);
        assert_eq!(series(&[1.0, -1.0]).scale(2.0).unwrap().coeffs(), &[2.0, -2.0]);
        assert!(a.sub(&a).unwrap().coeffs().iter().all(|c| *c == 0.0));
        assert_eq!(
            a.add(&series(&[1.0, 2.0, 3.0])),
            Err(SeriesError::LengthMismatch { left: 2, right: 3 })
        );
        let shifted = CoeffSeries::from_coeffs(vec![1.0, 2.0], 0.5).unwrap();
        assert!(matches!(
            a.mul(&shifted),
            Err(SeriesError::ExpansionPointMismatch { .. })
        ));
    }

    #[test]
    fn product_of_binomials() {
        let a = series(&[1.0, 1.0, 0.0]);
        assert_eq!(a.mul(&a).unwrap().coeffs(), &[1.0, 2.0, 1.0]);
        let h = series(&[0.3, -1.2, 4.0, 0.7]);
        let c = CoeffSeries::constant(2.5, 3, 0.0);
        assert_eq!(c.mul(&h).unwrap(), h.scale(2.5).unwrap());
    }

    #[test]
    fn derivative_relation() {
        let e = series(&[1.0, 1.0, 0.5]);
        assert_eq!(e.derivative().coeffs(), &[1.0, 1.0]);
        assert!(CoeffSeries::constant(3.0, 4, 0.0)
            .derivative()
            .coeffs()
            .iter()
            .all(|c| *c == 0.0));
        assert_eq!(series(&[0.0, 0.0, 1.0]).derivative().coeffs(), &[0.0, 2.0]);
    }

    #[test]
    fn sin_cos_of_identity_is_maclaurin() {
        let (s, c) = series(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).sin_cos().unwrap();
        let s_ref = [0.0, 1.0, 0.0, -1.0 / 6.0, 0.0, 1.0 / 120.0];
        let c_ref = [1.0, 0.0, -0.5, 0.0, 1.0 / 24.0, 0.0];
        for k in 0..6 {
            assert_relative_eq!(s.coeffs()[k], s_ref[k], epsilon = 1e-15);
            assert_relative_eq!(c.coeffs()[k], c_ref[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn sin_cos_of_constant_argument() {
        let (s, c) = CoeffSeries::constant(FRAC_PI_2, 5, 0.0).sin_cos().unwrap();
        assert_relative_eq!(s.coeffs()[0], 1.0);
        assert!(c.coeffs()[0].abs() < 1e-16);
        assert!(s.coeffs()[1..].iter().chain(&c.coeffs()[1..]).all(|x| *x == 0.0));
    }

    #[test]
    fn sin_of_affine_argument() {
        let (s, _) = series(&[0.3, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).sin_cos().unwrap();
        for (k, sk) in s.coeffs().iter().enumerate() {
            let expected = 2f64.powi(k as i32) * (0.3 + k as f64 * FRAC_PI_2).sin() / factorial(k);
            assert_relative_eq!(*sk, expected, epsilon = 1e-14, max_relative = 1e-13);
        }
    }

    #[test]
    fn sin_cos_rejects_order_zero() {
        assert_eq!(
            sin_cos_coeff(&[0.0], &[0.0], &[1.0], 0),
            Err(SeriesError::SeedOrder)
        );
    }

    #[test]
    fn hypot_pythagorean_triple() {
        let (s, f) = CoeffSeries::hypot(&series(&[3.0, 0.0]), &series(&[4.0, 0.0])).unwrap();
        assert_eq!(f.coeffs(), &[5.0, 0.0]);
        assert_eq!(s.coeffs(), &[25.0, 0.0]);
    }

    #[test]
    fn hypot_of_rotating_unit_vector() {
        let theta = series(&[0.4, 377.0, -3.0, 1.0, 0.0, 0.0, 0.0]);
        let (s, c) = theta.sin_cos().unwrap();
        let (_, f) = CoeffSeries::hypot(&c, &s).unwrap();
        assert_relative_eq!(f.coeffs()[0], 1.0, epsilon = 1e-15);
        for fk in &f.coeffs()[1..] {
            assert!(fk.abs() < 1e-9 * 377f64.powi(6), "{fk}");
        }
    }

    #[test]
    fn hypot_first_order_uses_empty_sum() {
        // F(1) = S(1) / (2F(0))
        let g = series(&[0.6, 0.2]);
        let h = series(&[0.8, -0.1]);
        let (s, f) = CoeffSeries::hypot(&g, &h).unwrap();
        assert_relative_eq!(s.coeffs()[1], 2.0 * (0.6 * 0.2 - 0.8 * 0.1));
        assert_relative_eq!(f.coeffs()[1], s.coeffs()[1] / 2.0);
    }

    #[test]
    fn hypot_guards_collapsed_magnitude() {
        let z = series(&[0.0, 1.0]);
        assert!(matches!(
            CoeffSeries::hypot(&z, &z),
            Err(SeriesError::SingularMagnitude { .. })
        ));
    }

    #[test]
    fn horner_evaluation() {
        let c = CoeffSeries::constant(1.0, 6, 0.0);
        assert_eq!(c.eval(0.37), 1.0);
        let f = series(&[0.25, -3.0, 7.0]);
        assert_eq!(f.eval(0.0), 0.25);
        let exp: Vec<f64> = (0..=30).map(|k| 1.0 / factorial(k)).collect();
        assert!((horner(&exp, 0.5) - 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn non_finite_coefficients_rejected() {
        assert_eq!(
            CoeffSeries::from_coeffs(vec![1.0, f64::NAN], 0.0),
            Err(SeriesError::NonFinite { order: 1 })
        );
    }
}
