//! Scalar abstraction used by the likelihood code.
//!
//! Every utility and likelihood routine is written once over [`Scalar`] and
//! instantiated either with plain `f64` (values only) or with [`Dual`]
//! (forward-mode derivatives with respect to up to `N` parameters). The dual
//! instantiation is what the estimators use for exact gradients.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
{
    fn cst(value: f64) -> Self;

    /// Real part.
    fn re(&self) -> f64;

    /// Applies a univariate function given its value `f` and derivative `df`
    /// at `self.re()`.
    fn chain(self, f: f64, df: f64) -> Self;

    fn exp(self) -> Self {
        let e = self.re().exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        let x = self.re();
        self.chain(x.ln(), 1.0 / x)
    }

    fn powi(self, n: i32) -> Self {
        let x = self.re();
        let df = if n == 0 { 0.0 } else { f64::from(n) * x.powi(n - 1) };
        self.chain(x.powi(n), df)
    }

    fn abs(self) -> Self {
        let x = self.re();
        self.chain(x.abs(), if x < 0.0 { -1.0 } else { 1.0 })
    }

    /// `(e^x - 1) / x`, continuous at zero.
    fn exprel(self) -> Self {
        let (f, df) = exprel_with_derivative(self.re());
        self.chain(f, df)
    }

    /// Clamps the value into `[lo, hi]`; the derivative vanishes when clamped.
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        let x = self.re();
        if x < lo {
            Self::cst(lo)
        } else if x > hi {
            Self::cst(hi)
        } else {
            self
        }
    }

    /// Floors the value at `lo`; the derivative vanishes when floored.
    fn floor_at(self, lo: f64) -> Self {
        if self.re() < lo {
            Self::cst(lo)
        } else {
            self
        }
    }
}

/// Value and first derivative of `exprel(x) = (e^x - 1)/x`.
pub(crate) fn exprel_with_derivative(x: f64) -> (f64, f64) {
    if x.abs() < 1e-5 {
        // Taylor: 1 + x/2 + x^2/6 + x^3/24 ; derivative 1/2 + x/3 + x^2/8
        let f = 1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0));
        let df = 0.5 + x * (1.0 / 3.0 + x / 8.0);
        (f, df)
    } else {
        let em1 = x.exp_m1();
        let f = em1 / x;
        let df = (x * (em1 + 1.0) - em1) / (x * x);
        (f, df)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(value: f64) -> Self {
        value
    }

    #[inline]
    fn re(&self) -> f64 {
        *self
    }

    #[inline]
    fn chain(self, f: f64, _df: f64) -> Self {
        f
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }

    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline]
    fn exprel(self) -> Self {
        if self.abs() < 1e-5 {
            1.0 + self * (0.5 + self * (1.0 / 6.0 + self / 24.0))
        } else {
            self.exp_m1() / self
        }
    }
}

/// Forward-mode dual number carrying `N` directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub du: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(re: f64) -> Self {
        Self { re, du: [0.0; N] }
    }

    /// A variable seeded in direction `lane`.
    pub fn variable(re: f64, lane: usize) -> Self {
        let mut du = [0.0; N];
        du[lane] = 1.0;
        Self { re, du }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    #[inline]
    fn cst(value: f64) -> Self {
        Self::constant(value)
    }

    #[inline]
    fn re(&self) -> f64 {
        self.re
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut du = self.du;
        for d in du.iter_mut() {
            *d *= df;
        }
        Self { re: f, du }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.du.iter_mut().zip(rhs.du.iter()) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.du.iter_mut().zip(rhs.du.iter()) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut du = [0.0; N];
        for (i, d) in du.iter_mut().enumerate() {
            *d = self.du[i] * rhs.re + self.re * rhs.du[i];
        }
        Self {
            re: self.re * rhs.re,
            du,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut du = [0.0; N];
        for (i, d) in du.iter_mut().enumerate() {
            *d = (self.du[i] - re * rhs.du[i]) * inv;
        }
        Self { re, du }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for d in self.du.iter_mut() {
            *d = -*d;
        }
        self
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.re *= rhs;
        for d in self.du.iter_mut() {
            *d *= rhs;
        }
        self
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * (1.0 + x.abs());
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn dual_matches_finite_differences() {
        let f = |x: Dual<1>| (x * x + 3.0).ln() / (x.exp() + 1.0) - x.powi(3) * 0.25;
        let g = |x: f64| (x * x + 3.0).ln() / (x.exp() + 1.0) - x.powi(3) * 0.25;
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let d = f(Dual::variable(x, 0));
            assert!((d.re - g(x)).abs() < 1e-14);
            assert!((d.du[0] - fd(g, x)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn exprel_is_smooth_through_zero() {
        for &x in &[-1e-3, -1e-6, 0.0, 1e-6, 1e-3, 0.5, -4.0] {
            let (f, df) = exprel_with_derivative(x);
            let exact = if x == 0.0 { 1.0 } else { x.exp_m1() / x };
            assert!((f - exact).abs() < 1e-12, "x={x}");
            let num = fd(|y| exprel_with_derivative(y).0, x);
            assert!((df - num).abs() < 1e-6, "x={x}");
            assert_eq!(Scalar::exprel(x), f);
        }
    }
}
