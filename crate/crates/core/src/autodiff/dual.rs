use std::ops::{Add, Mul, Neg, Sub};

use super::scalar::{DomainError, Scalar};

/// Second-order forward-mode number: a value together with its first and
/// second derivative with respect to one designated input.
///
/// The component type `S` is usually `f64`; with `S = Var` every operation is
/// also recorded on a reverse tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2<S = f64> {
    pub value: S,
    pub d1: S,
    pub d2: S,
}

/// Lifts a plain input coordinate. The designated input gets a unit first
/// derivative, everything else is a constant.
pub fn lift_input(x: f64, is_designated: bool) -> Dual2<f64> {
    if is_designated {
        Dual2::variable(x)
    } else {
        Dual2::passive(x)
    }
}

impl<S: Scalar> Dual2<S> {
    pub fn new(value: S, d1: S, d2: S) -> Self {
        Self { value, d1, d2 }
    }

    /// The designated input: `(x, 1, 0)`.
    pub fn variable(value: S) -> Self {
        Self::new(value, S::constant(1.0), S::constant(0.0))
    }

    /// A quantity that does not depend on the designated input.
    pub fn passive(value: S) -> Self {
        Self::new(value, S::constant(0.0), S::constant(0.0))
    }

    /// Applies `g(self)` given `g`, `g'` and `g''` evaluated at `self.value`.
    #[inline]
    fn chain(self, g: S, g1: S, g2: S) -> Self {
        Self {
            value: g,
            d1: g1 * self.d1,
            d2: g1 * self.d2 + g2 * self.d1 * self.d1,
        }
    }

    fn has_derivative(&self) -> bool {
        self.d1.value() != 0.0 || self.d2.value() != 0.0
    }
}

impl<S: Scalar> Add for Dual2<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl<S: Scalar> Sub for Dual2<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl<S: Scalar> Mul for Dual2<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.d1 * rhs.value + self.value * rhs.d1,
            self.d2 * rhs.value + (self.d1 * rhs.d1) * 2.0 + self.value * rhs.d2,
        )
    }
}

impl<S: Scalar> Neg for Dual2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2)
    }
}

impl<S: Scalar> Add<f64> for Dual2<S> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self::new(self.value + rhs, self.d1, self.d2)
    }
}

impl<S: Scalar> Sub<f64> for Dual2<S> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self::new(self.value - rhs, self.d1, self.d2)
    }
}

impl<S: Scalar> Mul<f64> for Dual2<S> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.value * rhs, self.d1 * rhs, self.d2 * rhs)
    }
}

impl<S: Scalar> Scalar for Dual2<S> {
    fn constant(value: f64) -> Self {
        Self::passive(S::constant(value))
    }

    fn value(&self) -> f64 {
        self.value.value()
    }

    fn tanh(self) -> Self {
        let v = self.value.tanh();
        let g1 = -(v * v) + 1.0;
        let g2 = v * g1 * -2.0;
        self.chain(v, g1, g2)
    }

    fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        let g1 = s * (-s + 1.0);
        let g2 = g1 * (s * -2.0 + 1.0);
        self.chain(s, g1, g2)
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    fn sin(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(s, c, -s)
    }

    fn cos(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.chain(c, -s, -c)
    }

    fn try_div(self, rhs: Self) -> Result<Self, DomainError> {
        if rhs.value() == 0.0 {
            return Err(DomainError::new("div", &[self.value(), rhs.value()]));
        }
        let q = self.value.try_div(rhs.value)?;
        let q1 = (self.d1 - q * rhs.d1).try_div(rhs.value)?;
        let q2 = (self.d2 - q1 * rhs.d1 * 2.0 - q * rhs.d2).try_div(rhs.value)?;
        Ok(Self::new(q, q1, q2))
    }

    fn try_sqrt(self) -> Result<Self, DomainError> {
        let x = self.value();
        if x < 0.0 || (x == 0.0 && self.has_derivative()) {
            return Err(DomainError::new("sqrt", &[x]));
        }
        let r = self.value.try_sqrt()?;
        if x == 0.0 {
            return Ok(Self::passive(r));
        }
        let two_r = r * 2.0;
        let r1 = self.d1.try_div(two_r)?;
        let r2 = (self.d2 - r1 * r1 * 2.0).try_div(two_r)?;
        Ok(Self::new(r, r1, r2))
    }

    fn try_powf(self, exponent: f64) -> Result<Self, DomainError> {
        let p = exponent;
        let value = self.value.try_powf(p)?;
        if !self.has_derivative() {
            return Ok(Self::passive(value));
        }
        let zero = S::constant(0.0);
        let g1 = match p {
            p if p == 0.0 => zero,
            p if p == 1.0 => S::constant(1.0),
            _ => self.value.try_powf(p - 1.0)? * p,
        };
        let g2 = match p {
            p if p == 0.0 || p == 1.0 => zero,
            p if p == 2.0 => S::constant(2.0),
            _ => self.value.try_powf(p - 2.0)? * (p * (p - 1.0)),
        };
        if !g1.value().is_finite() || !g2.value().is_finite() {
            return Err(DomainError::new("pow", &[self.value(), p]));
        }
        Ok(self.chain(value, g1, g2))
    }

    fn clamp_min(self, min: f64) -> Self {
        if self.value() > min {
            self
        } else {
            Self::constant(min)
        }
    }
}
