use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// An elementary operation was evaluated outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error in `{op}` with operands {operands:?}")]
pub struct DomainError {
    pub op: &'static str,
    pub operands: Vec<f64>,
}

impl DomainError {
    pub(crate) fn new(op: &'static str, operands: &[f64]) -> Self {
        Self {
            op,
            operands: operands.to_vec(),
        }
    }
}

/// Real-valued number type that the network and residuals are written against.
///
/// Implemented by `f64` (plain evaluation), [`Var`](super::Var) (recorded on a
/// reverse tape) and [`Dual2`](super::Dual2) over either of those.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(value: f64) -> Self;

    fn value(&self) -> f64;

    fn tanh(self) -> Self;

    fn sigmoid(self) -> Self;

    fn exp(self) -> Self;

    fn sin(self) -> Self;

    fn cos(self) -> Self;

    fn try_div(self, rhs: Self) -> Result<Self, DomainError>;

    fn try_sqrt(self) -> Result<Self, DomainError>;

    /// `self^exponent` for a constant exponent.
    fn try_powf(self, exponent: f64) -> Result<Self, DomainError>;

    /// `max(self, min)`; the derivative is zero at and below the kink.
    fn clamp_min(self, min: f64) -> Self;

    /// Branch on a predicate evaluated on plain values. Only the chosen branch
    /// contributes derivatives.
    fn select(pred: bool, on_true: Self, on_false: Self) -> Self {
        if pred {
            on_true
        } else {
            on_false
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn check_div(a: f64, b: f64) -> Result<(), DomainError> {
    if b == 0.0 {
        Err(DomainError::new("div", &[a, b]))
    } else {
        Ok(())
    }
}

pub(crate) fn check_sqrt(x: f64) -> Result<(), DomainError> {
    if x < 0.0 || x.is_nan() {
        Err(DomainError::new("sqrt", &[x]))
    } else {
        Ok(())
    }
}

/// Value and the first two derivative coefficients of `x^p`.
pub(crate) fn powf_parts(x: f64, p: f64) -> Result<(f64, f64, f64), DomainError> {
    let err = || DomainError::new("pow", &[x, p]);
    if x < 0.0 && p.fract() != 0.0 {
        return Err(err());
    }
    if x == 0.0 && p < 0.0 {
        return Err(err());
    }
    let value = x.powf(p);
    let d1 = if p == 0.0 { 0.0 } else if p == 1.0 { 1.0 } else { p * x.powf(p - 1.0) };
    let d2 = if p == 0.0 || p == 1.0 {
        0.0
    } else if p == 2.0 {
        2.0
    } else {
        p * (p - 1.0) * x.powf(p - 2.0)
    };
    Ok((value, d1, d2))
}

impl Scalar for f64 {
    fn constant(value: f64) -> Self {
        value
    }

    fn value(&self) -> f64 {
        *self
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn sigmoid(self) -> Self {
        sigmoid(self)
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn sin(self) -> Self {
        f64::sin(self)
    }

    fn cos(self) -> Self {
        f64::cos(self)
    }

    fn try_div(self, rhs: Self) -> Result<Self, DomainError> {
        check_div(self, rhs)?;
        Ok(self / rhs)
    }

    fn try_sqrt(self) -> Result<Self, DomainError> {
        check_sqrt(self)?;
        Ok(f64::sqrt(self))
    }

    fn try_powf(self, exponent: f64) -> Result<Self, DomainError> {
        if self < 0.0 && exponent.fract() != 0.0 || self == 0.0 && exponent < 0.0 {
            return Err(DomainError::new("pow", &[self, exponent]));
        }
        Ok(self.powf(exponent))
    }

    fn clamp_min(self, min: f64) -> Self {
        if self > min {
            self
        } else {
            min
        }
    }
}
