use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use super::scalar::{check_div, check_sqrt, powf_parts, sigmoid, DomainError, Scalar};

/// Caller-chosen identifier of a differentiable parameter.
pub type ParamId = usize;

/// Position of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TapeError {
    #[error("root node {root} is not on this tape (tape holds {len} nodes)")]
    RootNotOnTape { root: usize, len: usize },
    #[error("root variable was recorded on a different tape")]
    ForeignRoot,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
    arity: u8,
}

/// Reverse-mode tape of scalar operations.
///
/// Nodes are appended in evaluation order, so every operand precedes its
/// result and a single backwards pass suffices.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(ParamId, u32)>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("params", &self.params.borrow().len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes and parameters while keeping the allocations.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.params.get_mut().clear();
    }

    /// Registers a differentiable parameter. Registering the same id twice
    /// yields two leaves whose gradients are summed.
    pub fn param(&self, id: ParamId, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [(0, 0.0); 2],
            arity: 0,
        });
        self.params.borrow_mut().push((id, index as u32));
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn unary(&self, a: usize, da: f64, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [(a as u32, da), (0, 0.0)],
            arity: 1,
        });
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    fn binary(&self, a: usize, da: f64, b: usize, db: f64, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [(a as u32, da), (b as u32, db)],
            arity: 2,
        });
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    /// Gradient of `root` with respect to every registered parameter.
    /// Parameters that `root` does not depend on get `0`; a constant root
    /// yields all zeros.
    pub fn reverse_gradient(&self, root: &Var<'_>) -> Result<Gradient, TapeError> {
        match root.tape {
            None => Ok(self.zero_gradient()),
            Some(tape) if std::ptr::eq(tape, self) => self.reverse_gradient_from(NodeId(root.index)),
            Some(_) => Err(TapeError::ForeignRoot),
        }
    }

    pub fn reverse_gradient_from(&self, root: NodeId) -> Result<Gradient, TapeError> {
        let nodes = self.nodes.borrow();
        if root.0 >= nodes.len() {
            return Err(TapeError::RootNotOnTape {
                root: root.0,
                len: nodes.len(),
            });
        }
        let mut adjoint = vec![0.0; root.0 + 1];
        adjoint[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for &(parent, partial) in &node.parents[..node.arity as usize] {
                adjoint[parent as usize] += a * partial;
            }
        }
        let mut grad = self.zero_gradient();
        for &(id, index) in self.params.borrow().iter() {
            if let Some(&a) = adjoint.get(index as usize) {
                *grad.entries.get_mut(&id).expect("registered") += a;
            }
        }
        Ok(grad)
    }

    fn zero_gradient(&self) -> Gradient {
        Gradient {
            entries: self.params.borrow().iter().map(|&(id, _)| (id, 0.0)).collect(),
        }
    }
}

/// Result of a reverse sweep: one partial derivative per registered parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient {
    entries: BTreeMap<ParamId, f64>,
}

impl Gradient {
    /// `None` when `id` was never registered on the tape.
    pub fn get(&self, id: ParamId) -> Option<f64> {
        self.entries.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, f64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Dense vector indexed by parameter id; unregistered ids are zero.
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (id, g) in self.iter() {
            if id < len {
                out[id] = g;
            }
        }
        out
    }
}

/// Scalar recorded on a [`Tape`]. Constants carry no tape at all.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: usize,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.index, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn node(&self) -> Option<NodeId> {
        self.tape.map(|_| NodeId(self.index))
    }

    fn map(self, value: f64, partial: f64) -> Self {
        match self.tape {
            Some(tape) => tape.unary(self.index, partial, value),
            None => Var::constant(value),
        }
    }

    fn zip(self, rhs: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, rhs.tape) {
            (Some(ta), Some(tb)) => {
                assert!(std::ptr::eq(ta, tb), "operands recorded on different tapes");
                ta.binary(self.index, da, rhs.index, db, value)
            }
            (Some(t), None) => t.unary(self.index, da, value),
            (None, Some(t)) => t.unary(rhs.index, db, value),
            (None, None) => Var::constant(value),
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.zip(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(-self.value, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.map(self.value + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.map(self.value - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map(self.value * rhs, rhs)
    }
}

impl Scalar for Var<'_> {
    fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: 0,
            value,
        }
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn tanh(self) -> Self {
        let v = self.value.tanh();
        self.map(v, 1.0 - v * v)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.map(s, s * (1.0 - s))
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.map(e, e)
    }

    fn sin(self) -> Self {
        self.map(self.value.sin(), self.value.cos())
    }

    fn cos(self) -> Self {
        self.map(self.value.cos(), -self.value.sin())
    }

    fn try_div(self, rhs: Self) -> Result<Self, DomainError> {
        check_div(self.value, rhs.value)?;
        let q = self.value / rhs.value;
        Ok(self.zip(rhs, q, 1.0 / rhs.value, -q / rhs.value))
    }

    fn try_sqrt(self) -> Result<Self, DomainError> {
        check_sqrt(self.value)?;
        let r = self.value.sqrt();
        if self.tape.is_none() {
            return Ok(Var::constant(r));
        }
        if r == 0.0 {
            return Err(DomainError::new("sqrt", &[self.value]));
        }
        Ok(self.map(r, 0.5 / r))
    }

    fn try_powf(self, exponent: f64) -> Result<Self, DomainError> {
        let (value, d1, _) = powf_parts(self.value, exponent)?;
        if self.tape.is_none() {
            return Ok(Var::constant(value));
        }
        if !d1.is_finite() {
            return Err(DomainError::new("pow", &[self.value, exponent]));
        }
        Ok(self.map(value, d1))
    }

    fn clamp_min(self, min: f64) -> Self {
        if self.value > min {
            self.map(self.value, 1.0)
        } else {
            Var::constant(min)
        }
    }
}
