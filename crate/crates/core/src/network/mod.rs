//! Fully connected network `u(x, y, t)` with three inputs and one output.
//!
//! Parameters are stored flat: for every layer the row-major weight matrix
//! (`out x in`) followed by the bias vector. Hidden layers apply the
//! activation, the output layer is affine.

mod batch;
mod checkpoint;

use ndarray::{ArrayView1, ArrayView2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{lift_input, Dual2, Scalar};

pub use batch::{Channel, JetRequest, Jets, CHUNK_POINTS};
pub use checkpoint::CheckpointError;

pub const INPUTS: usize = 3;
pub const OUTPUTS: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("derivative order must be 1 or 2, got {0}")]
    InvalidOrder(usize),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} parameters for layer sizes {sizes:?}, got {actual}")]
    ParameterCount {
        sizes: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite parameter at index {0}")]
    NonFiniteParameter(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => z.sigmoid(),
        }
    }

    /// Value and first three derivatives of the activation at `z`.
    #[inline]
    pub(crate) fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let s = z.tanh();
                let s1 = 1.0 - s * s;
                let s2 = -2.0 * s * s1;
                let s3 = s1 * (6.0 * s * s - 2.0);
                [s, s1, s2, s3]
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
                [s, s1, s2, s3]
            }
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Input coordinate a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    T,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::T];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Number of hidden layers.
    pub num_hidden: usize,
    /// Neurons per hidden layer.
    pub dim_hidden: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl NetConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![INPUTS];
        sizes.extend(std::iter::repeat(self.dim_hidden).take(self.num_hidden));
        sizes.push(OUTPUTS);
        sizes
    }
}

/// Number of parameters of a network with the given layer widths.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    seed: u64,
    offsets: Vec<usize>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &NetConfig) -> Result<Self, NetworkError> {
        if config.num_hidden == 0 || config.dim_hidden == 0 {
            return Err(NetworkError::InvalidConfig(format!(
                "num_hidden and dim_hidden must be >= 1 (got {} and {})",
                config.num_hidden, config.dim_hidden
            )));
        }
        let sizes = config.layer_sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::with_capacity(parameter_count(&sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self::from_parts(sizes, config.activation, params, config.seed)
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        if sizes.len() < 2
            || sizes[0] != INPUTS
            || *sizes.last().unwrap() != OUTPUTS
            || sizes.iter().any(|&s| s == 0)
        {
            return Err(NetworkError::InvalidConfig(format!(
                "layer sizes must start with {INPUTS}, end with {OUTPUTS} and be nonzero: {sizes:?}"
            )));
        }
        let expected = parameter_count(&sizes);
        if params.len() != expected {
            return Err(NetworkError::ParameterCount {
                sizes,
                expected,
                actual: params.len(),
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let net = Self {
            sizes,
            activation,
            params,
            seed,
            offsets,
        };
        net.check_finite()?;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn check_finite(&self) -> Result<(), NetworkError> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(NetworkError::NonFiniteParameter(i)),
            None => Ok(()),
        }
    }

    /// Flat offsets of the weight block and bias block of layer `k`.
    pub fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let w = self.offsets[k];
        (w, w + self.sizes[k] * self.sizes[k + 1])
    }

    pub fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
        let (w, b) = self.layer_offsets(k);
        let weights = ArrayView2::from_shape((n_out, n_in), &self.params[w..b]).expect("layer shape");
        let bias = ArrayView1::from(&self.params[b..b + n_out]);
        (weights, bias)
    }

    /// Scalar forward pass over any [`Scalar`]. `param(i)` supplies parameter
    /// `i` in the chosen number type, e.g. a tape variable.
    pub fn forward<S: Scalar>(&self, param: impl Fn(usize) -> S, input: [S; INPUTS]) -> S {
        let mut current: Vec<S> = input.to_vec();
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let (w, b) = self.layer_offsets(k);
            let last = k + 1 == self.num_layers();
            current = (0..n_out)
                .map(|r| {
                    let mut z = param(b + r);
                    for (c, &h) in current.iter().enumerate() {
                        z = z + param(w + r * n_in + c) * h;
                    }
                    if last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
        }
        current[0]
    }

    pub fn eval_f(&self, x: f64, y: f64, t: f64) -> f64 {
        self.forward(|i| self.params[i], [x, y, t])
    }

    /// Value, first and second derivative of `u` along `wrt`.
    pub fn eval_jet(&self, x: f64, y: f64, t: f64, wrt: Axis) -> Dual2 {
        let input = [
            lift_input(x, wrt == Axis::X),
            lift_input(y, wrt == Axis::Y),
            lift_input(t, wrt == Axis::T),
        ];
        self.forward(|i| Dual2::passive(self.params[i]), input)
    }

    pub fn eval_derivative(
        &self,
        x: f64,
        y: f64,
        t: f64,
        wrt: Axis,
        order: usize,
    ) -> Result<f64, NetworkError> {
        let jet = self.eval_jet(x, y, t, wrt);
        match order {
            1 => Ok(jet.d1),
            2 => Ok(jet.d2),
            other => Err(NetworkError::InvalidOrder(other)),
        }
    }
}
