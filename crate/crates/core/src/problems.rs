//! The four model problems: heat transfer with a manufactured solution, a
//! shallow-water style wave, thermal inversion (advection-diffusion with a
//! ground source) and tumor growth (Fisher-KPP with piecewise diffusivity).
//!
//! Residuals are written against [`PointJet`], the local derivatives of `u` at
//! one point, and are generic over [`Scalar`] so they can be evaluated on
//! plain numbers, on tape variables, or on closed-form derivative stubs.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::losses::LossWeights;
use crate::network::{Axis, Channel, JetRequest, Jets, Mlp};
use crate::sampling::{DomainBox, Point};

pub const GRAVITY: f64 = 9.81;
pub const THERMAL_KX: f64 = 0.1;
pub const THERMAL_KY: f64 = 0.01;
pub const TUMOR_RHO: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected heat, wave, thermal_inversion or tumor)")]
    UnknownProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    NeumannZero,
    DirichletZero,
}

/// Local derivatives of `u` at one point. Channels a problem does not request
/// are left at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointJet<S> {
    pub u: S,
    pub u_x: S,
    pub u_xx: S,
    pub u_y: S,
    pub u_yy: S,
    pub u_t: S,
    pub u_tt: S,
}

impl<S: Scalar> PointJet<S> {
    /// Jet of the constant function `u = c`.
    pub fn constant(c: f64) -> Self {
        let zero = S::constant(0.0);
        Self {
            u: S::constant(c),
            u_x: zero,
            u_xx: zero,
            u_y: zero,
            u_yy: zero,
            u_t: zero,
            u_tt: zero,
        }
    }

    pub fn channel_mut(&mut self, channel: Channel) -> &mut S {
        match channel {
            Channel::Value => &mut self.u,
            Channel::D1(Axis::X) => &mut self.u_x,
            Channel::D2(Axis::X) => &mut self.u_xx,
            Channel::D1(Axis::Y) => &mut self.u_y,
            Channel::D2(Axis::Y) => &mut self.u_yy,
            Channel::D1(Axis::T) => &mut self.u_t,
            Channel::D2(Axis::T) => &mut self.u_tt,
        }
    }
}

impl PointJet<f64> {
    /// Picks point `i` out of a batch of channel values.
    pub fn from_jets(jets: &Jets, i: usize) -> Self {
        let mut out = Self::constant(0.0);
        for &ch in jets.channels() {
            *out.channel_mut(ch) = jets.get(ch).expect("listed channel")[i];
        }
        out
    }

    /// Evaluates the network's jet at `p` one axis at a time through scalar
    /// second-order duals.
    pub fn from_network(net: &Mlp, p: &Point) -> Self {
        let jx = net.eval_jet(p.x, p.y, p.t, Axis::X);
        let jy = net.eval_jet(p.x, p.y, p.t, Axis::Y);
        let jt = net.eval_jet(p.x, p.y, p.t, Axis::T);
        Self {
            u: jx.value,
            u_x: jx.d1,
            u_xx: jx.d2,
            u_y: jy.d1,
            u_yy: jy.d2,
            u_t: jt.d1,
            u_tt: jt.d2,
        }
    }
}

// ---- residual operators -------------------------------------------------

/// `u_t - eps (u_xx + u_yy)`, no forcing.
pub fn heat_residual<S: Scalar>(j: &PointJet<S>, epsilon: f64) -> S {
    j.u_t - j.u_xx * epsilon - j.u_yy * epsilon
}

/// `u_tt - g ((u_x - z_x) u_x + (u - z) u_xx + (u_y - z_y) u_y + (u - z) u_yy)`
/// for floor sample `[z, z_x, z_y]`. A flat floor drops the slope terms.
pub fn wave_residual<S: Scalar>(j: &PointJet<S>, floor: [f64; 3], gravity: f64) -> S {
    let [z, z_x, z_y] = floor;
    let depth = j.u - z;
    let flux = (j.u_x - z_x) * j.u_x + depth * j.u_xx + (j.u_y - z_y) * j.u_y + depth * j.u_yy;
    j.u_tt - flux * gravity
}

/// `u_t - dTy u_y - Kx u_xx - Ky u_yy - source`.
pub fn thermal_residual<S: Scalar>(j: &PointJet<S>, kx: f64, ky: f64, dty: f64, source: f64) -> S {
    j.u_t - j.u_y * dty - j.u_xx * kx - j.u_yy * ky - source
}

/// `u_t - D (u_xx + u_yy) - rho u (1 - u)`.
pub fn tumor_residual<S: Scalar>(j: &PointJet<S>, diffusivity: f64, rho: f64) -> S {
    j.u_t - j.u_xx * diffusivity - j.u_yy * diffusivity - j.u * (-j.u + 1.0) * rho
}

// ---- coefficient fields and initial states ------------------------------

/// Manufactured heat solution `exp(-2 pi^2 t) sin(pi x) sin(pi y)`.
pub fn heat_exact(x: f64, y: f64, t: f64) -> f64 {
    (-2.0 * PI * PI * t).exp() * (PI * x).sin() * (PI * y).sin()
}

pub fn heat_initial(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

/// Gaussian hump of height 2 on a still surface at height 2.
pub fn wave_initial(x: f64, y: f64, center: [f64; 2]) -> f64 {
    let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
    2.0 * (-r2 * 30.0).exp() + 2.0
}

/// Vertical temperature gradient: -2 below `y = 0.5`, +2 from there up.
pub fn thermal_dty(y: f64) -> f64 {
    if y < 0.5 {
        -2.0
    } else {
        2.0
    }
}

/// Ground-level vapor source, active for `t <= 0.3` and `y <= 0.125`.
pub fn thermal_source<S: Scalar>(y: S, t: S) -> S {
    let d = 0.7;
    let pulse = ((t * PI).cos() - d)
        .try_div(S::constant(1.0 - d))
        .expect("nonzero constant")
        .clamp_min(0.0);
    let profile = (y * -1200.0 + 150.0) * pulse;
    let zero = S::constant(0.0);
    let in_time = S::select(t.value() <= 0.3, profile, zero);
    S::select(y.value() <= 0.125, in_time, zero)
}

/// Tissue diffusivity: 0.013 in the inner disc, 0.13 in the outer ring, 0
/// elsewhere (thresholds on squared distance to the domain center).
pub fn tumor_diffusivity(x: f64, y: f64) -> f64 {
    let dist = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    if dist < 0.02 {
        0.013
    } else if dist < 0.25 {
        0.13
    } else {
        0.0
    }
}

pub fn tumor_initial(x: f64, y: f64) -> f64 {
    let d = ((x - 0.6).powi(2) + (y - 0.6).powi(2)).sqrt();
    let res = -d * d - 4.0 * d + 0.4;
    if res > 0.0 {
        res
    } else {
        0.0
    }
}

// ---- problem specifications --------------------------------------------

/// Seabed / shore height `z(x, y)` for the wave problem.
#[derive(Clone)]
pub enum Floor {
    Flat(f64),
    /// Returns `[z, z_x, z_y]`; the slope must be consistent with the height.
    Field(Arc<dyn Fn(f64, f64) -> [f64; 3] + Send + Sync>),
}

impl Floor {
    /// Height and slope `[z, z_x, z_y]` at `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> [f64; 3] {
        match self {
            Floor::Flat(z) => [*z, 0.0, 0.0],
            Floor::Field(f) => f(x, y),
        }
    }
}

impl fmt::Debug for Floor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Floor::Flat(z) => write!(f, "Flat({z})"),
            Floor::Field(_) => f.write_str("Field(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Problem {
    Heat { epsilon: f64 },
    Wave { gravity: f64, center: [f64; 2], floor: Floor },
    ThermalInversion { kx: f64, ky: f64 },
    Tumor { rho: f64 },
}

/// Default run parameters for a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub length: f64,
    pub total_time: f64,
    pub n_points: usize,
    pub n_points_plot: usize,
    pub weights: LossWeights,
    pub layers: usize,
    pub neurons_per_layer: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub problem: Problem,
    pub boundary: BoundaryKind,
}

impl ProblemSpec {
    pub const NAMES: [&'static str; 4] = ["heat", "wave", "thermal_inversion", "tumor"];

    pub fn heat() -> Self {
        Self {
            problem: Problem::Heat { epsilon: 1.0 },
            boundary: BoundaryKind::DirichletZero,
        }
    }

    pub fn wave() -> Self {
        let length = Self::defaults_for("wave").length;
        Self {
            problem: Problem::Wave {
                gravity: GRAVITY,
                center: [length / 2.0, length / 2.0],
                floor: Floor::Flat(0.0),
            },
            boundary: BoundaryKind::NeumannZero,
        }
    }

    pub fn thermal_inversion() -> Self {
        Self {
            problem: Problem::ThermalInversion {
                kx: THERMAL_KX,
                ky: THERMAL_KY,
            },
            boundary: BoundaryKind::NeumannZero,
        }
    }

    pub fn tumor() -> Self {
        Self {
            problem: Problem::Tumor { rho: TUMOR_RHO },
            boundary: BoundaryKind::NeumannZero,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, ProblemError> {
        match name {
            "heat" => Ok(Self::heat()),
            "wave" => Ok(Self::wave()),
            "thermal_inversion" => Ok(Self::thermal_inversion()),
            "tumor" => Ok(Self::tumor()),
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.problem {
            Problem::Heat { .. } => "heat",
            Problem::Wave { .. } => "wave",
            Problem::ThermalInversion { .. } => "thermal_inversion",
            Problem::Tumor { .. } => "tumor",
        }
    }

    /// Re-centers problem data that depends on the domain (the wave hump).
    pub fn fit_domain(mut self, domain: &DomainBox) -> Self {
        if let Problem::Wave { center, .. } = &mut self.problem {
            let [x0, x1] = domain.x();
            let [y0, y1] = domain.y();
            *center = [(x0 + x1) / 2.0, (y0 + y1) / 2.0];
        }
        self
    }

    pub fn defaults(&self) -> Defaults {
        Self::defaults_for(self.name())
    }

    fn defaults_for(name: &str) -> Defaults {
        let w = |r, i, b| LossWeights::new(r, i, b).expect("valid default weights");
        match name {
            "wave" => Defaults {
                length: 2.0,
                total_time: 0.5,
                n_points: 15,
                n_points_plot: 150,
                weights: w(0.03, 1.0, 0.0005),
                layers: 10,
                neurons_per_layer: 120,
                epochs: 150_000,
                learning_rate: 0.00015,
            },
            "thermal_inversion" => Defaults {
                length: 1.0,
                total_time: 1.0,
                n_points: 15,
                n_points_plot: 150,
                weights: w(20.0, 1.0, 10.0),
                layers: 2,
                neurons_per_layer: 600,
                epochs: 30_000,
                learning_rate: 0.002,
            },
            "tumor" => Defaults {
                length: 1.0,
                total_time: 1.0,
                n_points: 20,
                n_points_plot: 150,
                weights: w(1.0, 1.0, 1.0),
                layers: 4,
                neurons_per_layer: 80,
                epochs: 50_000,
                learning_rate: 0.005,
            },
            _ => Defaults {
                length: 1.0,
                total_time: 1.0,
                n_points: 15,
                n_points_plot: 150,
                weights: w(1.0, 1.0, 1.0),
                layers: 4,
                neurons_per_layer: 80,
                epochs: 20_000,
                learning_rate: 0.002,
            },
        }
    }

    /// Input derivatives the residual needs.
    pub fn jet_request(&self) -> JetRequest {
        let spatial = JetRequest::value_only().with(Axis::X, 2).with(Axis::Y, 2);
        match self.problem {
            Problem::Wave { .. } => spatial.with(Axis::T, 2),
            _ => spatial.with(Axis::T, 1),
        }
    }

    pub fn residual<S: Scalar>(&self, p: &Point, j: &PointJet<S>) -> S {
        match &self.problem {
            Problem::Heat { epsilon } => heat_residual(j, *epsilon),
            Problem::Wave { gravity, floor, .. } => wave_residual(j, floor.at(p.x, p.y), *gravity),
            Problem::ThermalInversion { kx, ky } => {
                thermal_residual(j, *kx, *ky, thermal_dty(p.y), thermal_source(p.y, p.t))
            }
            Problem::Tumor { rho } => tumor_residual(j, tumor_diffusivity(p.x, p.y), *rho),
        }
    }

    /// Residual of the network at one point, via scalar duals.
    pub fn residual_at(&self, net: &Mlp, p: &Point) -> f64 {
        self.residual(p, &PointJet::from_network(net, p))
    }

    pub fn initial(&self, x: f64, y: f64) -> f64 {
        match &self.problem {
            Problem::Heat { .. } => heat_initial(x, y),
            Problem::Wave { center, .. } => wave_initial(x, y, *center),
            Problem::ThermalInversion { .. } => 0.0,
            Problem::Tumor { .. } => tumor_initial(x, y),
        }
    }

    /// Closed-form solution, when one is known. Only the unit-coefficient
    /// heat problem has one.
    pub fn exact(&self, x: f64, y: f64, t: f64) -> Option<f64> {
        match self.problem {
            Problem::Heat { epsilon } if epsilon == 1.0 => Some(heat_exact(x, y, t)),
            _ => None,
        }
    }

    pub fn has_exact(&self) -> bool {
        self.exact(0.0, 0.0, 0.0).is_some()
    }
}
