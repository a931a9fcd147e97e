//! Residual, initial-condition and boundary-condition losses and their
//! weighted sum, each returned together with its parameter gradient.
//!
//! Every component is the mean of squared pointwise residuals. The network
//! part of the gradient comes from the batched jet backward pass; the
//! pointwise PDE residual is differentiated with respect to the jet channels on
//! a small reverse tape, so any residual written against [`PointJet`] works.
//! [`taped`] holds an independent implementation that records the entire
//! computation on one scalar tape.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, Var};
use crate::network::{Axis, Channel, JetRequest, Jets, Mlp};
use crate::problems::{BoundaryKind, PointJet, ProblemSpec};
use crate::sampling::{BoundaryFaces, CollocationSet, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("empty point set for the {0} loss")]
    EmptyPointSet(&'static str),
    #[error("non-finite {term} residual {value} at ({}, {}, {})", point.x, point.y, point.t)]
    NonFinite {
        term: &'static str,
        point: Point,
        value: f64,
    },
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub residual: f64,
    pub initial: f64,
    pub boundary: f64,
}

impl LossWeights {
    pub fn new(residual: f64, initial: f64, boundary: f64) -> Result<Self, LossError> {
        let w = Self {
            residual,
            initial,
            boundary,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let all = [self.residual, self.initial, self.boundary];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LossError::InvalidWeights(format!(
                "weights must be finite and >= 0, got {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(LossError::InvalidWeights("all weights are zero".into()));
        }
        Ok(())
    }

    /// Weighted sum of three component values.
    pub fn combine(&self, residual: f64, initial: f64, boundary: f64) -> f64 {
        self.residual * residual + self.initial * initial + self.boundary * boundary
    }
}

/// Unweighted components and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub residual: f64,
    pub initial: f64,
    pub boundary: f64,
}

/// A loss value with its gradient with respect to the flat network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// One lateral face of the space-time box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Down,
    Up,
    Left,
    Right,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Down, Face::Up, Face::Left, Face::Right];

    /// Axis of the (signless) normal derivative on this face.
    pub fn normal_axis(self) -> Axis {
        match self {
            Face::Down | Face::Up => Axis::Y,
            Face::Left | Face::Right => Axis::X,
        }
    }

    pub fn points(self, faces: &BoundaryFaces) -> &[Point] {
        match self {
            Face::Down => &faces.down,
            Face::Up => &faces.up,
            Face::Left => &faces.left,
            Face::Right => &faces.right,
        }
    }
}

fn non_empty(points: &[Point], term: &'static str) -> Result<(), LossError> {
    if points.is_empty() {
        Err(LossError::EmptyPointSet(term))
    } else {
        Ok(())
    }
}

fn check_finite(term: &'static str, point: &Point, value: f64) -> Result<(), LossError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(LossError::NonFinite {
            term,
            point: *point,
            value,
        })
    }
}

/// Mean of `r^2` where `r = pointwise(point, channel values)` depends on a
/// single channel linearly with unit slope (trace or normal derivative).
fn single_channel_loss(
    net: &Mlp,
    points: &[Point],
    channel: Channel,
    request: JetRequest,
    term: &'static str,
    target: impl Fn(&Point) -> f64,
) -> Result<LossValue, LossError> {
    non_empty(points, term)?;
    let scale = 2.0 / points.len() as f64;
    let mut sum = 0.0;
    let mut gradient = vec![0.0; net.num_params()];
    net.jets_backprop(points, request, &mut gradient, |chunk, jets, adjoint| {
        let values = jets.get(channel).expect("requested channel");
        let adj = adjoint.get_mut(channel).expect("requested channel");
        for (i, p) in chunk.iter().enumerate() {
            let r = values[i] - target(p);
            check_finite(term, p, r)?;
            sum += r * r;
            adj[i] = scale * r;
        }
        Ok(())
    })?;
    Ok(LossValue {
        value: sum / points.len() as f64,
        gradient,
    })
}

/// Mean squared PDE residual over interior points.
pub fn residual_loss(net: &Mlp, problem: &ProblemSpec, points: &[Point]) -> Result<LossValue, LossError> {
    non_empty(points, "residual")?;
    let scale = 2.0 / points.len() as f64;
    let mut sum = 0.0;
    let mut gradient = vec![0.0; net.num_params()];
    let mut tape = Tape::new();
    net.jets_backprop(points, problem.jet_request(), &mut gradient, |chunk, jets, adjoint| {
        for (i, p) in chunk.iter().enumerate() {
            tape.clear();
            let mut jet = PointJet::<Var>::constant(0.0);
            for (slot, &ch) in jets.channels().iter().enumerate() {
                *jet.channel_mut(ch) = tape.param(slot, jets.get(ch).expect("channel")[i]);
            }
            let r = problem.residual(p, &jet);
            let rv = r.value();
            check_finite("residual", p, rv)?;
            sum += rv * rv;
            let local = tape.reverse_gradient(&r).expect("root recorded on this tape");
            for (slot, &ch) in jets.channels().iter().enumerate() {
                adjoint.get_mut(ch).expect("channel")[i] = scale * rv * local.get(slot).unwrap_or(0.0);
            }
        }
        Ok(())
    })?;
    Ok(LossValue {
        value: sum / points.len() as f64,
        gradient,
    })
}

/// Mean of `(u(x, y, t0) - u0(x, y))^2`.
pub fn initial_loss(net: &Mlp, problem: &ProblemSpec, points: &[Point]) -> Result<LossValue, LossError> {
    single_channel_loss(net, points, Channel::Value, JetRequest::value_only(), "initial", |p| {
        problem.initial(p.x, p.y)
    })
}

/// Loss contribution of one face: mean squared normal derivative (Neumann)
/// or mean squared trace (Dirichlet).
pub fn face_loss(net: &Mlp, kind: BoundaryKind, face: Face, points: &[Point]) -> Result<LossValue, LossError> {
    match kind {
        BoundaryKind::NeumannZero => {
            let axis = face.normal_axis();
            let request = JetRequest::value_only().with(axis, 1);
            single_channel_loss(net, points, Channel::D1(axis), request, "boundary", |_| 0.0)
        }
        BoundaryKind::DirichletZero => {
            single_channel_loss(net, points, Channel::Value, JetRequest::value_only(), "boundary", |_| 0.0)
        }
    }
}

fn sum_faces(net: &Mlp, kind: BoundaryKind, faces: &BoundaryFaces) -> Result<LossValue, LossError> {
    let mut total = LossValue {
        value: 0.0,
        gradient: vec![0.0; net.num_params()],
    };
    for face in Face::ALL {
        let part = face_loss(net, kind, face, face.points(faces))?;
        total.value += part.value;
        for (g, p) in total.gradient.iter_mut().zip(&part.gradient) {
            *g += p;
        }
    }
    Ok(total)
}

/// Zero-Neumann loss: `u_y` on down/up, `u_x` on left/right.
pub fn boundary_loss_neumann(net: &Mlp, faces: &BoundaryFaces) -> Result<LossValue, LossError> {
    sum_faces(net, BoundaryKind::NeumannZero, faces)
}

/// Zero-Dirichlet loss: the trace of `u` on all four faces.
pub fn boundary_loss_dirichlet(net: &Mlp, faces: &BoundaryFaces) -> Result<LossValue, LossError> {
    sum_faces(net, BoundaryKind::DirichletZero, faces)
}

pub fn boundary_loss(net: &Mlp, problem: &ProblemSpec, faces: &BoundaryFaces) -> Result<LossValue, LossError> {
    sum_faces(net, problem.boundary, faces)
}

/// Weighted training objective and its gradient. The breakdown reports the
/// unweighted components.
pub fn total_loss(
    net: &Mlp,
    problem: &ProblemSpec,
    weights: &LossWeights,
    sets: &CollocationSet,
) -> Result<(LossBreakdown, Vec<f64>), LossError> {
    weights.validate()?;
    let res = residual_loss(net, problem, &sets.interior)?;
    let init = initial_loss(net, problem, &sets.initial)?;
    let bnd = boundary_loss(net, problem, &sets.boundary)?;
    let gradient = res
        .gradient
        .iter()
        .zip(&init.gradient)
        .zip(&bnd.gradient)
        .map(|((r, i), b)| weights.residual * r + weights.initial * i + weights.boundary * b)
        .collect();
    let breakdown = LossBreakdown {
        total: weights.combine(res.value, init.value, bnd.value),
        residual: res.value,
        initial: init.value,
        boundary: bnd.value,
    };
    Ok((breakdown, gradient))
}

fn mean_square(
    points: &[Point],
    term: &'static str,
    mut pointwise: impl FnMut(usize, &Point) -> f64,
) -> Result<f64, LossError> {
    non_empty(points, term)?;
    let mut sum = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = pointwise(i, p);
        check_finite(term, p, r)?;
        sum += r * r;
    }
    Ok(sum / points.len() as f64)
}

/// Loss values only, without the backward pass.
pub fn evaluate_losses(
    net: &Mlp,
    problem: &ProblemSpec,
    weights: &LossWeights,
    sets: &CollocationSet,
) -> Result<LossBreakdown, LossError> {
    weights.validate()?;
    let jets = net.jets(&sets.interior, problem.jet_request());
    let residual = mean_square(&sets.interior, "residual", |i, p| {
        problem.residual(p, &PointJet::from_jets(&jets, i))
    })?;
    let jets = net.jets(&sets.initial, JetRequest::value_only());
    let initial = mean_square(&sets.initial, "initial", |i, p| jets.value()[i] - problem.initial(p.x, p.y))?;
    let mut boundary = 0.0;
    for face in Face::ALL {
        let points = face.points(&sets.boundary);
        let (channel, request) = match problem.boundary {
            BoundaryKind::NeumannZero => {
                let axis = face.normal_axis();
                (Channel::D1(axis), JetRequest::value_only().with(axis, 1))
            }
            BoundaryKind::DirichletZero => (Channel::Value, JetRequest::value_only()),
        };
        let jets: Jets = net.jets(points, request);
        let values = jets.get(channel).expect("requested channel");
        boundary += mean_square(points, "boundary", |i, _| values[i])?;
    }
    Ok(LossBreakdown {
        total: weights.combine(residual, initial, boundary),
        residual,
        initial,
        boundary,
    })
}

pub mod taped {
    //! Reference implementation: the whole objective, including the
    //! second-order input derivatives, is recorded on one scalar tape and
    //! differentiated in a single reverse sweep. Slow; meant for small
    //! networks and cross-checks.

    use super::*;
    use crate::autodiff::Dual2;

    fn jet_on_tape<'t>(net: &Mlp, params: &[Var<'t>], p: &Point) -> PointJet<Var<'t>> {
        let along = |axis: Axis| {
            let coord = |a: Axis, v: f64| {
                if a == axis {
                    Dual2::variable(Var::constant(v))
                } else {
                    Dual2::passive(Var::constant(v))
                }
            };
            net.forward(
                |i| Dual2::passive(params[i]),
                [coord(Axis::X, p.x), coord(Axis::Y, p.y), coord(Axis::T, p.t)],
            )
        };
        let jx = along(Axis::X);
        let jy = along(Axis::Y);
        let jt = along(Axis::T);
        PointJet {
            u: jx.value,
            u_x: jx.d1,
            u_xx: jx.d2,
            u_y: jy.d1,
            u_yy: jy.d2,
            u_t: jt.d1,
            u_tt: jt.d2,
        }
    }

    fn mean<'t>(terms: Vec<Var<'t>>) -> Var<'t> {
        let n = terms.len() as f64;
        let sum = terms.into_iter().fold(Var::constant(0.0), |acc, r| acc + r * r);
        sum * (1.0 / n)
    }

    pub fn total_loss(
        net: &Mlp,
        problem: &ProblemSpec,
        weights: &LossWeights,
        sets: &CollocationSet,
    ) -> Result<(LossBreakdown, Vec<f64>), LossError> {
        weights.validate()?;
        non_empty(&sets.interior, "residual")?;
        non_empty(&sets.initial, "initial")?;
        for face in Face::ALL {
            non_empty(face.points(&sets.boundary), "boundary")?;
        }
        let tape = Tape::new();
        let params: Vec<Var> = net.params().iter().enumerate().map(|(i, &v)| tape.param(i, v)).collect();

        let residual = mean(
            sets.interior
                .iter()
                .map(|p| problem.residual(p, &jet_on_tape(net, &params, p)))
                .collect(),
        );
        let initial = mean(
            sets.initial
                .iter()
                .map(|p| jet_on_tape(net, &params, p).u - problem.initial(p.x, p.y))
                .collect(),
        );
        let mut boundary = Var::constant(0.0);
        for face in Face::ALL {
            let terms = face
                .points(&sets.boundary)
                .iter()
                .map(|p| {
                    let j = jet_on_tape(net, &params, p);
                    match (problem.boundary, face.normal_axis()) {
                        (BoundaryKind::DirichletZero, _) => j.u,
                        (BoundaryKind::NeumannZero, Axis::X) => j.u_x,
                        (BoundaryKind::NeumannZero, _) => j.u_y,
                    }
                })
                .collect();
            boundary = boundary + mean(terms);
        }
        let total = residual * weights.residual + initial * weights.initial + boundary * weights.boundary;
        let gradient = tape
            .reverse_gradient(&total)
            .expect("root recorded on this tape")
            .to_dense(net.num_params());
        Ok((
            LossBreakdown {
                total: total.value(),
                residual: residual.value(),
                initial: initial.value(),
                boundary: boundary.value(),
            },
            gradient,
        ))
    }
}
