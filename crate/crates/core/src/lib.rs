//! Physics-informed neural networks for time-dependent PDEs on 2D rectangles.
//!
//! A network `u(x, y, t)` is trained so that a PDE residual, an initial
//! condition and a boundary condition vanish on sets of collocation points.
//! Four problems are built in: heat, wave, thermal inversion and tumor growth.

pub mod autodiff;
pub mod cli;
pub mod losses;
pub mod network;
pub mod postprocess;
pub mod problems;
pub mod sampling;
pub mod training;

pub use losses::{LossBreakdown, LossWeights};
pub use network::{Activation, Axis, Mlp, NetConfig};
pub use problems::ProblemSpec;
pub use sampling::{DomainBox, Point, SamplingMode};
pub use training::{AdamState, TrainConfig, TrainReport, Trainer};
