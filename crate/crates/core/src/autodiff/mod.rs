//! Exact derivatives for the network and the losses built on top of it.
//!
//! Two complementary pieces live here:
//!
//! * [`Dual2`] is a second-order forward-mode number. It carries a value with
//!   its first and second derivative along one designated input, which is how
//!   `u_x`, `u_xx`, `u_t`, ... are obtained from a single forward pass.
//! * [`Tape`] records scalar operations ([`Var`]) and replays them backwards
//!   to produce the gradient of a root with respect to registered parameters.
//!
//! Both implement [`Scalar`], and [`Dual2`] is generic over it, so a
//! `Dual2<Var>` pushes the whole second-order forward computation onto the
//! tape. One reverse sweep then yields parameter gradients of expressions that
//! contain input derivatives.

mod dual;
mod scalar;
mod tape;

pub use dual::{lift_input, Dual2};
pub use scalar::{DomainError, Scalar};
pub use tape::{Gradient, NodeId, ParamId, Tape, TapeError, Var};
