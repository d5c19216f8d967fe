//! Reverse-mode differentiation of simulator rollouts with respect to the
//! nozzle trajectory.

mod gradcheck;
mod recording;
mod rollout;
pub mod tape;

pub use gradcheck::{finite_difference_gradient, gradient_check, CoordinateError, GradCheckOptions, GradientReport, ToyProblem};
pub use recording::Recording;
pub use rollout::{backward, rollout, rollout_loss, Rollout};
pub use tape::{NodeId, StateRef, Tape, TapeContext, Value, DEFAULT_TAPE_LIMIT};
