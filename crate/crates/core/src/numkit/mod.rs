//! Dense linear algebra with reverse-mode differentiation.
//!
//! [`Tensor`] is an immutable-by-convention row-major `f64` matrix; [`Tape`]
//! records operations on tensors and replays them backwards.

pub mod dropout;
pub mod gradcheck;
mod tape;
mod tensor;

pub use dropout::DropoutKey;
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use tape::{Fault, Gradients, Tape, Var};
pub use tensor::{sigmoid, Activation, Axis, Tensor};
