//! Tape-based reverse-mode automatic differentiation.
//!
//! The building blocks every trainable component shares: dense tensors
//! ([`Tensor`]), the Wengert tape ([`Tape`], [`Var`]), direct convolutions,
//! the Adam optimizer over a named [`ParamSet`], and finite-difference
//! gradient verification.

mod adam;
mod conv;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{bind_params, collect_grads, name_seed, Adam, ParamSet};
pub use gradcheck::{check_gradients, GradCheck, FD_STEP, FD_TOLERANCE};
pub use tape::{Csr, Ctx, Tape, Var};
pub use tensor::{broadcast_shape, lit, Real, Tensor, CLAMP_FLOOR};
