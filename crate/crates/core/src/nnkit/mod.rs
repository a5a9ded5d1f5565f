//! Minimal deterministic neural-network engine.
//!
//! Parameters live in named [`ParamGroup`]s; layers are lightweight handles
//! holding tensor indices into a group. Every differentiable operation has a
//! hand-written backward pass, checked against central finite differences in
//! the test suite. Nothing here is multithreaded, so a seed fixes every bit.

mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod norm;
mod optim;
mod tensor;

pub use gradcheck::{central_difference, max_relative_error, GradCheckReport};
pub use layers::{concat_rows, split_rows, Activation, Affine, Mlp, MlpCache};
pub use loss::{mse, weighted_bce_with_logits};
pub use lstm::{Lstm, LstmTrace};
pub use norm::Normalizer;
pub use optim::{adam_step, apply_step, sgd_step, sgd_update, OptimizerKind, OptimizerState};
pub use tensor::{GroupTag, ParamGroup, Tensor};
