//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is built per example. It borrows a [`ParamStore`] and adds
//! parameter gradients into a caller-owned [`Gradients`] buffer, so several
//! examples can accumulate into one buffer before an update.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::{Graph, NodeId};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
