//! A small reverse-mode differentiation engine.
//!
//! A [`Graph`] records every operation of one forward pass together with its
//! backward rule. [`Graph::backward`] then sweeps the record once in reverse
//! creation order, accumulating gradients into every node that requires one.
//! Only the operations the point-cloud networks use are provided.

mod gradcheck;
mod graph;
pub(crate) mod linalg;
mod norm;
mod ops;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, GradEntry};
pub use graph::{BackwardCtx, BackwardFn, Graph, Var};
pub use norm::{BatchNormState, BatchStats};
pub use tensor::{argmax, softmax_rows, Tensor};

/// Whether layers behave as during training (batch statistics, dropout) or
/// inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
