//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations as they are evaluated. [`Graph::grad`]
//! builds the backward pass out of the same recorded operations, so a
//! gradient can appear inside another scalar that is differentiated again.
//! That second pass is what training with an input-gradient penalty needs.

mod check;
mod graph;
mod tensor;

pub use check::{
    analytic_gradient, check_grad, evaluate, max_relative_error, numeric_gradient,
    relative_error, GraphBuilder,
};
pub use graph::{Graph, Node, NodeId, Op};
pub use tensor::Tensor;
