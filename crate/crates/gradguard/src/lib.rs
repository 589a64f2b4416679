//! Train small classifiers whose input gradients agree with annotations of
//! which features must not matter, and inspect those gradients as
//! explanations.

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod explain;
pub mod fae;
pub mod model;
pub mod surrogate;
pub mod training;

pub use autodiff::{Graph, NodeId, Tensor};
pub use error::{Error, Result};
