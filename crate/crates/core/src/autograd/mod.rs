//! Reverse-mode automatic differentiation over dense arrays.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use graph::{softmax_values, ElementwiseKind, Gradients, Graph, Var};
pub use params::{Bound, ParamStore};
pub use tensor::{gemm, gemm_new, Mat, Real, Tensor};
