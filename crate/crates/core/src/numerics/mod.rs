//! Dense/sparse kernels, losses, AdamW and a finite-difference checker.
//!
//! Everything here is 64-bit and single-threaded; each operation is a pure
//! function of its inputs apart from the optimizer state.

mod adamw;
mod dd;
mod gradcheck;
mod loss;
mod matrix;
mod sparse;

pub use adamw::AdamW;
pub use dd::Dd;
pub use gradcheck::{finite_diff_check, finite_diff_check_by, Coordinates};
pub use loss::{bce_loss, mse_loss, sigmoid};
pub use matrix::{relu, relu_backward, Matrix};
pub use sparse::SparseMatrix;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix {rows}x{cols} needs {} values, got {len}", rows * cols)]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("duplicate sparse entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("index {index} out of bounds for dimension {bound}")]
    IndexOutOfBounds { index: usize, bound: usize },
    #[error("optimizer got {params} parameter tensors but {grads} gradients")]
    TensorCount { params: usize, grads: usize },
    #[error("tensor {tensor}: parameter length {param} != gradient length {grad}")]
    TensorLength { tensor: usize, param: usize, grad: usize },
    #[error("parameter layout changed since the optimizer's first step")]
    OptimizerLayout,
}
