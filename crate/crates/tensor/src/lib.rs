//! Minimal dense tensors with a reverse-mode tape.
//!
//! Provides exactly the operations the two-branch detector needs: matrix
//! products, 2-D convolution, pooling, bilinear resampling, batch norm,
//! row softmax, fused spatial attention and cross-entropy, plus Adam and a
//! named-parameter checkpoint format. Generic over `f32` (training) and
//! `f64` (oracles and gradient checks).

mod adam;
pub mod checkpoint;
mod dots;
mod error;
mod graph;
pub mod kernels;
mod param;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use dots::row_dots;
pub use error::{Result, TensorError};
pub use graph::{BnMode, Gradients, Graph, RunningStats, Var};
pub use param::{fan_in_uniform, Binder, Param, ParamId, ParamStore};
pub use scalar::{fast_exp_f32, gemm, MatMut, MatRef, Scalar};
pub use tensor::Tensor;
