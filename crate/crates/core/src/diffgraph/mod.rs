//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records primitive ops (matmul, add, elementwise activations,
//! reductions, log-sum-exp) and evaluates them eagerly. Gradients are built
//! as further tape nodes, so they can be differentiated again; the gradient
//! penalty and the exact Hessians of the Laplace objective rely on this.
//!
//! ```
//! use ralab::diffgraph::{gradient, Tensor};
//!
//! let (value, grads) = gradient(
//!     |tape, x| {
//!         let sq = tape.mul(x[0], x[0])?;
//!         tape.sum(sq)
//!     },
//!     &[Tensor::scalar(3.0)],
//! )
//! .unwrap();
//! assert_eq!(value, 9.0);
//! assert_eq!(grads[0].item(), Some(6.0));
//! ```

mod functional;
mod tape;
mod tensor;

pub use functional::{forward, gradient, hessian, MAX_HESSIAN_DIM};
pub use tape::{Tape, Unary, Var};
pub use tensor::Tensor;

pub use tape::{smooth_leaky, smooth_leaky_deriv, smooth_leaky_inv};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("tensor data has {found} entries, expected {expected}")]
    DataLength { expected: usize, found: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("gradient root must be 1x1, got {shape:?}")]
    NonScalarRoot { shape: [usize; 2] },
    #[error("hessian input dimension {dim} exceeds the limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("hessian asymmetry {deviation:e} exceeds tolerance")]
    Asymmetric { deviation: f64 },
    #[error("expected {expected} inputs, got {found}")]
    InputCount { expected: usize, found: usize },
}
