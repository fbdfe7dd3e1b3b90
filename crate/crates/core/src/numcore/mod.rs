//! Dense numerics and tape-based reverse-mode differentiation.

mod init;
pub mod rng;
mod scalar;
pub mod tape;
mod tensor;

use thiserror::Error;

pub use init::{normal_from, normal_init, orthogonal_from, orthogonal_init};
pub use scalar::Real;
pub use tape::{Gradients, NodeId, Shape, Tape, Tensor};
pub use tensor::{matvec, outer, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: shape mismatch between {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty tensor")]
    Empty,
    #[error("ragged rows")]
    Ragged,
    #[error("non-finite {what} at index {index}")]
    NonFinite { what: String, index: usize },
    #[error("non-finite gradient at node #{node} ({op}), entry {index}")]
    NonFiniteGradient {
        node: usize,
        op: &'static str,
        index: usize,
    },
    #[error("loss node #{node} is not a scalar")]
    NotScalar { node: usize },
}
