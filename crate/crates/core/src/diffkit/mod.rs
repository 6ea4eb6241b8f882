//! Minimal tape-based reverse-mode automatic differentiation over dense,
//! row-major 2-D arrays of `f64`.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! Parameters live in a [`ParamStore`] and are copied into a graph as leaves;
//! after the backward pass their gradients are folded back with
//! [`ParamStore::accumulate`]. This lets independent graphs (one per sample)
//! share a read-only store.
//!
//! Broadcasting is limited to a `1x1` operand in the elementwise binary ops.
//! Row-wise bias addition and per-row scaling are explicit ops.

mod backward;
mod check;
mod graph;
mod params;

pub use check::{grad_check, grad_check_params, grad_check_params_detailed, CoordCheck};
pub use graph::{Graph, Tensor};
pub use params::{Param, ParamId, ParamStore};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("index {index} out of range for {len} rows in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward requires a scalar loss, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("parameter file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DiffError> = std::result::Result<T, E>;
