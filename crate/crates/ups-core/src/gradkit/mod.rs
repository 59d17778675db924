//! Dense tensor arithmetic, FFT, and reverse-mode differentiation over the
//! fixed operation set the forward-prediction model needs.
//!
//! Tensors are immutable once created; the tape is rebuilt per forward pass.
//! All math runs in `f64`. Complex tensors are stored interleaved as
//! `(re, im)` pairs with a trailing extent of 2, and only the FFT ops and
//! spectral weights use them.

mod fdcheck;
pub(crate) mod fft;
mod ops;
mod serial;
mod tape;
mod tensor;

pub use fdcheck::{check_gradients, FdReport};
pub use fft::{fft1d, fft2, fft2_raw, ifft1d, ifft2, ifft2_raw};
pub use ops::Op;
pub use serial::{read_weights, write_weights, Dtype};
pub use tape::{GradMap, NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors produced by tensor construction, shape checks, and serialization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {op} got {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: extent {n} is not a power of two")]
    NotPowerOfTwo { op: &'static str, n: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight file format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
