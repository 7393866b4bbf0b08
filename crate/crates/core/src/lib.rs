//! Compressed time stepping of discretized PDEs with matrix product states
//! (MPS) and matrix product operators (MPO).
//!
//! Grid states are reshaped into order-n tensors over base-d digits of the
//! grid index, compressed as MPS, advanced by finite-difference MPOs and kept
//! at bounded rank by canonicalization and SVD truncation after every step.

pub mod chain;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mpo;
pub mod mps;
pub mod reference;
pub mod stepper;
pub mod tensorization;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
pub use mpo::Mpo;
pub use mps::{Mps, TruncationParams};
pub use tensorization::{Boundary, DenseTensor, GridSpec, Layout, LayoutVariant};
