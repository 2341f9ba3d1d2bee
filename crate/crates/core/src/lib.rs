//! Quantum causal models over layered DAGs.

pub mod classical;
pub mod error;
pub mod exec;
pub mod graph;
pub mod instrument;
pub mod process;
pub mod random;
pub mod reversal;
pub mod scheme;
pub mod tensor;
pub mod tomography;

pub use error::{Error, Result};
