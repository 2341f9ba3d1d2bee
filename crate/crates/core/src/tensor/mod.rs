//! Dense complex linear algebra with named tensor factors.

mod layout;
mod linalg;
mod matrix;

pub use layout::{node_label, pair_leading, partial_trace, permute_factors, Factor, Role, SpaceLayout};
pub use linalg::{
    frame_coefficients, frame_solve, hermitian_eigenvalues, is_psd, min_eigenvalue, span_rank, FrameSolution,
    DEFAULT_TOL, SVD_CUTOFF,
};
pub use matrix::{c, kron, kron_all, ComplexMatrix, ONE, ZERO};
