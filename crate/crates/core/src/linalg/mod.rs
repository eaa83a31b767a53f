//! Linear algebra kernels: sparse storage, banded M-matrix factorization,
//! dense and iterative eigen-solvers.

pub mod banded;
pub mod dense;
pub mod iterative;
pub mod sparse;

pub use banded::MMatrixLu;
pub use sparse::CsrMatrix;
