//! Small dense matrices and sparse linear solvers.

mod dense;
mod sparse;

pub use dense::{Cholesky, Mat};
pub use sparse::{gmres, norm2, solve, BandedLu, CsrMatrix, Ilu0, LinearMethod, LinearSolveInfo};
