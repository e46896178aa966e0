//! Dense linear algebra: matrices, Jacobi SVD / eigensolvers and assignment.

mod assignment;
mod decomp;
mod matrix;

pub use assignment::{bottleneck_signed_permutation_distance, max_weight_assignment, signed_permutation_distance};
pub use decomp::{continuous_svd_step, svd, sym_eig, SvdTriple, DEFAULT_GAP_TOL};
pub use matrix::{add_scaled, add_vec, dot, norm, sub_vec, Matrix};
