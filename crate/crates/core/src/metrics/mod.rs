//! Constraint scores for decoders and disentanglement metrics.

mod constraints;
mod mi;

pub use constraints::{
    c1_score, c2_score, constraint_report, oa_precision, offdiag_score, C2Score, ConstraintReport, OaPrecision,
    PointScores, Probe, DEFAULT_FD_STEP,
};
pub use mi::{aas, mig, mutual_info_matrix, spearman, MiMatrix, DEFAULT_BINS};
