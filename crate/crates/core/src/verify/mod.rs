//! Executable checks: the one-step gradient identity linking the penalty
//! loss to BPTT, and a finite-difference audit of every backward path.

mod equivalence;
mod gradcheck;

pub use equivalence::{
    check_equivalence, check_equivalence_with, EquivalenceReport, EquivalenceSetup, TensorDeviation,
    EQUIVALENCE_TOL,
};
pub use gradcheck::{
    central_difference_errors, central_difference_errors_with, gradcheck_all, rel_err, GradcheckReport, PathReport, FD_EPS,
    GRADCHECK_TOL, PENALTY_FD_EPS, PENALTY_TOL, REL_FLOOR,
};
