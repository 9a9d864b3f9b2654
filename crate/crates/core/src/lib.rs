//! Covariance-intersection fusion under unknown cross-correlations.
//!
//! This crate fuses partial state estimates whose cross-correlations are
//! unknown but bounded, producing a gain `K` and a covariance bound `B`
//! that is consistent (never understates the true error covariance) for
//! every admissible correlation. Three problem flavours are supported:
//!
//! * [`problem::CiProblem`] — classic covariance intersection: each
//!   estimate carries a bound on its own covariance, cross terms unknown.
//! * [`problem::SciProblem`] — split covariance intersection: each error
//!   splits into a bounded unknown-correlation part and an exactly-known
//!   part, optionally correlated across estimates.
//! * [`problem::OciProblem`] — the overlapping form that subsumes both:
//!   the stacked error second moment is `R + C·P·Cᵀ` with `P` unknown but
//!   constrained by blockwise bounds `W_b·P·W_bᵀ ⪯ X_b`.
//!
//! The family-optimal weights are computed by a semidefinite program
//! (built in [`sdp`], solved by an interior-point backend); the gain and
//! bound are then recovered in closed form from the optimal weights
//! ([`fusion`]). The [`oracle`] module provides independent brute-force
//! cross-checks: simplex grid search, the classic two-estimate scalar-ω
//! filters, and a consistency audit over sampled admissible correlations.

// linked for its LAPACK symbols; the SDP backend's semidefinite cone
// support resolves against the system OpenBLAS
use openblas_src as _;

pub mod error;
pub mod fusion;
pub mod kahan;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod sdp;

pub use error::{Error, Result};
pub use fusion::{
    bound_for_fixed_omega, check_feasibility_pd, check_feasibility_zero,
    feasibility_report_pd, feasibility_report_zero, fuse_estimates, solve_ci, solve_oci,
    solve_oci_pd, solve_oci_zero, solve_sci, FeasibilityReport, FusionResult, SplitBounds,
};
pub use kahan::KahanTerms;
pub use linalg::{RectMatrix, SymMatrix};
pub use problem::{
    ci_to_oci, sci_to_oci, validate_oci, BoundSpec, CiProblem, Criterion, OciProblem, SciProblem,
};
pub use sdp::{ConicProgram, SolveOutcome, SolveStatus, SolverOptions};
