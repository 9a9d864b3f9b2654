//! Crate-wide error type.

/// Errors produced by problem construction, program building and solving.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A square matrix was required.
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    /// Symmetry check failed beyond tolerance.
    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e} exceeds tolerance)")]
    NotSymmetric { max_asym: f64 },

    /// Operands have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A positive definite matrix was required.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Weight vector is not on the simplex within tolerance.
    #[error("weights are not on the simplex: {0}")]
    OffSimplex(String),

    /// Problem data violates its invariants; one message per violation.
    #[error("invalid problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),

    /// A conic program references variables it does not declare.
    #[error("malformed conic program: {0}")]
    MalformedProgram(String),

    /// The fusion problem fails its rank feasibility condition.
    #[error("infeasible problem: {0}")]
    Infeasible(String),

    /// The SDP backend produced no usable solution.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// The fixed-weight bound is undefined at the requested weights.
    #[error("fixed-weight bound undefined: {0}")]
    SingularBound(String),

    /// Grid step outside (0, 1] or not dividing 1.
    #[error("invalid grid step: {0}")]
    InvalidGridStep(String),
}

pub type Result<T> = std::result::Result<T, Error>;
