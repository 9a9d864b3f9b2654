//! Problem instances for OCI/CI/SCI fusion with full precondition validation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, RectMatrix, SymMatrix, DEFAULT_PSD_TOL, DEFAULT_RANK_RTOL};

/// Optimality criterion applied to the fused covariance bound.
///
/// Both satisfy the monotonicity the theory requires; trace is the
/// default since neither is superior in general.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    #[default]
    Trace,
    LogDet,
}

impl Criterion {
    /// `tr(B)` or `ln det(B)`; log-det requires a PD argument.
    pub fn evaluate(&self, b: &SymMatrix) -> Result<f64> {
        match self {
            Criterion::Trace => Ok(b.trace()),
            Criterion::LogDet => b.log_det(),
        }
    }
}

/// One blockwise bound `W·P·Wᵀ ⪯ X` on the unknown correlation matrix.
#[derive(Debug, Clone)]
pub struct BoundSpec {
    /// Selector/map, `o_b × m` with full row rank.
    pub w: RectMatrix,
    /// Positive definite bound, `o_b × o_b`.
    pub x: SymMatrix,
}

impl BoundSpec {
    pub fn new(w: RectMatrix, x: SymMatrix) -> Result<Self> {
        let spec = BoundSpec { w, x };
        let violations = spec.validate("bound");
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidProblem(violations))
        }
    }

    fn validate(&self, label: &str) -> Vec<String> {
        let mut v = Vec::new();
        if self.x.dim() != self.w.nrows() {
            v.push(format!(
                "{label}: X is {}x{} but W has {} rows",
                self.x.dim(),
                self.x.dim(),
                self.w.nrows()
            ));
        }
        if !self.x.is_pd(DEFAULT_PSD_TOL) {
            v.push(format!("{label}: X must be positive definite"));
        }
        if linalg::rank(&self.w, DEFAULT_RANK_RTOL) != self.w.nrows() {
            v.push(format!("{label}: W must have full row rank"));
        }
        v
    }
}

/// Which of the two solvable noise regimes `R` falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRegime {
    PositiveDefinite,
    Zero,
    /// PSD-but-singular nonzero (or indefinite): no closed-form solution
    /// exists, the instance is rejected.
    Unsupported,
}

/// Full OCI instance: stacked map `H`, known noise part `R`, correlation
/// map `C`, blockwise bounds on the unknown `P`, and the criterion.
#[derive(Debug, Clone)]
pub struct OciProblem {
    /// Stacked observation map, `o × n`.
    pub h: RectMatrix,
    /// Known second-moment part, `o × o`; must be PD or exactly zero.
    pub r: SymMatrix,
    /// Map applying the unknown correlation `P`, `o × m`.
    pub c: RectMatrix,
    /// Nonempty list of bounds `W_b·P·W_bᵀ ⪯ X_b`.
    pub bounds: Vec<BoundSpec>,
    pub criterion: Criterion,
}

impl OciProblem {
    pub fn new(
        h: RectMatrix,
        r: SymMatrix,
        c: RectMatrix,
        bounds: Vec<BoundSpec>,
        criterion: Criterion,
    ) -> Result<Self> {
        let p = OciProblem {
            h,
            r,
            c,
            bounds,
            criterion,
        };
        let violations = p.validate();
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidProblem(violations))
        }
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    /// Stacked observation dimension `o`.
    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Dimension `m` of the unknown correlation matrix.
    pub fn correlation_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn regime(&self) -> NoiseRegime {
        if self.r.is_zero() {
            NoiseRegime::Zero
        } else if self.r.is_pd(DEFAULT_PSD_TOL) {
            NoiseRegime::PositiveDefinite
        } else {
            NoiseRegime::Unsupported
        }
    }

    /// Every violated invariant, human-readable; empty means well-formed.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let (o, n) = (self.h.nrows(), self.h.ncols());
        let m = self.c.ncols();
        if o == 0 || n == 0 {
            v.push("H must be a nonempty o x n matrix".into());
        }
        if self.c.nrows() != o {
            v.push(format!("C has {} rows but H has {o} rows", self.c.nrows()));
        }
        if self.r.dim() != o {
            v.push(format!("R has dim {} but H has {o} rows", self.r.dim()));
        }
        if self.bounds.is_empty() {
            v.push("at least one bound on P is required".into());
        }
        for (b, bound) in self.bounds.iter().enumerate() {
            if bound.w.ncols() != m {
                v.push(format!(
                    "bound {b}: W has {} columns but C implies m = {m}",
                    bound.w.ncols()
                ));
            }
            v.extend(bound.validate(&format!("bound {b}")));
        }
        match self.regime() {
            NoiseRegime::Unsupported => {
                v.push("R must be PD or exactly zero".into());
            }
            NoiseRegime::Zero => {
                if o != m || linalg::rank(&self.c, DEFAULT_RANK_RTOL) != m {
                    v.push(format!(
                        "R=0 requires square invertible C (got o={o}, m={m}); \
                         fold C into the bounds before posing the problem"
                    ));
                }
            }
            NoiseRegime::PositiveDefinite => {}
        }
        v
    }

    /// Vertical stack `[W_1; …; W_M]`.
    pub fn stacked_w(&self) -> RectMatrix {
        let m = self.correlation_dim();
        let total: usize = self.bounds.iter().map(|b| b.w.nrows()).sum();
        let mut w = DMatrix::zeros(total, m);
        let mut row = 0;
        for bound in &self.bounds {
            w.view_mut((row, 0), (bound.w.nrows(), m)).copy_from(&bound.w);
            row += bound.w.nrows();
        }
        w
    }
}

/// One partial estimate for the CI problem.
#[derive(Debug, Clone)]
pub struct CiEstimate {
    /// Observation map, `o_i × n`.
    pub h: RectMatrix,
    /// PD bound on the estimate's own covariance, `o_i × o_i`.
    pub x: SymMatrix,
}

/// Classic covariance intersection: per-estimate covariance bounds,
/// cross-correlations unknown.
#[derive(Debug, Clone)]
pub struct CiProblem {
    pub estimates: Vec<CiEstimate>,
    pub criterion: Criterion,
}

impl CiProblem {
    pub fn new(estimates: Vec<CiEstimate>, criterion: Criterion) -> Result<Self> {
        let p = CiProblem {
            estimates,
            criterion,
        };
        let violations = p.validate();
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidProblem(violations))
        }
    }

    pub fn state_dim(&self) -> usize {
        self.estimates.first().map_or(0, |e| e.h.ncols())
    }

    pub fn obs_dim(&self) -> usize {
        self.estimates.iter().map(|e| e.h.nrows()).sum()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.estimates.is_empty() {
            v.push("at least one estimate is required".into());
            return v;
        }
        let n = self.state_dim();
        for (i, e) in self.estimates.iter().enumerate() {
            if e.h.ncols() != n {
                v.push(format!(
                    "estimate {i}: H has {} columns, expected {n}",
                    e.h.ncols()
                ));
            }
            if e.h.nrows() == 0 {
                v.push(format!("estimate {i}: H has no rows"));
            }
            if e.x.dim() != e.h.nrows() {
                v.push(format!(
                    "estimate {i}: X has dim {} but H has {} rows",
                    e.x.dim(),
                    e.h.nrows()
                ));
            }
            if !e.x.is_pd(DEFAULT_PSD_TOL) {
                v.push(format!("estimate {i}: X must be positive definite"));
            }
        }
        v
    }
}

/// One partial estimate for the SCI problem.
#[derive(Debug, Clone)]
pub struct SciEstimate {
    /// Observation map, `o_i × n`.
    pub h: RectMatrix,
    /// PD bound on the unknown-correlation error component, `o_i × o_i`.
    pub x1: SymMatrix,
}

/// Split covariance intersection: each error splits into a bounded
/// unknown-correlation part and an exactly known part `X⁽²⁾` (dense
/// `X⁽²⁾` is the generalized problem; block diagonal is the standard one).
#[derive(Debug, Clone)]
pub struct SciProblem {
    pub estimates: Vec<SciEstimate>,
    /// Known covariance of the stacked second components, `o × o` PD.
    pub x2: SymMatrix,
    pub criterion: Criterion,
}

impl SciProblem {
    pub fn new(estimates: Vec<SciEstimate>, x2: SymMatrix, criterion: Criterion) -> Result<Self> {
        let p = SciProblem {
            estimates,
            x2,
            criterion,
        };
        let violations = p.validate();
        if violations.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidProblem(violations))
        }
    }

    pub fn state_dim(&self) -> usize {
        self.estimates.first().map_or(0, |e| e.h.ncols())
    }

    pub fn obs_dim(&self) -> usize {
        self.estimates.iter().map(|e| e.h.nrows()).sum()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.estimates.is_empty() {
            v.push("at least one estimate is required".into());
            return v;
        }
        let n = self.state_dim();
        for (i, e) in self.estimates.iter().enumerate() {
            if e.h.ncols() != n {
                v.push(format!(
                    "estimate {i}: H has {} columns, expected {n}",
                    e.h.ncols()
                ));
            }
            if e.x1.dim() != e.h.nrows() {
                v.push(format!(
                    "estimate {i}: X1 has dim {} but H has {} rows",
                    e.x1.dim(),
                    e.h.nrows()
                ));
            }
            if !e.x1.is_pd(DEFAULT_PSD_TOL) {
                v.push(format!("estimate {i}: X1 must be positive definite"));
            }
        }
        let o = self.obs_dim();
        if self.x2.dim() != o {
            v.push(format!(
                "X2 has dim {} but stacked estimates have dim {o}",
                self.x2.dim()
            ));
        }
        if !self.x2.is_pd(DEFAULT_PSD_TOL) {
            v.push("X2 must be positive definite".into());
        }
        v
    }
}

/// Block selectors `W_i = [0 … I_{o_i} … 0]` for block sizes `dims`;
/// stacking them vertically reproduces the identity.
pub fn block_selectors(dims: &[usize]) -> Vec<RectMatrix> {
    let total: usize = dims.iter().sum();
    let mut selectors = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &d in dims {
        let mut w = DMatrix::zeros(d, total);
        for k in 0..d {
            w[(k, offset + k)] = 1.0;
        }
        selectors.push(w);
        offset += d;
    }
    selectors
}

/// Every violated invariant of an OCI instance (empty = valid).
pub fn validate_oci(p: &OciProblem) -> Vec<String> {
    p.validate()
}

/// Casts CI as OCI: stacked `H`, `R = 0`, `C = I`, one block-selector
/// bound per estimate.
pub fn ci_to_oci(p: &CiProblem) -> Result<OciProblem> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations));
    }
    let o = p.obs_dim();
    let n = p.state_dim();
    let dims: Vec<usize> = p.estimates.iter().map(|e| e.h.nrows()).collect();
    let selectors = block_selectors(&dims);

    let mut h = DMatrix::zeros(o, n);
    let mut row = 0;
    for e in &p.estimates {
        h.view_mut((row, 0), (e.h.nrows(), n)).copy_from(&e.h);
        row += e.h.nrows();
    }
    let bounds = selectors
        .into_iter()
        .zip(&p.estimates)
        .map(|(w, e)| BoundSpec { w, x: e.x.clone() })
        .collect();
    Ok(OciProblem {
        h,
        r: SymMatrix::zeros(o),
        c: DMatrix::identity(o, o),
        bounds,
        criterion: p.criterion,
    })
}

/// Casts SCI as OCI: same block selectors, `R = X⁽²⁾`, `C = I`.
pub fn sci_to_oci(p: &SciProblem) -> Result<OciProblem> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations));
    }
    let o = p.obs_dim();
    let n = p.state_dim();
    let dims: Vec<usize> = p.estimates.iter().map(|e| e.h.nrows()).collect();
    let selectors = block_selectors(&dims);

    let mut h = DMatrix::zeros(o, n);
    let mut row = 0;
    for e in &p.estimates {
        h.view_mut((row, 0), (e.h.nrows(), n)).copy_from(&e.h);
        row += e.h.nrows();
    }
    let bounds = selectors
        .into_iter()
        .zip(&p.estimates)
        .map(|(w, e)| BoundSpec { w, x: e.x1.clone() })
        .collect();
    Ok(OciProblem {
        h,
        r: p.x2.clone(),
        c: DMatrix::identity(o, o),
        bounds,
        criterion: p.criterion,
    })
}
