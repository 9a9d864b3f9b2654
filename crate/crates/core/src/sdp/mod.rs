//! Solver-agnostic construction of the fusion semidefinite programs and
//! the contract a conic backend must satisfy.
//!
//! A [`ConicProgram`] is a plain description: scalar variables, symmetric
//! matrix variables, affine matrix expressions required PSD, linear
//! equalities, nonnegativity flags, and a linear or log-det objective.
//! [`build_oci_pd_program`] and [`build_oci_zero_program`] emit the two
//! LMI forms of the fusion problem; [`solve`] hands the description to
//! the default interior-point backend.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kahan::KahanTerms;
use crate::linalg::{self, SymMatrix, DEFAULT_RANK_RTOL};
use crate::problem::{Criterion, NoiseRegime, OciProblem};

mod backend;

pub use backend::ClarabelSolver;

pub type ScalarVarId = usize;
pub type MatrixVarId = usize;

/// Named scalar decision variable (the simplex weights live here).
#[derive(Debug, Clone)]
pub struct ScalarVar {
    pub name: String,
}

/// Named symmetric matrix decision variable.
#[derive(Debug, Clone)]
pub struct MatrixVar {
    pub name: String,
    pub dim: usize,
}

/// Occurrence of a matrix variable inside an affine expression: the
/// variable is embedded as the principal block starting at `offset`
/// (rows and columns), scaled by `sign`.
#[derive(Debug, Clone)]
pub struct MatrixTerm {
    pub var: MatrixVarId,
    pub offset: usize,
    pub sign: f64,
}

/// Affine symmetric matrix expression
/// `constant + Σ scalar_i·coeff_i + Σ sign_j·embed(matrix_j)`.
#[derive(Debug, Clone)]
pub struct MatrixExpr {
    pub dim: usize,
    /// Symmetric constant part (may carry off-diagonal blocks).
    pub constant: DMatrix<f64>,
    /// Symmetric coefficient matrix per participating scalar variable.
    pub scalar_terms: Vec<(ScalarVarId, DMatrix<f64>)>,
    pub matrix_terms: Vec<MatrixTerm>,
}

impl MatrixExpr {
    pub fn constant_only(constant: DMatrix<f64>) -> Self {
        let dim = constant.nrows();
        MatrixExpr {
            dim,
            constant,
            scalar_terms: Vec::new(),
            matrix_terms: Vec::new(),
        }
    }

    /// Value of the expression at the given assignments.
    pub fn evaluate(&self, scalars: &[f64], matrices: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut acc = self.constant.clone();
        for (id, coeff) in &self.scalar_terms {
            acc += coeff * scalars[*id];
        }
        for term in &self.matrix_terms {
            let v = &matrices[term.var];
            let d = v.nrows();
            let mut block = acc.view_mut((term.offset, term.offset), (d, d));
            block += v * term.sign;
        }
        acc
    }

    fn validate(&self, scalar_count: usize, matrix_vars: &[MatrixVar]) -> Result<()> {
        if self.constant.nrows() != self.dim || self.constant.ncols() != self.dim {
            return Err(Error::MalformedProgram(format!(
                "constant block is {}x{}, expression dim is {}",
                self.constant.nrows(),
                self.constant.ncols(),
                self.dim
            )));
        }
        let asym = (&self.constant - self.constant.transpose()).amax();
        if asym > 1e-12 * (1.0 + self.constant.amax()) {
            return Err(Error::MalformedProgram(
                "constant block is not symmetric".into(),
            ));
        }
        for (id, coeff) in &self.scalar_terms {
            if *id >= scalar_count {
                return Err(Error::MalformedProgram(format!(
                    "scalar variable {id} out of range"
                )));
            }
            if coeff.nrows() != self.dim || coeff.ncols() != self.dim {
                return Err(Error::MalformedProgram(format!(
                    "coefficient of scalar {id} has wrong shape"
                )));
            }
        }
        for term in &self.matrix_terms {
            let var = matrix_vars.get(term.var).ok_or_else(|| {
                Error::MalformedProgram(format!("matrix variable {} out of range", term.var))
            })?;
            if term.offset + var.dim > self.dim {
                return Err(Error::MalformedProgram(format!(
                    "matrix variable {} does not fit at offset {}",
                    var.name, term.offset
                )));
            }
        }
        Ok(())
    }
}

/// Affine equality `Σ coeff_i·x_i = rhs` over scalar variables.
#[derive(Debug, Clone)]
pub struct LinearEq {
    pub coeffs: Vec<(ScalarVarId, f64)>,
    pub rhs: f64,
}

/// Objective: minimize the trace of a matrix variable, or minimize
/// `-ln det` of an affine matrix expression (the determinant criterion
/// lowered onto the inner LMI block rather than the bound itself).
#[derive(Debug, Clone)]
pub enum Objective {
    MinTrace(MatrixVarId),
    MinNegLogDet(MatrixExpr),
}

/// Solver-agnostic SDP description.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub scalar_vars: Vec<ScalarVar>,
    pub matrix_vars: Vec<MatrixVar>,
    pub psd_blocks: Vec<MatrixExpr>,
    pub linear_eqs: Vec<LinearEq>,
    pub nonneg_vars: Vec<ScalarVarId>,
    pub objective: Objective,
}

impl ConicProgram {
    /// Structural well-formedness: every referenced variable exists,
    /// every block expression fits and is symmetric by construction.
    pub fn validate(&self) -> Result<()> {
        let s = self.scalar_vars.len();
        for block in &self.psd_blocks {
            block.validate(s, &self.matrix_vars)?;
        }
        for eq in &self.linear_eqs {
            for (id, _) in &eq.coeffs {
                if *id >= s {
                    return Err(Error::MalformedProgram(format!(
                        "equality references scalar {id} out of range"
                    )));
                }
            }
        }
        for id in &self.nonneg_vars {
            if *id >= s {
                return Err(Error::MalformedProgram(format!(
                    "nonnegativity flag on scalar {id} out of range"
                )));
            }
        }
        match &self.objective {
            Objective::MinTrace(v) => {
                if *v >= self.matrix_vars.len() {
                    return Err(Error::MalformedProgram(
                        "trace objective references missing matrix variable".into(),
                    ));
                }
            }
            Objective::MinNegLogDet(expr) => expr.validate(s, &self.matrix_vars)?,
        }
        Ok(())
    }
}

/// Backend knobs, exposed through the CLI.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Assignments satisfy every cone to `feas_tol` and the objective is
    /// within `gap_tol` of optimal per the backend certificate.
    Optimal,
    /// The backend produced an infeasibility certificate.
    Infeasible,
    /// No certificate either way (iteration limit, stalled progress).
    NumericalTrouble,
}

/// Assignment and certificate data returned by a backend.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub scalar_values: Vec<f64>,
    /// Symmetrized values of the matrix variables, in declaration order.
    pub matrix_values: Vec<SymMatrix>,
    pub objective: f64,
    /// Worst PSD-cone violation over the declared blocks (0 if none).
    pub psd_residual: f64,
    /// Worst absolute equality violation.
    pub eq_residual: f64,
    pub iterations: usize,
}

/// Contract for a conic backend: on `Optimal` the assignments must
/// satisfy all PSD blocks to `opts.feas_tol` and the reported objective
/// must be within `opts.gap_tol` of optimal; `Infeasible` requires a
/// certificate; anything else is `NumericalTrouble`.
pub trait ConicSolver {
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<SolveOutcome>;
}

/// Solve with the default interior-point backend.
pub fn solve(prog: &ConicProgram, opts: &SolverOptions) -> Result<SolveOutcome> {
    ClarabelSolver.solve(prog, opts)
}

fn omega_vars(count: usize) -> Vec<ScalarVar> {
    (1..=count)
        .map(|b| ScalarVar {
            name: format!("omega_{b}"),
        })
        .collect()
}

fn simplex_constraint(count: usize) -> LinearEq {
    LinearEq {
        coeffs: (0..count).map(|i| (i, 1.0)).collect(),
        rhs: 1.0,
    }
}

/// Program for the PD-noise regime:
///
/// ```text
/// min J(B)  s.t.  [B  I; I  HᵀR⁻¹H − U] ⪰ 0
///                 [U  HᵀR⁻¹C; (HᵀR⁻¹C)ᵀ  Σω_b·Y_b + CᵀR⁻¹C] ⪰ 0
///                 ω ∈ Δ
/// ```
pub fn build_oci_pd_program(p: &OciProblem, k: &KahanTerms) -> Result<ConicProgram> {
    if p.regime() != NoiseRegime::PositiveDefinite {
        return Err(Error::NotPositiveDefinite(
            "this program form requires R ≻ 0".into(),
        ));
    }
    let n = p.state_dim();
    let m = p.correlation_dim();
    let big_m = k.len();
    let r_inv = p.r.inverse_pd()?;
    let hrh = SymMatrix::symmetrize(&(p.h.transpose() * r_inv.matrix() * &p.h))?;
    let hrc = p.h.transpose() * r_inv.matrix() * &p.c; // n×m
    let crc = SymMatrix::symmetrize(&(p.c.transpose() * r_inv.matrix() * &p.c))?;

    let scalar_vars = omega_vars(big_m);
    let matrix_vars = vec![
        MatrixVar {
            name: "B".into(),
            dim: n,
        },
        MatrixVar {
            name: "U".into(),
            dim: n,
        },
    ];
    let (b_var, u_var) = (0, 1);

    // block 1: [B, I; I, HᵀR⁻¹H − U]
    let mut c1 = DMatrix::zeros(2 * n, 2 * n);
    c1.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    c1.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    c1.view_mut((n, n), (n, n)).copy_from(hrh.matrix());
    let block1 = MatrixExpr {
        dim: 2 * n,
        constant: c1,
        scalar_terms: Vec::new(),
        matrix_terms: vec![
            MatrixTerm {
                var: b_var,
                offset: 0,
                sign: 1.0,
            },
            MatrixTerm {
                var: u_var,
                offset: n,
                sign: -1.0,
            },
        ],
    };

    // block 2: [U, HᵀR⁻¹C; ·ᵀ, Σω_b·Y_b + CᵀR⁻¹C]
    let d2 = n + m;
    let mut c2 = DMatrix::zeros(d2, d2);
    c2.view_mut((0, n), (n, m)).copy_from(&hrc);
    c2.view_mut((n, 0), (m, n)).copy_from(&hrc.transpose());
    c2.view_mut((n, n), (m, m)).copy_from(crc.matrix());
    let scalar_terms = k
        .terms()
        .iter()
        .enumerate()
        .map(|(b, y)| {
            let mut coeff = DMatrix::zeros(d2, d2);
            coeff.view_mut((n, n), (m, m)).copy_from(y.matrix());
            (b, coeff)
        })
        .collect();
    let block2 = MatrixExpr {
        dim: d2,
        constant: c2,
        scalar_terms,
        matrix_terms: vec![MatrixTerm {
            var: u_var,
            offset: 0,
            sign: 1.0,
        }],
    };

    let objective = match p.criterion {
        Criterion::Trace => Objective::MinTrace(b_var),
        Criterion::LogDet => {
            // -logdet(HᵀR⁻¹H − U), never logdet of B itself
            Objective::MinNegLogDet(MatrixExpr {
                dim: n,
                constant: hrh.matrix().clone(),
                scalar_terms: Vec::new(),
                matrix_terms: vec![MatrixTerm {
                    var: u_var,
                    offset: 0,
                    sign: -1.0,
                }],
            })
        }
    };

    let prog = ConicProgram {
        scalar_vars,
        matrix_vars,
        psd_blocks: vec![block1, block2],
        linear_eqs: vec![simplex_constraint(big_m)],
        nonneg_vars: (0..big_m).collect(),
        objective,
    };
    prog.validate()?;
    Ok(prog)
}

/// Program for the zero-noise regime:
///
/// ```text
/// min J(B)  s.t.  [B  I; I  HᵀC⁻ᵀ(Σω_b·Y_b)C⁻¹H] ⪰ 0,  ω ∈ Δ
/// ```
pub fn build_oci_zero_program(p: &OciProblem, k: &KahanTerms) -> Result<ConicProgram> {
    let o = p.obs_dim();
    let m = p.correlation_dim();
    if o != m || linalg::rank(&p.c, DEFAULT_RANK_RTOL) != m {
        return Err(Error::InvalidProblem(vec![format!(
            "R=0 requires square invertible C (got o={o}, m={m})"
        )]));
    }
    let n = p.state_dim();
    let big_m = k.len();
    let c_inv = p
        .c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidProblem(vec!["C is numerically singular".into()]))?;
    let t = &c_inv * &p.h; // C⁻¹H, m×n

    let scalar_vars = omega_vars(big_m);
    let matrix_vars = vec![MatrixVar {
        name: "B".into(),
        dim: n,
    }];
    let b_var = 0;

    let mut c1 = DMatrix::zeros(2 * n, 2 * n);
    c1.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    c1.view_mut((n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    // inner coefficients: Tᵀ·Y_b·T per weight
    let inner_coeffs: Vec<DMatrix<f64>> = k
        .terms()
        .iter()
        .map(|y| {
            let q = t.transpose() * y.matrix() * &t;
            SymMatrix::symmetrize(&q).expect("square").into_inner()
        })
        .collect();
    let scalar_terms = inner_coeffs
        .iter()
        .enumerate()
        .map(|(b, q)| {
            let mut coeff = DMatrix::zeros(2 * n, 2 * n);
            coeff.view_mut((n, n), (n, n)).copy_from(q);
            (b, coeff)
        })
        .collect();
    let block1 = MatrixExpr {
        dim: 2 * n,
        constant: c1,
        scalar_terms,
        matrix_terms: vec![MatrixTerm {
            var: b_var,
            offset: 0,
            sign: 1.0,
        }],
    };

    let objective = match p.criterion {
        Criterion::Trace => Objective::MinTrace(b_var),
        Criterion::LogDet => Objective::MinNegLogDet(MatrixExpr {
            dim: n,
            constant: DMatrix::zeros(n, n),
            scalar_terms: inner_coeffs.into_iter().enumerate().collect(),
            matrix_terms: Vec::new(),
        }),
    };

    let prog = ConicProgram {
        scalar_vars,
        matrix_vars,
        psd_blocks: vec![block1],
        linear_eqs: vec![simplex_constraint(big_m)],
        nonneg_vars: (0..big_m).collect(),
        objective,
    };
    prog.validate()?;
    Ok(prog)
}
