//! Dense symmetric linear algebra shared by all modules.
//!
//! Covariances and bounds are small dense matrices, so everything here is
//! backed by symmetric eigendecomposition (predicates, pseudoinverse) or
//! SVD (rank). All eigenvalue-based predicates use relative tolerances
//! scaled by `1 + spectral norm` so exact-arithmetic properties stay
//! testable in floating point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Rectangular matrices carry no invariant beyond their shape; plain
/// dense storage is all they need.
pub type RectMatrix = DMatrix<f64>;

/// Default tolerance for the symmetry check in [`SymMatrix::from_matrix`].
pub const DEFAULT_SYM_TOL: f64 = 1e-9;
/// Default tolerance for PSD/PD predicates.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;
/// Default relative tolerance for [`rank`].
pub const DEFAULT_RANK_RTOL: f64 = 1e-10;
/// Default relative cutoff for [`SymMatrix::pinv`].
pub const DEFAULT_PINV_RTOL: f64 = 1e-10;

/// Dense real symmetric matrix; stored form is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Accepts a square matrix that is symmetric within
    /// `DEFAULT_SYM_TOL * (1 + max|A|)` and stores its exactly
    /// symmetrized form.
    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let scale = 1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_asym = 0.0f64;
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if max_asym > DEFAULT_SYM_TOL * scale {
            return Err(Error::NotSymmetric { max_asym });
        }
        Ok(Self::symmetrize(a).expect("square by construction"))
    }

    /// `(A + Aᵀ)/2` for any square matrix.
    pub fn symmetrize(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        Ok(SymMatrix { inner: s })
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix {
            inner: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut ev = SymmetricEigen::new(self.inner.clone()).eigenvalues;
        ev.as_mut_slice()
            .sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `min λ ≥ -tol·(1 + spectral norm)`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let ev = self.eigenvalues();
        let norm = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev[0] >= -tol * (1.0 + norm)
    }

    /// `min λ > tol·(1 + spectral norm)`.
    pub fn is_pd(&self, tol: f64) -> bool {
        let ev = self.eigenvalues();
        let norm = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev[0] > tol * (1.0 + norm)
    }

    /// All entries exactly zero.
    pub fn is_zero(&self) -> bool {
        self.inner.iter().all(|&v| v == 0.0)
    }

    /// Spectral Moore-Penrose pseudoinverse: eigenvalues with
    /// `|λ| ≤ rtol·max|λ|` are dropped, the rest inverted.
    pub fn pinv(&self, rtol: f64) -> SymMatrix {
        let eig = SymmetricEigen::new(self.inner.clone());
        let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cutoff = rtol * max_abs;
        let inv_vals = eig.eigenvalues.map(|l| if l.abs() <= cutoff { 0.0 } else { 1.0 / l });
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
        Self::symmetrize(&m).expect("square by construction")
    }

    /// Inverse through Cholesky; errors unless positive definite.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let chol = self
            .inner
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        Self::symmetrize(&chol.inverse()).map_err(|_| unreachable!())
    }

    /// `self − other ⪰ 0` at tolerance `tol`.
    pub fn psd_dominates(&self, other: &SymMatrix, tol: f64) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "psd_dominates: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.sub(other).is_psd(tol))
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// `ln det` through Cholesky; errors unless positive definite.
    pub fn log_det(&self) -> Result<f64> {
        let chol = self
            .inner
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("log_det of non-PD matrix".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner - &other.inner,
        }
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            inner: &self.inner * factor,
        }
    }

    /// Symmetrized congruence `W·self·Wᵀ`.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<SymMatrix> {
        if w.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "congruence: W has {} columns, matrix has dim {}",
                w.ncols(),
                self.dim()
            )));
        }
        Self::symmetrize(&(w * &self.inner * w.transpose()))
    }
}

/// `(A + Aᵀ)/2`; errors on non-square input.
pub fn symmetrize(a: &DMatrix<f64>) -> Result<SymMatrix> {
    SymMatrix::symmetrize(a)
}

/// Number of singular values above `rtol · σ_max`; the zero matrix has rank 0.
pub fn rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * max).count()
}

/// Largest generalized eigenvalue of `(S, X)` with `X ≻ 0`, i.e. the
/// largest λ with `S v = λ X v`. Used to scale samples onto bound surfaces.
pub fn max_generalized_eigenvalue(s: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    if s.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generalized eigenvalue: {} vs {}",
            s.dim(),
            x.dim()
        )));
    }
    let chol = x
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("generalized eigenvalue needs X ≻ 0".into()))?;
    let l = chol.l();
    // L⁻¹ S L⁻ᵀ via two triangular solves
    let tmp = l
        .solve_lower_triangular(s.matrix())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&tmp.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let sym = SymMatrix::symmetrize(&reduced)?;
    let ev = sym.eigenvalues();
    Ok(ev[ev.len() - 1])
}
