//! The simplex-parameterized family of circumscribing ellipsoids that
//! outer-bounds every admissible correlation matrix.
//!
//! Each bound `W_b·P·W_bᵀ ⪯ X_b` contributes a term
//! `Y_b = W_bᵀ·X_b⁻¹·W_b`; for any simplex weight vector ω the family
//! member is `{P ≻ 0 : P⁻¹ ⪰ Σ ω_b·Y_b}` and contains the whole
//! admissible set. The inclusion is what makes the SDP relaxation sound,
//! and it is exercised directly by the property tests here.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{max_generalized_eigenvalue, SymMatrix, DEFAULT_PSD_TOL};
use crate::problem::BoundSpec;

/// Tolerance for accepting a weight vector as lying on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// The family terms `Y_b`, all `m × m` PSD.
#[derive(Debug, Clone)]
pub struct KahanTerms {
    terms: Vec<SymMatrix>,
    dim: usize,
}

impl KahanTerms {
    pub fn terms(&self) -> &[SymMatrix] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `Y_b = W_bᵀ·X_b⁻¹·W_b` for every bound; errors if some `X_b` is not PD.
pub fn build_kahan_terms(bounds: &[BoundSpec], m: usize) -> Result<KahanTerms> {
    let mut terms = Vec::with_capacity(bounds.len());
    for (b, bound) in bounds.iter().enumerate() {
        if bound.w.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "bound {b}: W has {} columns, expected {m}",
                bound.w.ncols()
            )));
        }
        let x_inv = bound
            .x
            .inverse_pd()
            .map_err(|_| Error::NotPositiveDefinite(format!("bound {b}: X must be PD")))?;
        terms.push(x_inv.congruence(&bound.w.transpose())?);
    }
    Ok(KahanTerms { terms, dim: m })
}

fn check_simplex(omega: &[f64], expected_len: usize) -> Result<()> {
    if omega.len() != expected_len {
        return Err(Error::OffSimplex(format!(
            "expected {expected_len} weights, got {}",
            omega.len()
        )));
    }
    if let Some(w) = omega.iter().find(|w| **w < -SIMPLEX_TOL || !w.is_finite()) {
        return Err(Error::OffSimplex(format!("negative or non-finite weight {w}")));
    }
    let sum: f64 = omega.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::OffSimplex(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// `Σ_b ω_b·Y_b` for simplex weights ω.
pub fn combined_term(k: &KahanTerms, omega: &[f64]) -> Result<SymMatrix> {
    check_simplex(omega, k.len())?;
    let mut acc = DMatrix::zeros(k.dim, k.dim);
    for (w, y) in omega.iter().zip(&k.terms) {
        acc += y.matrix() * *w;
    }
    SymMatrix::symmetrize(&acc)
}

/// `P ≻ 0` and `W_b·P·W_bᵀ ⪯ X_b` (with slack `tol`) for every bound.
pub fn is_admissible(p: &SymMatrix, bounds: &[BoundSpec], tol: f64) -> bool {
    if !p.is_pd(DEFAULT_PSD_TOL) {
        return false;
    }
    bounds.iter().all(|bound| {
        p.congruence(&bound.w)
            .and_then(|wpw| bound.x.psd_dominates(&wpw, tol))
            .unwrap_or(false)
    })
}

/// `P⁻¹ ⪰ Σ ω_b·Y_b` with slack `tol`; errors if `P` is not PD.
pub fn in_kahan_family(p: &SymMatrix, k: &KahanTerms, omega: &[f64], tol: f64) -> Result<bool> {
    if p.dim() != k.dim() {
        return Err(Error::DimensionMismatch(format!(
            "P has dim {}, family has dim {}",
            p.dim(),
            k.dim()
        )));
    }
    let p_inv = p
        .inverse_pd()
        .map_err(|_| Error::NotPositiveDefinite("family membership needs P ≻ 0".into()))?;
    let combined = combined_term(k, omega)?;
    Ok(p_inv.sub(&combined).is_psd(tol))
}

/// Deterministic sampler for the admissible set: Wishart-style random PD
/// matrices scaled into the feasible region, alternating strict-interior
/// points with points whose binding constraint sits within 1% of some
/// bound surface. Worst-case-like samples are what make the downstream
/// consistency audits meaningful.
pub fn sample_admissible(
    bounds: &[BoundSpec],
    m: usize,
    seed: u64,
    count: usize,
) -> Vec<SymMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let g = {
            let a = DMatrix::from_fn(m, m, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            });
            let gram = &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.1;
            SymMatrix::symmetrize(&gram).expect("square by construction")
        };
        // largest feasible scale for g: 1 / max_b λmax(W_b g W_bᵀ, X_b)
        let mut lam_max = 0.0f64;
        let mut ok = true;
        for bound in bounds {
            match g
                .congruence(&bound.w)
                .and_then(|wgw| max_generalized_eigenvalue(&wgw, &bound.x))
            {
                Ok(lam) => lam_max = lam_max.max(lam),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || lam_max <= 0.0 {
            continue;
        }
        let fill = if samples.len() % 2 == 0 {
            rng.random_range(0.2..0.9)
        } else {
            rng.random_range(0.99..0.999)
        };
        let p = g.scale(fill / lam_max);
        if is_admissible(&p, bounds, DEFAULT_PSD_TOL) {
            samples.push(p);
        }
    }
    samples
}
