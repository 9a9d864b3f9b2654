//! Independent brute-force verification: simplex grid search, the classic
//! two-estimate scalar-ω filters, and consistency audits over sampled
//! admissible correlations. These are the ground truth the solvers are
//! tested against, so they deliberately avoid the solver code paths.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fusion::{fixed_omega_with_terms, FusionResult};
use crate::kahan::sample_admissible;
use crate::linalg::{RectMatrix, SymMatrix};
use crate::problem::{Criterion, OciProblem};

/// Worst acceptable consistency margin (smallest eigenvalue of
/// `B − K·E[eeᵀ]·Kᵀ` over sampled admissible correlations).
pub const CONSISTENCY_MARGIN: f64 = -1e-6;
/// Default number of sampled correlations per audit.
pub const DEFAULT_AUDIT_SAMPLES: usize = 200;
/// Default audit seed, fixed for reproducibility.
pub const DEFAULT_AUDIT_SEED: u64 = 42;
/// Largest weight count the grid search will enumerate.
pub const MAX_GRID_WEIGHTS: usize = 4;

/// Grid steps sized for desk-scale verification; `None` above
/// [`MAX_GRID_WEIGHTS`].
pub fn default_grid_step(m: usize) -> Option<f64> {
    match m {
        0 => None,
        1 | 2 => Some(1e-3),
        3 => Some(0.02),
        4 => Some(0.05),
        _ => None,
    }
}

/// All lattice points of the simplex with the given spacing. The step
/// must divide 1 within 1e-12; the last coordinate absorbs rounding so
/// every point sums to exactly 1.
pub fn grid_simplex(m: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::InvalidGridStep("simplex dimension is zero".into()));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidGridStep(format!(
            "step {step} outside (0, 1]"
        )));
    }
    let k = (1.0 / step).round();
    if (k * step - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidGridStep(format!(
            "step {step} does not divide 1"
        )));
    }
    let k = k as usize;
    let mut points = Vec::new();
    let mut counts = vec![0usize; m];
    fill_compositions(k, 0, &mut counts, &mut points);
    Ok(points)
}

fn fill_compositions(remaining: usize, pos: usize, counts: &mut [usize], out: &mut Vec<Vec<f64>>) {
    let m = counts.len();
    if pos == m - 1 {
        counts[pos] = remaining;
        let k = counts.iter().sum::<usize>() as f64;
        let mut point: Vec<f64> = counts.iter().map(|&c| c as f64 / k).collect();
        let partial: f64 = point[..m - 1].iter().sum();
        point[m - 1] = 1.0 - partial;
        out.push(point);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill_compositions(remaining - c, pos + 1, counts, out);
    }
}

/// Result of an exhaustive fixed-weight search.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub bound: SymMatrix,
    /// Grid points evaluated successfully.
    pub evaluated: usize,
    /// Grid points skipped because the fixed-weight bound is undefined
    /// there (boundary weights can make the information matrix singular).
    pub skipped: usize,
}

/// Brute-force minimum of the criterion over the weight grid, using the
/// closed-form fixed-weight bound as the inner evaluator.
pub fn oracle_solve(p: &OciProblem, step: f64) -> Result<OracleSolution> {
    let m = p.bounds.len();
    if m > MAX_GRID_WEIGHTS {
        return Err(Error::InvalidProblem(vec![format!(
            "grid verification supports at most {MAX_GRID_WEIGHTS} bounds, got {m}"
        )]));
    }
    let grid = grid_simplex(m, step)?;
    let terms = crate::kahan::build_kahan_terms(&p.bounds, p.correlation_dim())?;
    let mut best: Option<OracleSolution> = None;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for omega in grid {
        match fixed_omega_with_terms(p, &terms, &omega) {
            Ok((_, bound)) => {
                // an extreme grid point can defeat the log-det Cholesky
                // even when the bound itself exists; treat it as skipped
                let Ok(objective) = p.criterion.evaluate(&bound) else {
                    skipped += 1;
                    continue;
                };
                evaluated += 1;
                let better = best.as_ref().is_none_or(|b| objective < b.objective);
                if better {
                    best = Some(OracleSolution {
                        weights: omega,
                        objective,
                        bound,
                        evaluated: 0,
                        skipped: 0,
                    });
                }
            }
            Err(Error::SingularBound(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let mut solution = best.ok_or_else(|| {
        Error::SingularBound("every grid point has an undefined fixed-weight bound".into())
    })?;
    solution.evaluated = evaluated;
    solution.skipped = skipped;
    Ok(solution)
}

/// A classic scalar-ω two-estimate filter result.
#[derive(Debug, Clone)]
pub struct ClassicFilter {
    pub omega: f64,
    pub gain: RectMatrix,
    pub bound: SymMatrix,
    pub objective: f64,
}

/// Golden-section minimization of a unimodal function on [0, 1].
fn golden_section<F: Fn(f64) -> f64>(f: F) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Classic two-estimate covariance intersection for full-state estimates:
/// scalar-ω minimization of `J((ω·X1⁻¹ + (1−ω)·X2⁻¹)⁻¹)` with
/// `K = B·[ω·X1⁻¹  (1−ω)·X2⁻¹]`.
pub fn classic_ci_two(x1: &SymMatrix, x2: &SymMatrix, criterion: Criterion) -> Result<ClassicFilter> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "classic CI: {} vs {}",
            x1.dim(),
            x2.dim()
        )));
    }
    let x1_inv = x1.inverse_pd()?;
    let x2_inv = x2.inverse_pd()?;
    let bound_at = |omega: f64| -> Result<SymMatrix> {
        x1_inv
            .scale(omega)
            .add(&x2_inv.scale(1.0 - omega))
            .inverse_pd()
    };
    let objective_at = |omega: f64| -> f64 {
        bound_at(omega)
            .and_then(|b| criterion.evaluate(&b))
            .unwrap_or(f64::INFINITY)
    };
    let omega = golden_section(objective_at);
    let bound = bound_at(omega)?;
    let objective = criterion.evaluate(&bound)?;
    let n = x1.dim();
    let mut gain = DMatrix::zeros(n, 2 * n);
    gain.view_mut((0, 0), (n, n))
        .copy_from(&(bound.matrix() * x1_inv.matrix() * omega));
    gain.view_mut((0, n), (n, n))
        .copy_from(&(bound.matrix() * x2_inv.matrix() * (1.0 - omega)));
    Ok(ClassicFilter {
        omega,
        gain,
        bound,
        objective,
    })
}

/// Classic two-estimate split covariance intersection for full-state
/// estimates with per-estimate splits `(d_i, s_i)`: `d_i` bounds the
/// unknown-correlation part, `s_i` is the known-independent part. The
/// inflated covariances are `P_i(ω) = d_i/ω_i + s_i` and the fused bound
/// is the information-form combination `(P_1(ω)⁻¹ + P_2(ω)⁻¹)⁻¹`.
pub fn classic_sci_two(
    d1: &SymMatrix,
    s1: &SymMatrix,
    d2: &SymMatrix,
    s2: &SymMatrix,
    criterion: Criterion,
) -> Result<ClassicFilter> {
    let n = d1.dim();
    if [s1.dim(), d2.dim(), s2.dim()].iter().any(|&d| d != n) {
        return Err(Error::DimensionMismatch("classic SCI: mixed dims".into()));
    }
    // information contribution of one estimate at weight w, zero as w → 0
    let contribution = |d: &SymMatrix, s: &SymMatrix, w: f64| -> Result<SymMatrix> {
        if w <= 0.0 {
            return Ok(SymMatrix::zeros(n));
        }
        d.scale(1.0 / w).add(s).inverse_pd()
    };
    let parts_at = |omega: f64| -> Result<(SymMatrix, SymMatrix, SymMatrix)> {
        let f1 = contribution(d1, s1, omega)?;
        let f2 = contribution(d2, s2, 1.0 - omega)?;
        let bound = f1.add(&f2).inverse_pd()?;
        Ok((f1, f2, bound))
    };
    let objective_at = |omega: f64| -> f64 {
        parts_at(omega)
            .and_then(|(_, _, b)| criterion.evaluate(&b))
            .unwrap_or(f64::INFINITY)
    };
    let omega = golden_section(objective_at);
    let (f1, f2, bound) = parts_at(omega)?;
    let objective = criterion.evaluate(&bound)?;
    let mut gain = DMatrix::zeros(n, 2 * n);
    gain.view_mut((0, 0), (n, n))
        .copy_from(&(bound.matrix() * f1.matrix()));
    gain.view_mut((0, n), (n, n))
        .copy_from(&(bound.matrix() * f2.matrix()));
    Ok(ClassicFilter {
        omega,
        gain,
        bound,
        objective,
    })
}

/// Outcome of a consistency audit.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Smallest eigenvalue of `B − K(R + C·P·Cᵀ)Kᵀ` over all samples.
    pub worst_margin: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Verifies `B ⪰ K(R + C·P·Cᵀ)Kᵀ` on sampled admissible `P`; the report
/// passes iff the worst margin stays above [`CONSISTENCY_MARGIN`].
pub fn consistency_audit(
    result: &FusionResult,
    p: &OciProblem,
    samples: usize,
    seed: u64,
) -> ConsistencyReport {
    let m = p.correlation_dim();
    let mut worst = f64::INFINITY;
    for sample in sample_admissible(&p.bounds, m, seed, samples) {
        let second_moment = p.r.matrix() + &p.c * sample.matrix() * p.c.transpose();
        let pushed = &result.gain * second_moment * result.gain.transpose();
        let margin = SymMatrix::symmetrize(&(result.bound.matrix() - pushed))
            .map(|d| d.min_eigenvalue())
            .unwrap_or(f64::NEG_INFINITY);
        worst = worst.min(margin);
    }
    if samples == 0 {
        worst = 0.0;
    }
    ConsistencyReport {
        worst_margin: worst,
        samples,
        pass: worst >= CONSISTENCY_MARGIN,
    }
}
