//! The fusion solvers: feasibility checks, SDP solve, weight
//! extraction, closed-form gain recovery, and split-bound computation.
//!
//! The SDP supplies only the optimal simplex weights; the gain and bound
//! are always re-derived from the closed forms at those weights, which
//! also repairs the ε-infeasibility of interior-point iterates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kahan::{build_kahan_terms, combined_term, KahanTerms};
use crate::linalg::{self, RectMatrix, SymMatrix, DEFAULT_PINV_RTOL, DEFAULT_PSD_TOL, DEFAULT_RANK_RTOL};
use crate::problem::{ci_to_oci, sci_to_oci, CiProblem, Criterion, NoiseRegime, OciProblem, SciProblem};
use crate::sdp::{self, SolveOutcome, SolveStatus, SolverOptions};

/// Max-norm tolerance on `K·H − I` accepted from a solve.
pub const UNBIASEDNESS_TOL: f64 = 1e-7;

/// Solver telemetry carried alongside a fusion result.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub psd_residual: f64,
    pub eq_residual: f64,
}

/// Split of the fused bound for SCI: `b1` bounds the unknown-correlation
/// error component, `b2` is the exactly known component; `b1 + b2 = B`.
#[derive(Debug, Clone)]
pub struct SplitBounds {
    pub b1: SymMatrix,
    pub b2: SymMatrix,
}

/// Fusion gain, consistent covariance bound, and the optimal weights.
#[derive(Debug, Clone)]
pub struct FusionResult {
    /// Fusion gain `K` with `K·H = I`, `n × o`.
    pub gain: RectMatrix,
    /// Consistent bound on the fused error covariance, `n × n` PSD.
    pub bound: SymMatrix,
    /// Simplex weights, clamped to nonnegative and renormalized.
    pub weights: Vec<f64>,
    /// Criterion value of `bound`.
    pub objective: f64,
    pub diagnostics: Diagnostics,
    /// Populated only for SCI solves.
    pub split: Option<SplitBounds>,
}

/// Rank evidence behind a feasibility verdict.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityReport {
    /// Rank of the regime's feasibility matrix.
    pub rank: usize,
    /// Full rank it must reach (the state dimension).
    pub required: usize,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.rank == self.required
    }
}

/// Rank condition of the PD-noise regime:
/// `HᵀR⁻¹(R − C(WᵀW + CᵀR⁻¹C)⁺Cᵀ)R⁻¹H` full rank.
pub fn feasibility_report_pd(p: &OciProblem) -> Result<FeasibilityReport> {
    if p.regime() != NoiseRegime::PositiveDefinite {
        return Err(Error::NotPositiveDefinite(
            "feasibility check for the PD regime requires R ≻ 0".into(),
        ));
    }
    let n = p.state_dim();
    let w = p.stacked_w();
    let r_inv = p.r.inverse_pd()?;
    let wtw = SymMatrix::symmetrize(&(w.transpose() * &w))?;
    let crc = SymMatrix::symmetrize(&(p.c.transpose() * r_inv.matrix() * &p.c))?;
    let g = wtw.add(&crc).pinv(DEFAULT_PINV_RTOL);
    let mid = SymMatrix::symmetrize(&(p.r.matrix() - &p.c * g.matrix() * p.c.transpose()))?;
    let f = p.h.transpose() * r_inv.matrix() * mid.matrix() * r_inv.matrix() * &p.h;
    Ok(FeasibilityReport {
        rank: linalg::rank(&f, DEFAULT_RANK_RTOL),
        required: n,
    })
}

pub fn check_feasibility_pd(p: &OciProblem) -> Result<bool> {
    Ok(feasibility_report_pd(p)?.feasible())
}

/// Rank condition of the zero-noise regime: `HᵀC⁻ᵀWᵀWC⁻¹H` full rank.
pub fn feasibility_report_zero(p: &OciProblem) -> Result<FeasibilityReport> {
    let (o, m) = (p.obs_dim(), p.correlation_dim());
    if o != m {
        return Err(Error::InvalidProblem(vec![format!(
            "R=0 requires square invertible C (got o={o}, m={m})"
        )]));
    }
    let c_inv = p
        .c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidProblem(vec!["C is numerically singular".into()]))?;
    let n = p.state_dim();
    let w = p.stacked_w();
    let t = &c_inv * &p.h;
    let wt = &w * &t;
    let f = wt.transpose() * &wt;
    Ok(FeasibilityReport {
        rank: linalg::rank(&f, DEFAULT_RANK_RTOL),
        required: n,
    })
}

pub fn check_feasibility_zero(p: &OciProblem) -> Result<bool> {
    Ok(feasibility_report_zero(p)?.feasible())
}

/// Interior-point weights are ε-feasible; clip tiny negatives and
/// renormalize to sum exactly one.
fn clamp_simplex(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|w| !w.is_finite() || *w < -1e-6) {
        return Err(Error::SolverFailure(format!(
            "weights far off the simplex: {raw:?}"
        )));
    }
    let clamped: Vec<f64> = raw.iter().map(|w| w.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 {
        return Err(Error::SolverFailure("weights sum to zero".into()));
    }
    Ok(clamped.iter().map(|w| w / sum).collect())
}

/// Gain and bound of the PD regime at fixed weights, in the
/// pseudoinverse form:
/// `K = (HᵀR⁻¹(R − C·G⁺·Cᵀ)R⁻¹H)⁻¹ HᵀR⁻¹(R − C·G⁺·Cᵀ)R⁻¹`
/// with `G = Σω_b·Y_b + CᵀR⁻¹C`; `B` is the leading inverse.
fn recover_pd(p: &OciProblem, k: &KahanTerms, omega: &[f64]) -> Result<(RectMatrix, SymMatrix)> {
    let ybar = combined_term(k, omega)?;
    let r_inv = p.r.inverse_pd()?;
    let crc = SymMatrix::symmetrize(&(p.c.transpose() * r_inv.matrix() * &p.c))?;
    let g = ybar.add(&crc).pinv(DEFAULT_PINV_RTOL);
    let mid = SymMatrix::symmetrize(&(p.r.matrix() - &p.c * g.matrix() * p.c.transpose()))?;
    let phi = p.h.transpose() * r_inv.matrix() * mid.matrix() * r_inv.matrix();
    let a = SymMatrix::symmetrize(&(&phi * &p.h))?;
    let b = a
        .inverse_pd()
        .map_err(|_| Error::SingularBound("information matrix singular at these weights".into()))?;
    Ok((b.matrix() * phi, b))
}

/// Gain and bound of the zero regime at fixed weights:
/// `K = (HᵀC⁻ᵀȲC⁻¹H)⁻¹ HᵀC⁻ᵀȲC⁻¹`, `B` the leading inverse.
fn recover_zero(p: &OciProblem, k: &KahanTerms, omega: &[f64]) -> Result<(RectMatrix, SymMatrix)> {
    let ybar = combined_term(k, omega)?;
    let c_inv = p
        .c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidProblem(vec!["C is numerically singular".into()]))?;
    let t = &c_inv * &p.h;
    let a = SymMatrix::symmetrize(&(t.transpose() * ybar.matrix() * &t))?;
    let b = a
        .inverse_pd()
        .map_err(|_| Error::SingularBound("Ȳ(ω) does not cover H at these weights".into()))?;
    let gain = b.matrix() * t.transpose() * ybar.matrix() * &c_inv;
    Ok((gain, b))
}

fn run_sdp(prog: &sdp::ConicProgram, opts: &SolverOptions) -> Result<SolveOutcome> {
    let out = sdp::solve(prog, opts)?;
    match out.status {
        SolveStatus::Optimal => Ok(out),
        SolveStatus::Infeasible => Err(Error::Infeasible(
            "SDP backend produced an infeasibility certificate".into(),
        )),
        SolveStatus::NumericalTrouble => Err(Error::SolverFailure(format!(
            "no certificate after {} iterations",
            out.iterations
        ))),
    }
}

fn finalize(
    p_h: &RectMatrix,
    criterion: Criterion,
    gain: RectMatrix,
    bound: SymMatrix,
    weights: Vec<f64>,
    out: &SolveOutcome,
    split: Option<SplitBounds>,
) -> Result<FusionResult> {
    let n = p_h.ncols();
    let residual = (&gain * p_h - DMatrix::identity(n, n)).amax();
    if residual > UNBIASEDNESS_TOL {
        return Err(Error::SolverFailure(format!(
            "unbiasedness violated: |KH - I| = {residual:.3e}"
        )));
    }
    if !bound.is_psd(DEFAULT_PSD_TOL) {
        return Err(Error::SolverFailure("recovered bound is not PSD".into()));
    }
    let objective = criterion
        .evaluate(&bound)
        .map_err(|_| Error::SolverFailure("log-det criterion needs a PD bound".into()))?;
    Ok(FusionResult {
        gain,
        bound,
        weights,
        objective,
        diagnostics: Diagnostics {
            status: out.status,
            iterations: out.iterations,
            psd_residual: out.psd_residual,
            eq_residual: out.eq_residual,
        },
        split,
    })
}

/// Family-optimal fusion for the PD-noise regime.
pub fn solve_oci_pd(p: &OciProblem, opts: &SolverOptions) -> Result<FusionResult> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations));
    }
    if p.regime() != NoiseRegime::PositiveDefinite {
        return Err(Error::InvalidProblem(vec!["solve_oci_pd requires R ≻ 0".into()]));
    }
    if !check_feasibility_pd(p)? {
        return Err(Error::Infeasible(
            "HᵀR⁻¹(R − C(WᵀW + CᵀR⁻¹C)⁺Cᵀ)R⁻¹H is rank deficient".into(),
        ));
    }
    let k = build_kahan_terms(&p.bounds, p.correlation_dim())?;
    let prog = sdp::build_oci_pd_program(p, &k)?;
    let out = run_sdp(&prog, opts)?;
    let weights = clamp_simplex(&out.scalar_values)?;
    let (gain, bound) = recover_pd(p, &k, &weights)
        .map_err(|e| Error::SolverFailure(format!("gain recovery failed: {e}")))?;
    finalize(&p.h, p.criterion, gain, bound, weights, &out, None)
}

/// Family-optimal fusion for the zero-noise regime.
pub fn solve_oci_zero(p: &OciProblem, opts: &SolverOptions) -> Result<FusionResult> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations));
    }
    if p.regime() != NoiseRegime::Zero {
        return Err(Error::InvalidProblem(vec![
            "solve_oci_zero requires R = 0".into(),
        ]));
    }
    if !check_feasibility_zero(p)? {
        return Err(Error::Infeasible(
            "HᵀC⁻ᵀWᵀWC⁻¹H is rank deficient".into(),
        ));
    }
    let k = build_kahan_terms(&p.bounds, p.correlation_dim())?;
    let prog = sdp::build_oci_zero_program(p, &k)?;
    let out = run_sdp(&prog, opts)?;
    let weights = clamp_simplex(&out.scalar_values)?;
    let (gain, bound) = recover_zero(p, &k, &weights)
        .map_err(|e| Error::SolverFailure(format!("gain recovery failed: {e}")))?;
    finalize(&p.h, p.criterion, gain, bound, weights, &out, None)
}

/// Dispatches on the noise regime of `R`.
pub fn solve_oci(p: &OciProblem, opts: &SolverOptions) -> Result<FusionResult> {
    match p.regime() {
        NoiseRegime::PositiveDefinite => solve_oci_pd(p, opts),
        NoiseRegime::Zero => solve_oci_zero(p, opts),
        NoiseRegime::Unsupported => Err(Error::InvalidProblem(vec![
            "R must be PD or exactly zero".into(),
        ])),
    }
}

/// Family-optimal CI fusion; the gain is assembled blockwise as
/// `K = (Σω_i·H_iᵀX_i⁻¹H_i)⁻¹ [ω_1·H_1ᵀX_1⁻¹ ⋯ ω_N·H_NᵀX_N⁻¹]`.
pub fn solve_ci(p: &CiProblem, opts: &SolverOptions) -> Result<FusionResult> {
    let oci = ci_to_oci(p)?;
    let n = oci.state_dim();
    let h_rank = linalg::rank(&oci.h, DEFAULT_RANK_RTOL);
    if h_rank != n {
        return Err(Error::Infeasible(format!(
            "H is not full column rank (rank {h_rank} < {n})"
        )));
    }
    let k = build_kahan_terms(&oci.bounds, oci.correlation_dim())?;
    let prog = sdp::build_oci_zero_program(&oci, &k)?;
    let out = run_sdp(&prog, opts)?;
    let weights = clamp_simplex(&out.scalar_values)?;

    let mut info = DMatrix::zeros(n, n);
    let mut blocks = Vec::with_capacity(p.estimates.len());
    for (e, w) in p.estimates.iter().zip(&weights) {
        let x_inv = e.x.inverse_pd()?;
        let hx = e.h.transpose() * x_inv.matrix(); // n × o_i
        info += &hx * &e.h * *w;
        blocks.push(hx * *w);
    }
    let s = SymMatrix::symmetrize(&info)?;
    let bound = s
        .inverse_pd()
        .map_err(|_| Error::SolverFailure("information matrix singular at solver weights".into()))?;
    let o = oci.obs_dim();
    let mut gain = DMatrix::zeros(n, o);
    let mut col = 0;
    for (e, block) in p.estimates.iter().zip(&blocks) {
        gain
            .view_mut((0, col), (n, e.h.nrows()))
            .copy_from(&(bound.matrix() * block));
        col += e.h.nrows();
    }
    finalize(&oci.h, p.criterion, gain, bound, weights, &out, None)
}

/// Family-optimal SCI fusion with the split-bound computation
/// `B2 = K·X⁽²⁾·Kᵀ`, `B1 = B − B2`.
pub fn solve_sci(p: &SciProblem, opts: &SolverOptions) -> Result<FusionResult> {
    let oci = sci_to_oci(p)?;
    let n = oci.state_dim();
    let h_rank = linalg::rank(&oci.h, DEFAULT_RANK_RTOL);
    if h_rank != n {
        return Err(Error::Infeasible(format!(
            "H is not full column rank (rank {h_rank} < {n})"
        )));
    }
    let k = build_kahan_terms(&oci.bounds, oci.correlation_dim())?;
    let prog = sdp::build_oci_pd_program(&oci, &k)?;
    let out = run_sdp(&prog, opts)?;
    let weights = clamp_simplex(&out.scalar_values)?;

    // closed form with a plain inverse: Y* + X⁽²⁾⁻¹ is PD
    let ystar = combined_term(&k, &weights)?;
    let x2_inv = p.x2.inverse_pd()?;
    let g_inv = ystar.add(&x2_inv).inverse_pd()?;
    let mid = SymMatrix::symmetrize(&(p.x2.matrix() - g_inv.matrix()))?;
    let phi = oci.h.transpose() * x2_inv.matrix() * mid.matrix() * x2_inv.matrix();
    let a = SymMatrix::symmetrize(&(&phi * &oci.h))?;
    let bound = a
        .inverse_pd()
        .map_err(|_| Error::SolverFailure("information matrix singular at solver weights".into()))?;
    let gain = bound.matrix() * phi;

    let b2 = SymMatrix::symmetrize(&(&gain * p.x2.matrix() * gain.transpose()))?;
    let b1 = bound.sub(&b2);
    let split = Some(SplitBounds { b1, b2 });
    finalize(&oci.h, p.criterion, gain, bound, weights, &out, split)
}

/// `x̂ = K·z` for a stacked estimate vector.
pub fn fuse_estimates(gain: &RectMatrix, z: &DVector<f64>) -> Result<DVector<f64>> {
    if gain.ncols() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "gain has {} columns, stacked estimate has length {}",
            gain.ncols(),
            z.len()
        )));
    }
    Ok(gain * z)
}

/// Closed-form `(K(ω), B(ω))` for fixed weights — the oracle's inner
/// evaluator. For `R ≻ 0` with invertible `Ȳ(ω)` this uses the
/// weighted-least-squares route with covariance `R + C·Ȳ(ω)⁻¹·Cᵀ`,
/// independent of the pseudoinverse form used by the solvers.
pub fn bound_for_fixed_omega(p: &OciProblem, omega: &[f64]) -> Result<(RectMatrix, SymMatrix)> {
    let k = build_kahan_terms(&p.bounds, p.correlation_dim())?;
    fixed_omega_with_terms(p, &k, omega)
}

/// Grid-search entry point that reuses prebuilt family terms.
pub(crate) fn fixed_omega_with_terms(
    p: &OciProblem,
    k: &KahanTerms,
    omega: &[f64],
) -> Result<(RectMatrix, SymMatrix)> {
    match p.regime() {
        NoiseRegime::Zero => recover_zero(p, k, omega),
        NoiseRegime::PositiveDefinite => {
            let ybar = combined_term(k, omega)?;
            if let Ok(ybar_inv) = ybar.inverse_pd() {
                let s = SymMatrix::symmetrize(
                    &(p.r.matrix() + &p.c * ybar_inv.matrix() * p.c.transpose()),
                )?;
                let s_inv = s.inverse_pd()?;
                let a = SymMatrix::symmetrize(&(p.h.transpose() * s_inv.matrix() * &p.h))?;
                let b = a.inverse_pd().map_err(|_| {
                    Error::SingularBound("information matrix singular at these weights".into())
                })?;
                let gain = b.matrix() * p.h.transpose() * s_inv.matrix();
                Ok((gain, b))
            } else {
                recover_pd(p, k, omega)
            }
        }
        NoiseRegime::Unsupported => Err(Error::InvalidProblem(vec![
            "R must be PD or exactly zero".into(),
        ])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BoundSpec, CiEstimate, SciEstimate};
    use approx::assert_abs_diff_eq;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn ci(estimates: Vec<(RectMatrix, SymMatrix)>, criterion: Criterion) -> CiProblem {
        CiProblem {
            estimates: estimates
                .into_iter()
                .map(|(h, x)| CiEstimate { h, x })
                .collect(),
            criterion,
        }
    }

    fn sci(
        estimates: Vec<(RectMatrix, SymMatrix)>,
        x2: SymMatrix,
        criterion: Criterion,
    ) -> SciProblem {
        SciProblem {
            estimates: estimates
                .into_iter()
                .map(|(h, x1)| SciEstimate { h, x1 })
                .collect(),
            x2,
            criterion,
        }
    }

    /// Two scalar partial estimates of one state with PD noise floor.
    fn scalar_pd_instance(r_diag: f64, criterion: Criterion) -> OciProblem {
        OciProblem {
            h: DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            r: SymMatrix::from_diagonal(&[r_diag, r_diag]),
            c: DMatrix::identity(2, 2),
            bounds: vec![
                BoundSpec {
                    w: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                    x: SymMatrix::from_diagonal(&[1.0]),
                },
                BoundSpec {
                    w: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
                    x: SymMatrix::from_diagonal(&[1.0]),
                },
            ],
            criterion,
        }
    }

    fn grid_min(p: &OciProblem, steps: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let w = i as f64 / steps as f64;
            if let Ok((_, b)) = bound_for_fixed_omega(p, &[w, 1.0 - w]) {
                best = best.min(p.criterion.evaluate(&b).unwrap());
            }
        }
        best
    }

    #[test]
    fn feasibility_pd_on_ci_shaped_instance() {
        let p = sci_to_oci(&sci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::identity(2)),
                (DMatrix::identity(2, 2), SymMatrix::identity(2)),
            ],
            SymMatrix::identity(4).scale(1e-3),
            Criterion::Trace,
        ))
        .unwrap();
        assert!(check_feasibility_pd(&p).unwrap());
    }

    #[test]
    fn feasibility_pd_detects_column_deficiency() {
        let mut p = sci_to_oci(&sci(
            vec![
                (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), SymMatrix::from_diagonal(&[1.0])),
                (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), SymMatrix::from_diagonal(&[1.0])),
            ],
            SymMatrix::identity(2).scale(0.5),
            Criterion::Trace,
        ))
        .unwrap();
        p.r = SymMatrix::identity(2).scale(0.5);
        assert!(!check_feasibility_pd(&p).unwrap());
    }

    #[test]
    fn feasibility_pd_with_zero_c() {
        let p = OciProblem {
            h: DMatrix::from_element(1, 1, 1.0),
            r: SymMatrix::from_diagonal(&[1.0]),
            c: DMatrix::zeros(1, 1),
            bounds: vec![BoundSpec {
                w: DMatrix::from_element(1, 1, 1.0),
                x: SymMatrix::from_diagonal(&[1.0]),
            }],
            criterion: Criterion::Trace,
        };
        assert!(check_feasibility_pd(&p).unwrap());
    }

    #[test]
    fn feasibility_zero_reduces_to_column_rank() {
        let full = ci_to_oci(&ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::identity(2)),
                (DMatrix::identity(2, 2), SymMatrix::identity(2)),
            ],
            Criterion::Trace,
        ))
        .unwrap();
        assert!(check_feasibility_zero(&full).unwrap());

        let stacked_scalar = ci_to_oci(&ci(
            vec![
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
            ],
            Criterion::Trace,
        ))
        .unwrap();
        assert!(check_feasibility_zero(&stacked_scalar).unwrap());

        let mut zero_h = stacked_scalar.clone();
        zero_h.h = DMatrix::zeros(2, 1);
        assert!(!check_feasibility_zero(&zero_h).unwrap());
    }

    #[test]
    fn single_estimate_sci_shaped_pd_solve() {
        let p = sci_to_oci(&sci(
            vec![(DMatrix::identity(2, 2), SymMatrix::identity(2))],
            SymMatrix::identity(2).scale(0.5),
            Criterion::Trace,
        ))
        .unwrap();
        let r = solve_oci_pd(&p, &opts()).unwrap();
        assert_eq!(r.weights.len(), 1);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(&r.gain, &DMatrix::identity(2, 2), epsilon = 1e-7);
        assert_abs_diff_eq!(
            r.bound.matrix(),
            &(DMatrix::identity(2, 2) * 1.5),
            epsilon = 1e-6
        );
    }

    #[test]
    fn pd_solve_matches_grid_oracle_trace() {
        let p = scalar_pd_instance(0.1, Criterion::Trace);
        let r = solve_oci_pd(&p, &opts()).unwrap();
        let best = grid_min(&p, 1000);
        assert!((r.objective - best).abs() <= 1e-4, "sdp {} grid {}", r.objective, best);
    }

    #[test]
    fn pd_solve_matches_grid_oracle_logdet() {
        let p = scalar_pd_instance(0.1, Criterion::LogDet);
        let r = solve_oci_pd(&p, &opts()).unwrap();
        let best = grid_min(&p, 1000);
        assert!((r.objective - best).abs() <= 1e-4, "sdp {} grid {}", r.objective, best);
    }

    #[test]
    fn single_estimate_ci_zero_solve() {
        let p = ci_to_oci(&ci(
            vec![(DMatrix::identity(2, 2), SymMatrix::identity(2))],
            Criterion::Trace,
        ))
        .unwrap();
        let r = solve_oci_zero(&p, &opts()).unwrap();
        assert_abs_diff_eq!(&r.gain, &DMatrix::identity(2, 2), epsilon = 1e-7);
        assert_abs_diff_eq!(r.bound.matrix(), &DMatrix::identity(2, 2), epsilon = 1e-6);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scaling_c_against_bounds_is_invariant() {
        let base = ci_to_oci(&ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 4.0])),
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[4.0, 1.0])),
            ],
            Criterion::Trace,
        ))
        .unwrap();
        // C = 2I with bounds X is the same instance as C = I with 4X:
        // (2I)P(2I)ᵀ over P ⪯ X sweeps exactly P′ ⪯ 4X
        let mut doubled_c = base.clone();
        doubled_c.c = DMatrix::identity(4, 4) * 2.0;
        let mut rescaled = base.clone();
        for b in &mut rescaled.bounds {
            b.x = b.x.scale(4.0);
        }
        let r1 = solve_oci_zero(&doubled_c, &opts()).unwrap();
        let r2 = solve_oci_zero(&rescaled, &opts()).unwrap();
        assert_abs_diff_eq!(&r1.gain, &r2.gain, epsilon = 1e-6);
        assert_abs_diff_eq!(r1.bound.matrix(), r2.bound.matrix(), epsilon = 1e-6);
    }

    #[test]
    fn zero_solve_agrees_with_solve_ci() {
        let problem = ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 4.0])),
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[4.0, 1.0])),
            ],
            Criterion::Trace,
        );
        let r_oci = solve_oci_zero(&ci_to_oci(&problem).unwrap(), &opts()).unwrap();
        let r_ci = solve_ci(&problem, &opts()).unwrap();
        assert!((r_oci.objective - r_ci.objective).abs() <= 1e-6);
    }

    #[test]
    fn symmetric_diagonal_ci_example() {
        let r = solve_ci(
            &ci(
                vec![
                    (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 4.0])),
                    (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[4.0, 1.0])),
                ],
                Criterion::Trace,
            ),
            &opts(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.weights[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(
            r.bound.matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.6, 0.0, 0.0, 1.6]),
            epsilon = 1e-5
        );
    }

    #[test]
    fn dominated_scalar_ci_pins_weight() {
        let r = solve_ci(
            &ci(
                vec![
                    (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
                    (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[4.0])),
                ],
                Criterion::Trace,
            ),
            &opts(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.bound.matrix()[(0, 0)], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(r.gain[(0, 0)], 1.0, epsilon = 1e-5);
        assert!(r.gain[(0, 1)].abs() <= 1e-5);
    }

    #[test]
    fn deficient_ci_is_infeasible() {
        let err = solve_ci(
            &ci(
                vec![
                    (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), SymMatrix::from_diagonal(&[1.0])),
                    (DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), SymMatrix::from_diagonal(&[1.0])),
                ],
                Criterion::Trace,
            ),
            &opts(),
        );
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_estimate_sci_splits_exactly() {
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let s = SymMatrix::from_diagonal(&[0.25, 0.5]);
        let r = solve_sci(
            &sci(vec![(DMatrix::identity(2, 2), a.clone())], s.clone(), Criterion::Trace),
            &opts(),
        )
        .unwrap();
        assert_abs_diff_eq!(&r.gain, &DMatrix::identity(2, 2), epsilon = 1e-7);
        let split = r.split.as_ref().unwrap();
        assert_abs_diff_eq!(split.b1.matrix(), a.matrix(), epsilon = 1e-6);
        assert_abs_diff_eq!(split.b2.matrix(), s.matrix(), epsilon = 1e-6);
        assert_abs_diff_eq!(r.bound.matrix(), &a.add(&s).matrix().clone(), epsilon = 1e-6);
    }

    #[test]
    fn identical_scalar_sci_matches_grid_oracle() {
        let problem = sci(
            vec![
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
            ],
            SymMatrix::identity(2),
            Criterion::Trace,
        );
        let r = solve_sci(&problem, &opts()).unwrap();
        let oci = sci_to_oci(&problem).unwrap();
        let best = grid_min(&oci, 1000);
        assert!((r.objective - best).abs() <= 1e-4);
        // B2 = K·X⁽²⁾·Kᵀ by construction
        let split = r.split.as_ref().unwrap();
        let expect = &r.gain * oci.r.matrix() * r.gain.transpose();
        assert_abs_diff_eq!(split.b2.matrix(), &expect, epsilon = 1e-12);
        assert_abs_diff_eq!(
            &split.b1.add(&split.b2).matrix().clone(),
            &r.bound.matrix().clone(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dense_x2_sci_matches_grid_oracle() {
        let problem = sci(
            vec![
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
                (DMatrix::from_element(1, 1, 1.0), SymMatrix::from_diagonal(&[1.0])),
            ],
            SymMatrix::from_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0])).unwrap(),
            Criterion::Trace,
        );
        let r = solve_sci(&problem, &opts()).unwrap();
        let oci = sci_to_oci(&problem).unwrap();
        let best = grid_min(&oci, 1000);
        assert!((r.objective - best).abs() <= 1e-4, "sdp {} grid {}", r.objective, best);
    }

    #[test]
    fn fuse_estimates_examples() {
        let z = DVector::from_row_slice(&[1.0, 2.0]);
        let fused = fuse_estimates(&DMatrix::identity(2, 2), &z).unwrap();
        assert_eq!(fused, z);

        let avg = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let fused = fuse_estimates(&avg, &DVector::from_row_slice(&[1.0, 3.0])).unwrap();
        assert_abs_diff_eq!(fused[0], 2.0, epsilon = 1e-15);

        let select = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let fused = fuse_estimates(&select, &DVector::from_row_slice(&[5.0, 7.0])).unwrap();
        assert_abs_diff_eq!(fused[0], 5.0, epsilon = 1e-15);

        assert!(fuse_estimates(&avg, &DVector::from_row_slice(&[1.0])).is_err());
    }

    #[test]
    fn fixed_omega_bound_examples() {
        let p = ci_to_oci(&ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 4.0])),
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[4.0, 1.0])),
            ],
            Criterion::Trace,
        ))
        .unwrap();
        let (_, b) = bound_for_fixed_omega(&p, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            b.matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.6, 0.0, 0.0, 1.6]),
            epsilon = 1e-12
        );

        let sci_p = sci_to_oci(&sci(
            vec![(DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 2.0]))],
            SymMatrix::from_diagonal(&[0.25, 0.5]),
            Criterion::Trace,
        ))
        .unwrap();
        let (_, b) = bound_for_fixed_omega(&sci_p, &[1.0]).unwrap();
        assert_abs_diff_eq!(
            b.matrix(),
            &DMatrix::from_diagonal(&DVector::from_row_slice(&[1.25, 2.5])),
            epsilon = 1e-12
        );
    }

    #[test]
    fn fixed_omega_bound_matches_sdp_variable() {
        let problem = ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 3.0])),
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[2.5, 0.8])),
            ],
            Criterion::Trace,
        );
        let oci = ci_to_oci(&problem).unwrap();
        let k = build_kahan_terms(&oci.bounds, oci.correlation_dim()).unwrap();
        let prog = sdp::build_oci_zero_program(&oci, &k).unwrap();
        let out = sdp::solve(&prog, &opts()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let weights = clamp_simplex(&out.scalar_values).unwrap();
        let (_, b) = bound_for_fixed_omega(&oci, &weights).unwrap();
        assert!((b.matrix() - out.matrix_values[0].matrix()).amax() <= 1e-5);
    }

    #[test]
    fn rank_deficient_c_takes_the_pseudoinverse_branch() {
        // scalar observation of a scalar state through a correlation
        // space with an extra unbounded (and unobserved) direction:
        // E[ee'] = r + P₁₁ with P₁₁ ≤ x, so the worst case is B = x + r
        let (r, x) = (0.5, 2.0);
        let p = OciProblem {
            h: DMatrix::from_element(1, 1, 1.0),
            r: SymMatrix::from_diagonal(&[r]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            bounds: vec![BoundSpec {
                w: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                x: SymMatrix::from_diagonal(&[x]),
            }],
            criterion: Criterion::Trace,
        };
        assert!(p.validate().is_empty());
        assert!(check_feasibility_pd(&p).unwrap());
        let result = solve_oci_pd(&p, &opts()).unwrap();
        assert_abs_diff_eq!(result.bound.matrix()[(0, 0)], x + r, epsilon = 1e-6);
        assert_abs_diff_eq!(result.gain[(0, 0)], 1.0, epsilon = 1e-7);
        let audit = crate::oracle::consistency_audit(&result, &p, 200, 42);
        assert!(audit.pass, "worst margin {}", audit.worst_margin);
    }

    #[test]
    fn pinv_and_plain_inverse_agree_when_pd() {
        // With CI-shaped selectors and all weights interior, G is PD and
        // the pseudoinverse route must coincide with the plain inverse.
        let p = scalar_pd_instance(0.5, Criterion::Trace);
        let k = build_kahan_terms(&p.bounds, p.correlation_dim()).unwrap();
        let omega = [0.4, 0.6];
        let (k1, b1) = recover_pd(&p, &k, &omega).unwrap();
        let (k2, b2) = bound_for_fixed_omega(&p, &omega).unwrap();
        assert_abs_diff_eq!(&k1, &k2, epsilon = 1e-9);
        assert_abs_diff_eq!(b1.matrix(), b2.matrix(), epsilon = 1e-9);
    }

    #[test]
    fn solver_never_loses_to_any_fixed_weight() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let x1 = SymMatrix::from_diagonal(&[
                rng.random_range(0.5..2.5),
                rng.random_range(0.5..2.5),
            ]);
            let x2 = SymMatrix::from_diagonal(&[
                rng.random_range(0.5..2.5),
                rng.random_range(0.5..2.5),
            ]);
            let problem = ci(
                vec![
                    (DMatrix::identity(2, 2), x1),
                    (DMatrix::identity(2, 2), x2),
                ],
                Criterion::Trace,
            );
            let solved = solve_ci(&problem, &opts()).unwrap();
            let oci = ci_to_oci(&problem).unwrap();
            for _ in 0..4 {
                let w = rng.random_range(0.0..1.0);
                let (_, b) = bound_for_fixed_omega(&oci, &[w, 1.0 - w]).unwrap();
                let fixed = Criterion::Trace.evaluate(&b).unwrap();
                assert!(
                    solved.objective <= fixed + 1e-5,
                    "solver {} beaten by fixed weight {w}: {fixed}",
                    solved.objective
                );
            }
        }
    }

    #[test]
    fn regime_continuity_toward_zero_noise() {
        let problem = ci(
            vec![
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[1.0, 4.0])),
                (DMatrix::identity(2, 2), SymMatrix::from_diagonal(&[4.0, 1.0])),
            ],
            Criterion::Trace,
        );
        let zero = solve_ci(&problem, &opts()).unwrap();
        // near-zero noise floors make the interior-point certificate
        // expensive; a 5e-4 gap is far below the 1e-3 acceptance band
        let sweep_opts = SolverOptions {
            gap_tol: 5e-4,
            ..SolverOptions::default()
        };
        let mut last_gap = f64::INFINITY;
        for delta in [1e-2, 1e-4, 1e-6] {
            let mut p = ci_to_oci(&problem).unwrap();
            p.r = SymMatrix::identity(4).scale(delta);
            let r = solve_oci_pd(&p, &sweep_opts).unwrap();
            let gap = (r.objective - zero.objective).abs();
            assert!(gap <= last_gap + 1e-6, "gap not monotone: {gap} > {last_gap}");
            last_gap = gap;
        }
        assert!(last_gap <= 1e-3);
    }
}
