//! Shared randomized-instance generators for the integration suites.
//! Everything is seeded so failures reproduce exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ocifuse::linalg::SymMatrix;
use ocifuse::problem::{
    BoundSpec, CiEstimate, CiProblem, Criterion, OciProblem, SciEstimate, SciProblem,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_orthonormal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    g.qr().q()
}

/// Random PD matrix with eigenvalues uniform in `[lo, hi]`; moderate
/// conditioning keeps grid-resolution error inside the stated bands.
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    let q = random_orthonormal(n, rng);
    let diag: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let d = DMatrix::from_diagonal(&DVector::from_row_slice(&diag));
    SymMatrix::symmetrize(&(&q * d * q.transpose())).unwrap()
}

/// Random square matrix with singular values in `[0.7, 1.6]`.
pub fn random_invertible(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = random_orthonormal(n, rng);
    let v = random_orthonormal(n, rng);
    let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.7..1.6)).collect();
    u * DMatrix::from_diagonal(&DVector::from_row_slice(&diag)) * v.transpose()
}

pub fn random_two_estimate_ci(
    n: usize,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> CiProblem {
    CiProblem {
        estimates: (0..2)
            .map(|_| CiEstimate {
                h: random_invertible(n, rng),
                x: random_spd(n, 0.6, 2.5, rng),
            })
            .collect(),
        criterion,
    }
}

/// Full-state estimates, as in the classic filters.
pub fn random_full_state_ci(
    n: usize,
    count: usize,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> CiProblem {
    CiProblem {
        estimates: (0..count)
            .map(|_| CiEstimate {
                h: DMatrix::identity(n, n),
                x: random_spd(n, 0.6, 2.5, rng),
            })
            .collect(),
        criterion,
    }
}

/// Two-estimate SCI with block-diagonal known part (the standard problem).
pub fn random_block_sci(n: usize, criterion: Criterion, rng: &mut ChaCha8Rng) -> SciProblem {
    let estimates: Vec<SciEstimate> = (0..2)
        .map(|_| SciEstimate {
            h: DMatrix::identity(n, n),
            x1: random_spd(n, 0.6, 2.5, rng),
        })
        .collect();
    let s1 = random_spd(n, 0.3, 1.2, rng);
    let s2 = random_spd(n, 0.3, 1.2, rng);
    let mut x2 = DMatrix::zeros(2 * n, 2 * n);
    x2.view_mut((0, 0), (n, n)).copy_from(s1.matrix());
    x2.view_mut((n, n), (n, n)).copy_from(s2.matrix());
    SciProblem {
        estimates,
        x2: SymMatrix::from_matrix(&x2).unwrap(),
        criterion,
    }
}

/// Two-estimate SCI with a dense known part (the generalized problem).
pub fn random_dense_sci(n: usize, criterion: Criterion, rng: &mut ChaCha8Rng) -> SciProblem {
    let estimates: Vec<SciEstimate> = (0..2)
        .map(|_| SciEstimate {
            h: random_invertible(n, rng),
            x1: random_spd(n, 0.6, 2.5, rng),
        })
        .collect();
    SciProblem {
        estimates,
        x2: random_spd(2 * n, 0.3, 1.5, rng),
        criterion,
    }
}

/// Random bound set for a generic OCI instance. The first bound always
/// covers the full correlation space (square full-rank selector), which
/// keeps the instance feasible whenever the observation map allows it;
/// the remaining bounds select random subspaces.
pub fn random_bounds(m: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<BoundSpec> {
    (0..count)
        .map(|i| {
            let o_b = if i == 0 { m } else { rng.random_range(1..=m) };
            let w = DMatrix::from_fn(o_b, m, |_, _| {
                let v: f64 = StandardNormal.sample(rng);
                v
            });
            BoundSpec {
                w,
                x: random_spd(o_b, 0.6, 2.5, rng),
            }
        })
        .collect()
}

/// Column-deficient variant: every observation map ignores the last
/// state direction, so the stacked map can never have full column rank.
pub fn deficient_full_state_ci(n: usize, criterion: Criterion, rng: &mut ChaCha8Rng) -> CiProblem {
    let mut proj = DMatrix::identity(n, n);
    proj[(n - 1, n - 1)] = 0.0;
    CiProblem {
        estimates: (0..2)
            .map(|_| CiEstimate {
                h: random_invertible(n, rng) * &proj,
                x: random_spd(n, 0.6, 2.5, rng),
            })
            .collect(),
        criterion,
    }
}

pub fn deficient_block_sci(n: usize, criterion: Criterion, rng: &mut ChaCha8Rng) -> SciProblem {
    let mut proj = DMatrix::identity(n, n);
    proj[(n - 1, n - 1)] = 0.0;
    let mut p = random_block_sci(n, criterion, rng);
    for e in &mut p.estimates {
        e.h = random_invertible(n, rng) * &proj;
    }
    p
}

/// Generic OCI instance in the PD regime with a non-identity C. The
/// observation map keeps singular values in [0.7, 1.6] so objectives
/// stay O(1).
pub fn random_generic_oci_pd(
    n: usize,
    criterion: Criterion,
    rng: &mut ChaCha8Rng,
) -> OciProblem {
    let o = n + rng.random_range(0..=1);
    let m = o;
    let u = random_orthonormal(o, rng);
    let v = random_orthonormal(n, rng);
    let mut d = DMatrix::zeros(o, n);
    for i in 0..n {
        d[(i, i)] = rng.random_range(0.7..1.6);
    }
    let h = u * d * v.transpose();
    OciProblem {
        h,
        r: random_spd(o, 0.4, 1.5, rng),
        c: random_invertible(m, rng),
        bounds: random_bounds(m, rng.random_range(1..=3), rng),
        criterion,
    }
}

/// Random simplex point.
pub fn random_simplex(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| -f64::ln(rng.random_range(1e-12..1.0))).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}
