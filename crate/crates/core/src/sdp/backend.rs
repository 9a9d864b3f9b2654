//! Interior-point backend: lowers a [`ConicProgram`] onto Clarabel's
//! `min qᵀx  s.t.  Ax + s = b, s ∈ K` form.
//!
//! Matrix variables become their upper-triangle entries (column-major,
//! unscaled); PSD blocks become scaled-triangle cone rows. A log-det
//! objective is lowered with the standard determinant factorization:
//! maximize `Σ log Z_ii` over lower-triangular `Z` subject to
//! `[F  Z; Zᵀ  diag(Z)] ⪰ 0`, with each `log` modeled by an exponential
//! cone triple `(t_i, 1, Z_ii)`.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

use super::{
    ConicProgram, ConicSolver, MatrixExpr, Objective, SolveOutcome, SolveStatus, SolverOptions,
};

/// Default conic backend, built on the Clarabel interior-point solver.
pub struct ClarabelSolver;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Column-major upper-triangle index of entry `(i, j)` with `i ≤ j`.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn triangle_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Sparse triplet collector with row-major dedup per column.
struct TripletMatrix {
    cols: Vec<BTreeMap<usize, f64>>,
}

impl TripletMatrix {
    fn new(ncols: usize) -> Self {
        TripletMatrix {
            cols: vec![BTreeMap::new(); ncols],
        }
    }

    fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            *self.cols[col].entry(row).or_insert(0.0) += value;
        }
    }

    fn into_csc(self, nrows: usize) -> CscMatrix<f64> {
        let ncols = self.cols.len();
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in self.cols {
            for (r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
    }
}

/// Where each variable group lives inside the solver's `x`.
struct Layout {
    scalar_count: usize,
    matrix_base: Vec<usize>,
    matrix_dim: Vec<usize>,
    /// Per-matrix-variable magnitude estimate; the solver works on
    /// `X/scale` so that mixed-scale programs (tiny noise floors push
    /// the slack variable to the size of `HᵀR⁻¹H`) stay conditioned.
    var_scale: Vec<f64>,
    /// Base of the lower-triangular factor entries (log-det only).
    z_base: usize,
    /// Base of the log epigraph scalars (log-det only).
    t_base: usize,
    total: usize,
    logdet_dim: usize,
}

/// Largest data magnitude in the rows a matrix variable occupies, over
/// every expression it appears in; floored at 1.
fn matrix_var_scales(prog: &ConicProgram) -> Vec<f64> {
    let mut scales = vec![1.0f64; prog.matrix_vars.len()];
    let mut scan = |expr: &MatrixExpr| {
        for term in &expr.matrix_terms {
            let dim = prog.matrix_vars[term.var].dim;
            let rows = term.offset..term.offset + dim;
            let mut amax = expr.constant.view_range(rows.clone(), ..).amax();
            for (_, coeff) in &expr.scalar_terms {
                amax = amax.max(coeff.view_range(rows.clone(), ..).amax());
            }
            if amax.is_finite() {
                scales[term.var] = scales[term.var].max(amax);
            }
        }
    };
    for block in &prog.psd_blocks {
        scan(block);
    }
    if let Objective::MinNegLogDet(expr) = &prog.objective {
        scan(expr);
    }
    scales
}

impl Layout {
    fn new(prog: &ConicProgram) -> Self {
        let scalar_count = prog.scalar_vars.len();
        let mut next = scalar_count;
        let mut matrix_base = Vec::with_capacity(prog.matrix_vars.len());
        let mut matrix_dim = Vec::with_capacity(prog.matrix_vars.len());
        for v in &prog.matrix_vars {
            matrix_base.push(next);
            matrix_dim.push(v.dim);
            next += triangle_len(v.dim);
        }
        let logdet_dim = match &prog.objective {
            Objective::MinNegLogDet(expr) => expr.dim,
            _ => 0,
        };
        let z_base = next;
        next += triangle_len(logdet_dim);
        let t_base = next;
        next += logdet_dim;
        Layout {
            scalar_count,
            matrix_base,
            matrix_dim,
            var_scale: matrix_var_scales(prog),
            z_base,
            t_base,
            total: next,
            logdet_dim,
        }
    }

    fn matrix_entry(&self, var: usize, i: usize, j: usize) -> usize {
        let (p, q) = if i <= j { (i, j) } else { (j, i) };
        self.matrix_base[var] + svec_index(p, q)
    }

    /// Lower-triangle factor entry `(i, j)` with `i ≥ j`, column-major.
    fn z_entry(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j);
        let d = self.logdet_dim;
        let col_start: usize = (0..j).map(|k| d - k).sum();
        self.z_base + col_start + (i - j)
    }
}

/// Linear form of one affine-expression entry: constant plus
/// `(x index, coefficient)` pairs.
fn entry_terms(
    expr: &MatrixExpr,
    layout: &Layout,
    i: usize,
    j: usize,
) -> (f64, Vec<(usize, f64)>) {
    let constant = expr.constant[(i, j)];
    let mut terms = Vec::new();
    for (id, coeff) in &expr.scalar_terms {
        let c = coeff[(i, j)];
        if c != 0.0 {
            terms.push((*id, c));
        }
    }
    for term in &expr.matrix_terms {
        let d = layout.matrix_dim[term.var];
        let off = term.offset;
        if i >= off && i < off + d && j >= off && j < off + d {
            terms.push((
                layout.matrix_entry(term.var, i - off, j - off),
                term.sign * layout.var_scale[term.var],
            ));
        }
    }
    // fold duplicate x indices
    terms.sort_by_key(|t| t.0);
    let mut folded: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (idx, c) in terms {
        match folded.last_mut() {
            Some((last, acc)) if *last == idx => *acc += c,
            _ => folded.push((idx, c)),
        }
    }
    (constant, folded)
}

/// Emit the scaled-triangle rows of a PSD block starting at `row0`.
fn emit_psd_block(
    expr: &MatrixExpr,
    layout: &Layout,
    row0: usize,
    a: &mut TripletMatrix,
    b: &mut [f64],
) {
    for j in 0..expr.dim {
        for i in 0..=j {
            let row = row0 + svec_index(i, j);
            let scale = if i == j { 1.0 } else { SQRT2 };
            let (constant, terms) = entry_terms(expr, layout, i, j);
            b[row] = scale * constant;
            for (idx, c) in terms {
                a.add(row, idx, -scale * c);
            }
        }
    }
}

fn map_status(status: SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        // everything else carries no certificate either way: iteration or
        // time limits, stalled progress, reduced-accuracy solutions, and
        // dual infeasibility (which certifies unboundedness, not primal
        // infeasibility)
        _ => SolveStatus::NumericalTrouble,
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<SolveOutcome> {
        prog.validate()?;
        let layout = Layout::new(prog);

        let eq_rows = prog.linear_eqs.len();
        let nonneg_rows = prog.nonneg_vars.len();
        let psd_rows: usize = prog.psd_blocks.iter().map(|bk| triangle_len(bk.dim)).sum();
        let d = layout.logdet_dim;
        let logdet_rows = if d > 0 { triangle_len(2 * d) + 3 * d } else { 0 };
        let nrows = eq_rows + nonneg_rows + psd_rows + logdet_rows;

        let mut a = TripletMatrix::new(layout.total);
        let mut b = vec![0.0; nrows];
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let mut row = 0;
        if eq_rows > 0 {
            for eq in &prog.linear_eqs {
                b[row] = eq.rhs;
                for (id, c) in &eq.coeffs {
                    a.add(row, *id, *c);
                }
                row += 1;
            }
            cones.push(SupportedConeT::ZeroConeT(eq_rows));
        }
        if nonneg_rows > 0 {
            for id in &prog.nonneg_vars {
                a.add(row, *id, -1.0);
                row += 1;
            }
            cones.push(SupportedConeT::NonnegativeConeT(nonneg_rows));
        }
        for block in &prog.psd_blocks {
            emit_psd_block(block, &layout, row, &mut a, &mut b);
            row += triangle_len(block.dim);
            cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        }

        let mut q = vec![0.0; layout.total];
        match &prog.objective {
            Objective::MinTrace(var) => {
                let dim = prog.matrix_vars[*var].dim;
                for k in 0..dim {
                    q[layout.matrix_entry(*var, k, k)] = layout.var_scale[*var];
                }
            }
            Objective::MinNegLogDet(expr) => {
                // [F(x), Z; Zᵀ, diag(Z)] ⪰ 0 over lower-triangular Z
                let big = 2 * d;
                for j in 0..big {
                    for i in 0..=j {
                        let r = row + svec_index(i, j);
                        let scale = if i == j { 1.0 } else { SQRT2 };
                        if j < d {
                            let (constant, terms) = entry_terms(expr, &layout, i, j);
                            b[r] = scale * constant;
                            for (idx, c) in terms {
                                a.add(r, idx, -scale * c);
                            }
                        } else if i < d {
                            // upper-right block: Z[i, j-d], present iff i ≥ j-d
                            let zj = j - d;
                            if i >= zj {
                                a.add(r, layout.z_entry(i, zj), -scale);
                            }
                        } else if i == j {
                            a.add(r, layout.z_entry(i - d, i - d), -1.0);
                        }
                    }
                }
                row += triangle_len(big);
                cones.push(SupportedConeT::PSDTriangleConeT(big));
                // t_i ≤ log Z_ii via (t_i, 1, Z_ii) in the exponential cone
                for i in 0..d {
                    a.add(row, layout.t_base + i, -1.0);
                    b[row + 1] = 1.0;
                    a.add(row + 2, layout.z_entry(i, i), -1.0);
                    row += 3;
                    cones.push(SupportedConeT::ExponentialConeT());
                    q[layout.t_base + i] = -1.0;
                }
            }
        }
        debug_assert_eq!(row, nrows);

        let a = a.into_csc(nrows);
        let p = CscMatrix::zeros((layout.total, layout.total));
        let settings = DefaultSettings {
            verbose: opts.verbose,
            max_iter: opts.max_iter,
            tol_gap_abs: opts.gap_tol,
            tol_gap_rel: opts.gap_tol,
            tol_feas: opts.feas_tol,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::MalformedProgram(format!("backend rejected program: {e:?}")))?;
        solver.solve();

        let status = map_status(solver.solution.status);
        let x = &solver.solution.x;
        let scalar_values = x[..layout.scalar_count].to_vec();
        let matrix_values: Vec<SymMatrix> = prog
            .matrix_vars
            .iter()
            .enumerate()
            .map(|(v, var)| {
                let mut m = DMatrix::zeros(var.dim, var.dim);
                for j in 0..var.dim {
                    for i in 0..=j {
                        let val = x[layout.matrix_entry(v, i, j)] * layout.var_scale[v];
                        m[(i, j)] = val;
                        m[(j, i)] = val;
                    }
                }
                SymMatrix::from_matrix(&m).expect("symmetric by construction")
            })
            .collect();

        let (psd_residual, eq_residual) = if status == SolveStatus::Optimal {
            let mats: Vec<DMatrix<f64>> =
                matrix_values.iter().map(|m| m.matrix().clone()).collect();
            let mut psd = 0.0f64;
            for block in &prog.psd_blocks {
                let val = block.evaluate(&scalar_values, &mats);
                let min_eig = SymMatrix::symmetrize(&val)
                    .expect("square")
                    .min_eigenvalue();
                psd = psd.max((-min_eig).max(0.0));
            }
            let mut eq = 0.0f64;
            for lin in &prog.linear_eqs {
                let lhs: f64 = lin
                    .coeffs
                    .iter()
                    .map(|(id, c)| c * scalar_values[*id])
                    .sum();
                eq = eq.max((lhs - lin.rhs).abs());
            }
            (psd, eq)
        } else {
            (f64::NAN, f64::NAN)
        };

        Ok(SolveOutcome {
            status,
            scalar_values,
            matrix_values,
            objective: solver.solution.obj_val,
            psd_residual,
            eq_residual,
            iterations: solver.info.iterations as usize,
        })
    }
}
