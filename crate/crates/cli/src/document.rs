//! Problem and result documents: JSON with matrices as row-major nested
//! arrays. Parsing enumerates every schema violation instead of stopping
//! at the first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ocifuse::linalg::SymMatrix;
use ocifuse::problem::{
    BoundSpec, CiEstimate, CiProblem, Criterion, OciProblem, SciEstimate, SciProblem,
};

pub const SCHEMA_VERSION: &str = "1";

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub h: Rows,
    /// Covariance bound (CI problems).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Rows>,
    /// Bound on the unknown-correlation component (SCI problems).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x1: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundDoc {
    pub w: Rows,
    pub x: Rows,
}

/// On-disk problem description. `kind` selects which fields apply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub version: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
    /// CI and SCI estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<EstimateDoc>>,
    /// SCI known covariance of the stacked second components.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x2: Option<Rows>,
    /// OCI fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<BoundDoc>>,
    /// Optional stacked estimate vector to fuse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum ParsedProblem {
    Ci(CiProblem),
    Sci(SciProblem),
    Oci(OciProblem),
}

impl ParsedProblem {
    pub fn kind(&self) -> &'static str {
        match self {
            ParsedProblem::Ci(_) => "ci",
            ParsedProblem::Sci(_) => "sci",
            ParsedProblem::Oci(_) => "oci",
        }
    }

    pub fn criterion(&self) -> Criterion {
        match self {
            ParsedProblem::Ci(p) => p.criterion,
            ParsedProblem::Sci(p) => p.criterion,
            ParsedProblem::Oci(p) => p.criterion,
        }
    }

    pub fn set_criterion(&mut self, criterion: Criterion) {
        match self {
            ParsedProblem::Ci(p) => p.criterion = criterion,
            ParsedProblem::Sci(p) => p.criterion = criterion,
            ParsedProblem::Oci(p) => p.criterion = criterion,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            ParsedProblem::Ci(p) => p.obs_dim(),
            ParsedProblem::Sci(p) => p.obs_dim(),
            ParsedProblem::Oci(p) => p.obs_dim(),
        }
    }
}

fn matrix_from_rows(
    field: &str,
    rows: &Rows,
    violations: &mut Vec<String>,
) -> Option<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        violations.push(format!("{field}: matrix must be nonempty"));
        return None;
    }
    let cols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            violations.push(format!(
                "{field}: row {i} has {} entries, expected {cols}",
                row.len()
            ));
            return None;
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            violations.push(format!("{field}: non-finite value {v} in row {i}"));
            return None;
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Some(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn sym_from_rows(field: &str, rows: &Rows, violations: &mut Vec<String>) -> Option<SymMatrix> {
    let m = matrix_from_rows(field, rows, violations)?;
    match SymMatrix::from_matrix(&m) {
        Ok(s) => Some(s),
        Err(e) => {
            violations.push(format!("{field}: {e}"));
            None
        }
    }
}

fn parse_criterion(doc: &ProblemDocument, violations: &mut Vec<String>) -> Criterion {
    match doc.criterion.as_deref() {
        None | Some("trace") => Criterion::Trace,
        Some("logdet") => Criterion::LogDet,
        Some(other) => {
            violations.push(format!(
                "criterion: expected \"trace\" or \"logdet\", got \"{other}\""
            ));
            Criterion::Trace
        }
    }
}

/// Builds the typed problem, returning every violation found. The
/// optional stacked estimate vector rides along when present.
pub fn parse_document(
    doc: &ProblemDocument,
) -> Result<(ParsedProblem, Option<DVector<f64>>), Vec<String>> {
    let mut violations = Vec::new();
    if doc.version != SCHEMA_VERSION {
        violations.push(format!(
            "version: expected \"{SCHEMA_VERSION}\", got \"{}\"",
            doc.version
        ));
    }
    let criterion = parse_criterion(doc, &mut violations);

    let parsed = match doc.kind.as_str() {
        "ci" => {
            let mut estimates = Vec::new();
            match &doc.estimates {
                None => violations.push("estimates: required for kind \"ci\"".into()),
                Some(docs) => {
                    for (i, e) in docs.iter().enumerate() {
                        let h = matrix_from_rows(&format!("estimates[{i}].h"), &e.h, &mut violations);
                        let x = match &e.x {
                            Some(rows) => {
                                sym_from_rows(&format!("estimates[{i}].x"), rows, &mut violations)
                            }
                            None => {
                                violations
                                    .push(format!("estimates[{i}].x: required for kind \"ci\""));
                                None
                            }
                        };
                        if let (Some(h), Some(x)) = (h, x) {
                            estimates.push(CiEstimate { h, x });
                        }
                    }
                }
            }
            let p = CiProblem {
                estimates,
                criterion,
            };
            violations.extend(p.validate());
            ParsedProblem::Ci(p)
        }
        "sci" => {
            let mut estimates = Vec::new();
            match &doc.estimates {
                None => violations.push("estimates: required for kind \"sci\"".into()),
                Some(docs) => {
                    for (i, e) in docs.iter().enumerate() {
                        let h = matrix_from_rows(&format!("estimates[{i}].h"), &e.h, &mut violations);
                        let x1 = match &e.x1 {
                            Some(rows) => {
                                sym_from_rows(&format!("estimates[{i}].x1"), rows, &mut violations)
                            }
                            None => {
                                violations
                                    .push(format!("estimates[{i}].x1: required for kind \"sci\""));
                                None
                            }
                        };
                        if let (Some(h), Some(x1)) = (h, x1) {
                            estimates.push(SciEstimate { h, x1 });
                        }
                    }
                }
            }
            let x2 = match &doc.x2 {
                Some(rows) => sym_from_rows("x2", rows, &mut violations),
                None => {
                    violations.push("x2: required for kind \"sci\"".into());
                    None
                }
            };
            let o: usize = estimates.iter().map(|e| e.h.nrows()).sum();
            let p = SciProblem {
                estimates,
                x2: x2.unwrap_or_else(|| SymMatrix::zeros(o)),
                criterion,
            };
            violations.extend(p.validate());
            ParsedProblem::Sci(p)
        }
        "oci" => {
            let h = doc
                .h
                .as_ref()
                .map(|rows| matrix_from_rows("h", rows, &mut violations))
                .unwrap_or_else(|| {
                    violations.push("h: required for kind \"oci\"".into());
                    None
                });
            let r = doc
                .r
                .as_ref()
                .map(|rows| sym_from_rows("r", rows, &mut violations))
                .unwrap_or_else(|| {
                    violations.push("r: required for kind \"oci\"".into());
                    None
                });
            let c = doc
                .c
                .as_ref()
                .map(|rows| matrix_from_rows("c", rows, &mut violations))
                .unwrap_or_else(|| {
                    violations.push("c: required for kind \"oci\"".into());
                    None
                });
            let mut bounds = Vec::new();
            match &doc.bounds {
                None => violations.push("bounds: required for kind \"oci\"".into()),
                Some(docs) => {
                    for (i, b) in docs.iter().enumerate() {
                        let w = matrix_from_rows(&format!("bounds[{i}].w"), &b.w, &mut violations);
                        let x = sym_from_rows(&format!("bounds[{i}].x"), &b.x, &mut violations);
                        if let (Some(w), Some(x)) = (w, x) {
                            bounds.push(BoundSpec { w, x });
                        }
                    }
                }
            }
            match (h, r, c) {
                (Some(h), Some(r), Some(c)) => {
                    let p = OciProblem {
                        h,
                        r,
                        c,
                        bounds,
                        criterion,
                    };
                    violations.extend(p.validate());
                    ParsedProblem::Oci(p)
                }
                _ => return Err(violations),
            }
        }
        other => {
            violations.push(format!(
                "kind: expected \"ci\", \"sci\" or \"oci\", got \"{other}\""
            ));
            return Err(violations);
        }
    };

    let z = doc.z.as_ref().map(|v| DVector::from_row_slice(v));
    if let Some(z) = &z {
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            violations.push(format!("z: non-finite value {bad}"));
        }
        if z.len() != parsed.obs_dim() {
            violations.push(format!(
                "z: length {} does not match stacked observation dimension {}",
                z.len(),
                parsed.obs_dim()
            ));
        }
    }

    if violations.is_empty() {
        Ok((parsed, z))
    } else {
        Err(violations)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn criterion_name(c: Criterion) -> String {
    match c {
        Criterion::Trace => "trace".into(),
        Criterion::LogDet => "logdet".into(),
    }
}

/// Inverse of [`parse_document`], for round-tripping.
pub fn to_document(problem: &ParsedProblem, z: Option<&DVector<f64>>) -> ProblemDocument {
    let mut doc = ProblemDocument {
        version: SCHEMA_VERSION.into(),
        kind: problem.kind().into(),
        criterion: Some(criterion_name(problem.criterion())),
        estimates: None,
        x2: None,
        h: None,
        r: None,
        c: None,
        bounds: None,
        z: z.map(|v| v.iter().copied().collect()),
    };
    match problem {
        ParsedProblem::Ci(p) => {
            doc.estimates = Some(
                p.estimates
                    .iter()
                    .map(|e| EstimateDoc {
                        h: rows_of(&e.h),
                        x: Some(rows_of(e.x.matrix())),
                        x1: None,
                    })
                    .collect(),
            );
        }
        ParsedProblem::Sci(p) => {
            doc.estimates = Some(
                p.estimates
                    .iter()
                    .map(|e| EstimateDoc {
                        h: rows_of(&e.h),
                        x: None,
                        x1: Some(rows_of(e.x1.matrix())),
                    })
                    .collect(),
            );
            doc.x2 = Some(rows_of(p.x2.matrix()));
        }
        ParsedProblem::Oci(p) => {
            doc.h = Some(rows_of(&p.h));
            doc.r = Some(rows_of(p.r.matrix()));
            doc.c = Some(rows_of(&p.c));
            doc.bounds = Some(
                p.bounds
                    .iter()
                    .map(|b| BoundDoc {
                        w: rows_of(&b.w),
                        x: rows_of(b.x.matrix()),
                    })
                    .collect(),
            );
        }
    }
    doc
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsDoc {
    pub iterations: usize,
    pub psd_residual: f64,
    pub eq_residual: f64,
}

/// Result document written by `solve`.
#[derive(Debug, Serialize)]
pub struct SolveDocument {
    pub version: String,
    pub kind: String,
    pub status: String,
    pub criterion: String,
    pub objective: f64,
    pub omega: Vec<f64>,
    pub k: Rows,
    pub b: Rows,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fused: Option<Vec<f64>>,
    pub diagnostics: DiagnosticsDoc,
}

impl SolveDocument {
    pub fn new(
        problem: &ParsedProblem,
        result: &ocifuse::FusionResult,
        fused: Option<Vec<f64>>,
    ) -> Self {
        SolveDocument {
            version: SCHEMA_VERSION.into(),
            kind: problem.kind().into(),
            status: "optimal".into(),
            criterion: criterion_name(problem.criterion()),
            objective: result.objective,
            omega: result.weights.clone(),
            k: rows_of(&result.gain),
            b: rows_of(result.bound.matrix()),
            b1: result.split.as_ref().map(|s| rows_of(s.b1.matrix())),
            b2: result.split.as_ref().map(|s| rows_of(s.b2.matrix())),
            fused,
            diagnostics: DiagnosticsDoc {
                iterations: result.diagnostics.iterations,
                psd_residual: result.diagnostics.psd_residual,
                eq_residual: result.diagnostics.eq_residual,
            },
        }
    }
}

/// Report written by `verify`.
#[derive(Debug, Serialize)]
pub struct VerifyDocument {
    pub version: String,
    pub kind: String,
    pub pass: bool,
    pub solve: VerifySolveSection,
    pub oracle: VerifyOracleSection,
    pub consistency: VerifyConsistencySection,
}

#[derive(Debug, Serialize)]
pub struct VerifySolveSection {
    pub status: String,
    pub objective: f64,
}

#[derive(Debug, Serialize)]
pub struct VerifyOracleSection {
    pub ran: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// oracle objective minus solver objective
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement_tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyConsistencySection {
    pub samples: usize,
    pub worst_margin: f64,
    pub pass: bool,
}
