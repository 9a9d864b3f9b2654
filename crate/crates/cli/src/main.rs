//! Command-line front end: parse problem files, dispatch solvers, run
//! verification, emit result and report documents.
//!
//! Exit codes: 0 success (and all checks passed for `verify`), 1 input
//! error, 2 infeasible problem, 3 solver failure, 4 verification checks
//! failed.

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use ocifuse_cli::document::{
    parse_document, ParsedProblem, ProblemDocument, SolveDocument, VerifyConsistencySection,
    VerifyDocument, VerifyOracleSection, VerifySolveSection, SCHEMA_VERSION,
};
use ocifuse::fusion::{feasibility_report_pd, feasibility_report_zero};
use ocifuse::linalg::DEFAULT_RANK_RTOL;
use ocifuse::oracle::{consistency_audit, default_grid_step, oracle_solve, MAX_GRID_WEIGHTS};
use ocifuse::problem::{ci_to_oci, sci_to_oci, Criterion, NoiseRegime};
use ocifuse::{Error, FusionResult, SolverOptions};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ocifuse",
    version,
    about = "Covariance-intersection fusion (CI, SCI, OCI) via semidefinite programming"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ci,
    Sci,
    Oci,
}

impl KindArg {
    fn name(self) -> &'static str {
        match self {
            KindArg::Ci => "ci",
            KindArg::Sci => "sci",
            KindArg::Oci => "oci",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Trace,
    Logdet,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Criterion {
        match c {
            CriterionArg::Trace => Criterion::Trace,
            CriterionArg::Logdet => Criterion::LogDet,
        }
    }
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Override the document's optimality criterion
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Cone feasibility tolerance for the SDP backend
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    /// Duality gap tolerance for the SDP backend
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    /// Iteration cap for the SDP backend
    #[arg(long, default_value_t = 200)]
    max_iter: u32,
    /// Print the backend's iteration log (goes to standard output;
    /// combine with --output to keep the result document separate)
    #[arg(long)]
    verbose: bool,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            feas_tol: self.feas_tol,
            gap_tol: self.gap_tol,
            max_iter: self.max_iter,
            verbose: self.verbose,
        }
    }
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Write the result document here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
    /// Suppress the human-readable summary on standard error
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a fusion problem; writes gain, bound, weights and objective
    Solve {
        /// Problem family the document must declare
        #[arg(value_enum)]
        kind: KindArg,
        /// Input path, or "-" for standard input
        input: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Solve, then cross-check against the grid oracle and run the
    /// consistency audit over sampled admissible correlations
    Verify {
        /// Input path, or "-" for standard input
        input: String,
        /// Weight-grid spacing (default picked from the bound count)
        #[arg(long)]
        grid_step: Option<f64>,
        /// Admissible correlations sampled by the consistency audit
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Seed for the audit sampler
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Report the feasibility rank condition without solving
    Check {
        /// Input path, or "-" for standard input
        input: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            kind,
            input,
            solver,
            out,
        } => cmd_solve(kind, &input, &solver, &out),
        Command::Verify {
            input,
            grid_step,
            samples,
            seed,
            solver,
            out,
        } => cmd_verify(&input, grid_step, samples, seed, &solver, &out),
        Command::Check { input } => cmd_check(&input),
    };
    ExitCode::from(code)
}

fn fail(code: u8, message: String) -> u8 {
    eprintln!("error: {message}");
    code
}

fn read_input(path: &str) -> Result<String, u8> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| fail(EXIT_INPUT, format!("reading standard input: {e}")))?;
        Ok(buf)
    } else {
        fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("reading {path}: {e}")))
    }
}

fn load_problem(path: &str) -> Result<(ParsedProblem, Option<DVector<f64>>), u8> {
    let text = read_input(path)?;
    let doc: ProblemDocument = serde_json::from_str(&text)
        .map_err(|e| fail(EXIT_INPUT, format!("malformed document: {e}")))?;
    parse_document(&doc).map_err(|violations| {
        eprintln!("error: invalid problem document:");
        for v in &violations {
            eprintln!("  - {v}");
        }
        EXIT_INPUT
    })
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::SolverFailure(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn dispatch_solve(problem: &ParsedProblem, opts: &SolverOptions) -> Result<FusionResult, Error> {
    match problem {
        ParsedProblem::Ci(p) => ocifuse::solve_ci(p, opts),
        ParsedProblem::Sci(p) => ocifuse::solve_sci(p, opts),
        ParsedProblem::Oci(p) => ocifuse::solve_oci(p, opts),
    }
}

fn emit(document: &impl serde::Serialize, out: &OutputArgs) -> Result<(), u8> {
    let json = serde_json::to_string_pretty(document).expect("serializable document");
    match &out.output {
        Some(path) => fs::write(path, json + "\n")
            .map_err(|e| fail(EXIT_INPUT, format!("writing {}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cmd_solve(kind: KindArg, input: &str, solver: &SolverArgs, out: &OutputArgs) -> u8 {
    let (mut problem, z) = match load_problem(input) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if problem.kind() != kind.name() {
        return fail(
            EXIT_INPUT,
            format!(
                "document declares kind \"{}\" but the subcommand expects \"{}\"",
                problem.kind(),
                kind.name()
            ),
        );
    }
    if let Some(c) = solver.criterion {
        problem.set_criterion(c.into());
    }
    let result = match dispatch_solve(&problem, &solver.options()) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e.to_string()),
    };
    let fused = z
        .as_ref()
        .map(|z| ocifuse::fuse_estimates(&result.gain, z).expect("dimensions validated"))
        .map(|v| v.iter().copied().collect());
    let doc = SolveDocument::new(&problem, &result, fused);
    if let Err(code) = emit(&doc, out) {
        return code;
    }
    if !out.quiet {
        eprintln!(
            "solved {} ({} weights, objective {:.6e}, {} iterations)",
            problem.kind(),
            result.weights.len(),
            result.objective,
            result.diagnostics.iterations
        );
    }
    0
}

fn cmd_verify(
    input: &str,
    grid_step: Option<f64>,
    samples: usize,
    seed: u64,
    solver: &SolverArgs,
    out: &OutputArgs,
) -> u8 {
    let (mut problem, _z) = match load_problem(input) {
        Ok(p) => p,
        Err(code) => return code,
    };
    if let Some(c) = solver.criterion {
        problem.set_criterion(c.into());
    }
    let result = match dispatch_solve(&problem, &solver.options()) {
        Ok(r) => r,
        Err(e) => return fail(exit_code_for(&e), e.to_string()),
    };
    let oci = match &problem {
        ParsedProblem::Ci(p) => ci_to_oci(p).expect("validated"),
        ParsedProblem::Sci(p) => sci_to_oci(p).expect("validated"),
        ParsedProblem::Oci(p) => p.clone(),
    };

    let weight_count = oci.bounds.len();
    let step = grid_step.or_else(|| default_grid_step(weight_count));
    let oracle_section = match step {
        Some(step) if weight_count <= MAX_GRID_WEIGHTS => match oracle_solve(&oci, step) {
            Ok(oracle) => {
                let gap = oracle.objective - result.objective;
                // the grid resolves the optimum to O(step²); the 1e-4
                // floor matches the solver-side agreement tolerance
                let tolerance = (2.5 * step * step).max(1e-4);
                let pass = gap >= -1e-6 && gap.abs() <= tolerance;
                VerifyOracleSection {
                    ran: true,
                    skip_reason: None,
                    grid_step: Some(step),
                    objective: Some(oracle.objective),
                    gap: Some(gap),
                    skipped_points: Some(oracle.skipped),
                    agreement_tolerance: Some(tolerance),
                    pass,
                }
            }
            Err(e) => return fail(exit_code_for(&e), format!("grid oracle failed: {e}")),
        },
        _ => {
            let reason = format!(
                "grid verification supports at most {MAX_GRID_WEIGHTS} bounds, got {weight_count}"
            );
            if !out.quiet {
                eprintln!("warning: {reason}; consistency audit still runs");
            }
            VerifyOracleSection {
                ran: false,
                skip_reason: Some(reason),
                grid_step: None,
                objective: None,
                gap: None,
                skipped_points: None,
                agreement_tolerance: None,
                pass: true,
            }
        }
    };

    let report = consistency_audit(&result, &oci, samples, seed);
    let consistency = VerifyConsistencySection {
        samples: report.samples,
        worst_margin: report.worst_margin,
        pass: report.pass,
    };

    let pass = oracle_section.pass && consistency.pass;
    let doc = VerifyDocument {
        version: SCHEMA_VERSION.into(),
        kind: problem.kind().into(),
        pass,
        solve: VerifySolveSection {
            status: "optimal".into(),
            objective: result.objective,
        },
        oracle: oracle_section,
        consistency,
    };
    if let Err(code) = emit(&doc, out) {
        return code;
    }
    if !out.quiet {
        eprintln!(
            "verify {}: {}",
            problem.kind(),
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if pass {
        0
    } else {
        EXIT_VERIFY_FAILED
    }
}

fn cmd_check(input: &str) -> u8 {
    let (problem, _z) = match load_problem(input) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let (label, report) = match &problem {
        ParsedProblem::Ci(p) => {
            let oci = ci_to_oci(p).expect("validated");
            let n = oci.state_dim();
            let rank = ocifuse::linalg::rank(&oci.h, DEFAULT_RANK_RTOL);
            if rank == n {
                println!("feasible (H full column rank: {rank}/{n})");
                return 0;
            }
            println!("infeasible (rank {rank} < {n})");
            return EXIT_INFEASIBLE;
        }
        ParsedProblem::Sci(p) => {
            let oci = sci_to_oci(p).expect("validated");
            let n = oci.state_dim();
            let rank = ocifuse::linalg::rank(&oci.h, DEFAULT_RANK_RTOL);
            if rank == n {
                println!("feasible (H full column rank: {rank}/{n})");
                return 0;
            }
            println!("infeasible (rank {rank} < {n})");
            return EXIT_INFEASIBLE;
        }
        ParsedProblem::Oci(p) => match p.regime() {
            NoiseRegime::Zero => (
                "HᵀC⁻ᵀWᵀWC⁻¹H",
                feasibility_report_zero(p).expect("validated"),
            ),
            NoiseRegime::PositiveDefinite => (
                "HᵀR⁻¹(R − C(WᵀW + CᵀR⁻¹C)⁺Cᵀ)R⁻¹H",
                feasibility_report_pd(p).expect("validated"),
            ),
            NoiseRegime::Unsupported => {
                return fail(EXIT_INPUT, "R must be PD or exactly zero".into())
            }
        },
    };
    if report.feasible() {
        println!(
            "feasible ({label} rank: {}/{})",
            report.rank, report.required
        );
        0
    } else {
        println!(
            "infeasible ({label} rank {} < {})",
            report.rank, report.required
        );
        EXIT_INFEASIBLE
    }
}
