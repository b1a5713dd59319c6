//! `niep` — solve nonnegative inverse eigenvalue problems from the command
//! line, benchmark the solvers over seeded random instances, and run the
//! verification suites.

use clap::{Args, Parser, Subcommand, ValueEnum};
use niep::bench::{
    derive_seed, format_rows, instance_for, run_benchmark_with_parallelism, starting_point,
    Algorithm, BenchmarkSpec, OutputFormat, Problem,
};
use niep::diagnostics::{
    adjoint_rank_bruteforce, derivative_test_suite, surjectivity_check, verify_solution,
    DerivativeTestReport, SolutionVerdict, SurjectivityReport,
};
use niep::linalg::Matrix;
use niep::newton_cg::{solve, IterationRecord, SolverConfig};
use niep::residual::ProblemInstance;
use niep::spectrum::{canonicalize_spectrum_default, parse_spectrum_file};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "niep",
    about = "Nonnegative inverse eigenvalue problem solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProblemArg {
    Niep,
    NiepPe,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    NewtonCg,
    Altproj,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Table,
}

impl From<ProblemArg> for Problem {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Niep => Problem::Niep,
            ProblemArg::NiepPe => Problem::NiepPe,
        }
    }
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::NewtonCg => Algorithm::NewtonCg,
            AlgorithmArg::Altproj => Algorithm::AltProj,
        }
    }
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Table => OutputFormat::Table,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Residual stopping tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Outer iteration cap for the Newton solver.
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    /// Inner CG budget per outer iteration (default n²).
    #[arg(long)]
    max_cg: Option<usize>,
    /// Iteration cap for the alternating-projection baseline.
    #[arg(long, default_value_t = 100_000)]
    altproj_max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_outer: self.max_outer,
            max_cg: self.max_cg,
            ..SolverConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and report the solution.
    Solve {
        /// Problem family for generated instances.
        #[arg(long, value_enum, default_value = "niep")]
        problem: ProblemArg,
        /// Instance size (ignored when --spectrum-file is given).
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Seed for the instance and the starting point.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solve for the spectrum in this file (one eigenvalue per line,
        /// `a` or `a b`; `#` comments) instead of a generated instance.
        #[arg(long)]
        spectrum_file: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "newton-cg")]
        algorithm: AlgorithmArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write a JSON report (trace, solution matrix, verification) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded benchmark sweeps and print an aggregate table.
    Bench {
        #[arg(long, value_enum, default_value = "niep")]
        problem: ProblemArg,
        #[arg(long, value_enum, default_value = "newton-cg")]
        algorithm: AlgorithmArg,
        /// Comma-separated list of sizes.
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
        /// Concurrent trials per size.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the derivative/adjoint and surjectivity diagnostics suites.
    Verify {
        /// Sizes for the derivative suites.
        #[arg(long, value_delimiter = ',', default_value = "3,5,8")]
        sizes: Vec<usize>,
        /// Number of seeds per suite.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Emit the machine-readable JSON record instead of a summary.
        #[arg(long)]
        json: bool,
    },
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Serialize)]
struct SolveReportJson {
    problem: String,
    algorithm: String,
    n: usize,
    seed: u64,
    converged: bool,
    failure_reason: Option<String>,
    outer_iterations: usize,
    function_evals: Option<usize>,
    total_cg: Option<usize>,
    wall_time: f64,
    final_residual: f64,
    final_grad_norm: Option<f64>,
    iterations: Vec<IterationRecord>,
    /// Gap trace for the baseline (empty for Newton).
    gap_trace: Vec<f64>,
    prescribed_spectrum: Vec<[f64; 2]>,
    solution_matrix: Vec<Vec<f64>>,
    verification: SolutionVerdictJson,
}

#[derive(Serialize)]
struct SolutionVerdictJson {
    nonnegative: bool,
    prescribed_exact: bool,
    matching_cost: f64,
    spectrum_attained: bool,
    pass: bool,
}

impl From<SolutionVerdict> for SolutionVerdictJson {
    fn from(v: SolutionVerdict) -> Self {
        SolutionVerdictJson {
            nonnegative: v.nonnegative,
            prescribed_exact: v.prescribed_exact,
            matching_cost: v.matching_cost,
            spectrum_attained: v.spectrum_attained,
            pass: v.pass,
        }
    }
}

fn cmd_solve(
    problem: ProblemArg,
    n: usize,
    seed: u64,
    spectrum_file: Option<PathBuf>,
    algorithm: AlgorithmArg,
    solver_args: &SolverArgs,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let instance = match &spectrum_file {
        Some(path) => {
            if problem == ProblemArg::NiepPe {
                return Err(
                    "--spectrum-file defines a plain problem; --problem niep-pe needs a generated instance"
                        .into(),
                );
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let raw = parse_spectrum_file(&text)?;
            let spec = canonicalize_spectrum_default(&raw).map_err(|e| e.to_string())?;
            ProblemInstance::niep(spec)
        }
        None => instance_for(problem.into(), n, seed),
    };
    let n = instance.n();
    let config = solver_args.config();
    let start_seed = derive_seed(seed, n, 0);

    let (report_json, converged) = match algorithm {
        AlgorithmArg::NewtonCg => {
            let x0 = instance.random_point(start_seed);
            let report = solve(&instance, &x0, &config);
            let c = instance.reconstruct(&report.final_point);
            let verdict = verify_solution(&instance, &report.final_point, 1e-6)
                .map_err(|e| e.to_string())?;
            println!(
                "newton-cg: n={n} converged={} IT={} NF={} NCG={} res={:.3e} grad={:.3e} ct={:.3}s",
                report.converged,
                report.outer_iterations(),
                report.total_function_evals,
                report.total_cg,
                report.final_residual,
                report.final_grad_norm,
                report.wall_time
            );
            println!(
                "verification: nonneg={} prescribed={} matching_cost={:.3e} pass={}",
                verdict.nonnegative, verdict.prescribed_exact, verdict.matching_cost, verdict.pass
            );
            let converged = report.converged && verdict.pass;
            (
                SolveReportJson {
                    problem: if instance.is_prescribed() { "niep-pe" } else { "niep" }.into(),
                    algorithm: "newton-cg".into(),
                    n,
                    seed,
                    converged: report.converged,
                    failure_reason: report.failure_reason.as_ref().map(|r| format!("{r:?}")),
                    outer_iterations: report.outer_iterations(),
                    function_evals: Some(report.total_function_evals),
                    total_cg: Some(report.total_cg),
                    wall_time: report.wall_time,
                    final_residual: report.final_residual,
                    final_grad_norm: Some(report.final_grad_norm),
                    iterations: report.iterations.clone(),
                    gap_trace: Vec::new(),
                    prescribed_spectrum: instance
                        .spec
                        .values
                        .iter()
                        .map(|z| [z.re, z.im])
                        .collect(),
                    solution_matrix: matrix_rows(&c),
                    verification: verdict.into(),
                },
                converged,
            )
        }
        AlgorithmArg::Altproj => {
            let (_, c0) = starting_point(&instance, start_seed);
            let report = niep::altproj::altproj_solve(
                &instance,
                &c0,
                config.tol,
                solver_args.altproj_max_iter,
            );
            println!(
                "altproj: n={n} converged={} IT={} gap={:.3e} ct={:.3}s",
                report.converged, report.iterations, report.final_gap, report.wall_time
            );
            let eigs = niep::linalg::eigenvalues(&report.final_c).map_err(|e| e.to_string())?;
            let (_, cost) = niep::linalg::match_multisets(&eigs, &instance.spec.values);
            let nonneg = report.final_c.iter().all(|&v| v >= 0.0);
            println!("verification: nonneg={nonneg} matching_cost={cost:.3e}");
            let verdict = SolutionVerdictJson {
                nonnegative: nonneg,
                prescribed_exact: true,
                matching_cost: cost,
                spectrum_attained: cost <= 1e-6,
                pass: nonneg && cost <= 1e-6,
            };
            let converged = report.converged;
            (
                SolveReportJson {
                    problem: if instance.is_prescribed() { "niep-pe" } else { "niep" }.into(),
                    algorithm: "altproj".into(),
                    n,
                    seed,
                    converged: report.converged,
                    failure_reason: report.failure.as_ref().map(|f| format!("{f:?}")),
                    outer_iterations: report.iterations,
                    function_evals: None,
                    total_cg: None,
                    wall_time: report.wall_time,
                    final_residual: report.final_gap,
                    final_grad_norm: None,
                    iterations: Vec::new(),
                    gap_trace: report.gap_trace.clone(),
                    prescribed_spectrum: instance
                        .spec
                        .values
                        .iter()
                        .map(|z| [z.re, z.im])
                        .collect(),
                    solution_matrix: matrix_rows(&report.final_c),
                    verification: verdict,
                },
                converged,
            )
        }
    };

    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report_json).expect("report serializes");
        std::fs::write(&path, json).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        println!("report written to {}", path.display());
    }
    Ok(converged)
}

#[derive(Serialize)]
struct VerifyRecord {
    derivative_suites: Vec<DerivativeTestReport>,
    surjectivity: Vec<SurjectivityCrossCheck>,
    all_passed: bool,
}

#[derive(Serialize)]
struct SurjectivityCrossCheck {
    n: usize,
    prescribed: bool,
    seed: u64,
    report: SurjectivityReport,
    bruteforce_rank: usize,
    ranks_agree: bool,
}

fn cmd_verify(sizes: &[usize], seeds: usize, json: bool) -> bool {
    let mut derivative_suites = Vec::new();
    for &n in sizes {
        let seed_list: Vec<u64> = (0..seeds as u64).collect();
        for problem in [Problem::Niep, Problem::NiepPe] {
            let instance = instance_for(problem, n, 7 + n as u64);
            derivative_suites.push(derivative_test_suite(&instance, &seed_list));
        }
    }

    let mut surjectivity = Vec::new();
    for n in [2usize, 3, 4] {
        let instance = instance_for(Problem::Niep, n, 11 + n as u64);
        for seed in 0..seeds.min(5) as u64 {
            let x = instance.random_point(500 + seed);
            let report = surjectivity_check(&instance, &x, 1e-10).unwrap();
            let brute = adjoint_rank_bruteforce(&instance, &x, 1e-10);
            surjectivity.push(SurjectivityCrossCheck {
                n,
                prescribed: false,
                seed,
                ranks_agree: report.rank == brute,
                bruteforce_rank: brute,
                report,
            });
        }
    }

    let all_passed = derivative_suites.iter().all(|r| r.all_passed)
        && surjectivity.iter().all(|s| s.ranks_agree);
    let record = VerifyRecord {
        derivative_suites,
        surjectivity,
        all_passed,
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&record).unwrap());
    } else {
        for suite in &record.derivative_suites {
            println!(
                "derivative suite n={} prescribed={}: {}",
                suite.n,
                suite.prescribed,
                if suite.all_passed { "pass" } else { "FAIL" }
            );
        }
        for s in &record.surjectivity {
            println!(
                "surjectivity n={} seed={}: rank {} vs brute-force {} — {}",
                s.n,
                s.seed,
                s.report.rank,
                s.bruteforce_rank,
                if s.ranks_agree { "agree" } else { "DISAGREE" }
            );
        }
        println!("verify: {}", if record.all_passed { "pass" } else { "FAIL" });
    }
    record.all_passed
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Solve {
            problem,
            n,
            seed,
            spectrum_file,
            algorithm,
            solver,
            out,
        } => match cmd_solve(problem, n, seed, spectrum_file, algorithm, &solver, out) {
            Ok(converged) => converged,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
        },
        Command::Bench {
            problem,
            algorithm,
            sizes,
            trials,
            base_seed,
            format,
            parallel,
            solver,
        } => {
            let mut spec = BenchmarkSpec::new(problem.into(), algorithm.into(), sizes);
            spec.trials = trials;
            spec.base_seed = base_seed;
            spec.solver = solver.config();
            spec.altproj_max_iter = solver.altproj_max_iter;
            spec.format = format.into();
            let rows = run_benchmark_with_parallelism(&spec, parallel);
            print!("{}", format_rows(&rows, spec.format));
            rows.iter().all(|r| r.failures == 0)
        }
        Command::Verify { sizes, seeds, json } => cmd_verify(&sizes, seeds, json),
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
