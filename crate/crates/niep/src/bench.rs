//! Randomized experiment protocol: instance generation, seeded starting
//! points, and the benchmark harness.
//!
//! Instances follow the two standard families:
//!
//! * **Example 1 (plain)** — draw `Ĉ` with iid uniform `[0, 1)` entries and
//!   prescribe its spectrum.
//! * **Example 2 (prescribed entries)** — same `Ĉ`; additionally pin the
//!   entries with `0.2 ≤ Ĉ_ij ≤ 0.3` (so `|L| ≈ 0.1·n²`) to their values.
//!
//! All randomness flows through a seeded ChaCha8 stream; uniform doubles are
//! drawn by the standard 53-bit conversion. Per-sweep seeds are derived with
//! a SplitMix64 mix of `(base_seed, n, trial, stream)`, so sweeps are
//! order-independent and safely parallelizable: the instance for a size is
//! derived at trial index `u64::MAX`, and trial `t`'s starting point at
//! index `t`.
//!
//! Wall time is measured around the solve call only; generation and
//! verification are excluded.

use crate::altproj::{altproj_solve, AltProjFailure};
use crate::linalg::{eigenvalues, Matrix};
use crate::manifold::ManifoldPoint;
use crate::newton_cg::{solve, SolverConfig};
use crate::residual::ProblemInstance;
use crate::spectrum::{canonicalize_spectrum_default, PrescribedEntries, SpectrumSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Niep,
    NiepPe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NewtonCg,
    AltProj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    Table,
}

/// A benchmark sweep description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub problem: Problem,
    pub algorithm: Algorithm,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub solver: SolverConfig,
    /// Iteration cap for the alternating-projection baseline.
    pub altproj_max_iter: usize,
    pub format: OutputFormat,
}

impl BenchmarkSpec {
    pub fn new(problem: Problem, algorithm: Algorithm, sizes: Vec<usize>) -> Self {
        BenchmarkSpec {
            problem,
            algorithm,
            sizes,
            trials: 10,
            base_seed: 0,
            solver: SolverConfig::default(),
            altproj_max_iter: 100_000,
            format: OutputFormat::Table,
        }
    }

    pub fn validate(&self) {
        assert!(self.trials >= 1, "trials must be at least 1");
        assert!(!self.sizes.is_empty(), "sizes must be nonempty");
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-(size, trial) seed derivation.
pub fn derive_seed(base_seed: u64, n: usize, trial: u64) -> u64 {
    let mut state = base_seed;
    splitmix64(&mut state);
    state ^= n as u64;
    splitmix64(&mut state);
    state ^= trial;
    splitmix64(&mut state)
}

const INSTANCE_TRIAL_TAG: u64 = u64::MAX;

/// Uniform `[0, 1)` matrix from a seeded generator.
fn uniform_matrix(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, n, |_, _| rng.random::<f64>())
}

/// Plain instance: a hidden uniform nonnegative matrix and its spectrum.
/// Returns the spectrum and the hidden matrix (for reference; solvers never
/// see it).
pub fn generate_example1(n: usize, seed: u64) -> (SpectrumSpec, Matrix) {
    let c_hat = uniform_matrix(n, seed);
    let eigs = eigenvalues(&c_hat).expect("eigenvalues of the hidden matrix");
    let spec = canonicalize_spectrum_default(&eigs).expect("spectrum of a real matrix");
    (spec, c_hat)
}

/// Prescribed-entries instance: same hidden matrix; entries in `[0.2, 0.3]`
/// are pinned to their values.
pub fn generate_example2(n: usize, seed: u64) -> (SpectrumSpec, PrescribedEntries) {
    let c_hat = uniform_matrix(n, seed);
    let eigs = eigenvalues(&c_hat).expect("eigenvalues of the hidden matrix");
    let spec = canonicalize_spectrum_default(&eigs).expect("spectrum of a real matrix");
    let mut index_set_l = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if (0.2..=0.3).contains(&c_hat[(i, j)]) {
                index_set_l.push((i, j));
            }
        }
    }
    (spec, PrescribedEntries::new(n, index_set_l, &c_hat))
}

/// Builds the instance a sweep uses for size `n`.
pub fn instance_for(problem: Problem, n: usize, base_seed: u64) -> ProblemInstance {
    let instance_seed = derive_seed(base_seed, n, INSTANCE_TRIAL_TAG);
    match problem {
        Problem::Niep => {
            let (spec, _) = generate_example1(n, instance_seed);
            ProblemInstance::niep(spec)
        }
        Problem::NiepPe => {
            let (spec, pe) = generate_example2(n, instance_seed);
            ProblemInstance::niep_pe(spec, pe)
        }
    }
}

/// Seeded starting point and its encoded matrix `C⁰`.
pub fn starting_point(instance: &ProblemInstance, seed: u64) -> (ManifoldPoint, Matrix) {
    let x0 = instance.random_point(seed);
    let c0 = instance.reconstruct(&x0);
    (x0, c0)
}

/// One trial's figures. `function_evals`, `cg_iters`, and `final_grad_norm`
/// only apply to the Newton solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub n: usize,
    pub seed: u64,
    pub converged: bool,
    pub wall_time: f64,
    pub outer_iters: usize,
    pub function_evals: Option<usize>,
    pub cg_iters: Option<usize>,
    pub final_residual: f64,
    pub final_grad_norm: Option<f64>,
    /// Backtracking passes (Newton) — kept for the accounting identity
    /// `NF = IT + 1 + backtracks`.
    pub backtracks: Option<usize>,
    /// Residual trace for convergence-order estimation (Newton only).
    pub residual_trace: Option<Vec<f64>>,
}

/// Runs one seeded trial of the chosen algorithm on `instance`.
pub fn run_trial(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    seed: u64,
    solver: &SolverConfig,
    altproj_max_iter: usize,
) -> TrialResult {
    let n = instance.n();
    match algorithm {
        Algorithm::NewtonCg => {
            let x0 = instance.random_point(seed);
            let report = solve(instance, &x0, solver);
            let backtracks = report.iterations.iter().map(|r| r.backtracks).sum();
            TrialResult {
                n,
                seed,
                converged: report.converged,
                wall_time: report.wall_time,
                outer_iters: report.outer_iterations(),
                function_evals: Some(report.total_function_evals),
                cg_iters: Some(report.total_cg),
                final_residual: report.final_residual,
                final_grad_norm: Some(report.final_grad_norm),
                backtracks: Some(backtracks),
                residual_trace: Some(report.residual_trace()),
            }
        }
        Algorithm::AltProj => {
            let (_, c0) = starting_point(instance, seed);
            let report = altproj_solve(instance, &c0, solver.tol, altproj_max_iter);
            debug_assert!(
                report.failure != Some(AltProjFailure::SchurFailed),
                "Schur failure inside the baseline"
            );
            TrialResult {
                n,
                seed,
                converged: report.converged,
                wall_time: report.wall_time,
                outer_iters: report.iterations,
                function_evals: None,
                cg_iters: None,
                final_residual: report.final_gap,
                final_grad_norm: None,
                backtracks: None,
                residual_trace: None,
            }
        }
    }
}

/// Aggregated figures for one size: means over all trials (failed trials
/// included, as in the reference protocol) plus the failure count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub problem: Problem,
    pub algorithm: Algorithm,
    pub n: usize,
    pub trials: usize,
    pub ct_mean_s: f64,
    pub it_mean: f64,
    pub nf_mean: Option<f64>,
    pub ncg_mean: Option<f64>,
    pub res_mean: f64,
    pub grad_mean: Option<f64>,
    pub failures: usize,
    pub trial_results: Vec<TrialResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn aggregate(spec: &BenchmarkSpec, n: usize, trial_results: Vec<TrialResult>) -> AggregateRow {
    let failures = trial_results.iter().filter(|t| !t.converged).count();
    let opt_mean = |f: &dyn Fn(&TrialResult) -> Option<f64>| -> Option<f64> {
        if trial_results.iter().all(|t| f(t).is_some()) {
            Some(mean(trial_results.iter().map(|t| f(t).unwrap())))
        } else {
            None
        }
    };
    AggregateRow {
        problem: spec.problem,
        algorithm: spec.algorithm,
        n,
        trials: trial_results.len(),
        ct_mean_s: mean(trial_results.iter().map(|t| t.wall_time)),
        it_mean: mean(trial_results.iter().map(|t| t.outer_iters as f64)),
        nf_mean: opt_mean(&|t| t.function_evals.map(|v| v as f64)),
        ncg_mean: opt_mean(&|t| t.cg_iters.map(|v| v as f64)),
        res_mean: mean(trial_results.iter().map(|t| t.final_residual)),
        grad_mean: opt_mean(&|t| t.final_grad_norm),
        failures,
        trial_results,
    }
}

/// Runs the sweep sequentially.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Vec<AggregateRow> {
    run_benchmark_with_parallelism(spec, 1)
}

/// Runs the sweep with up to `parallelism` concurrent trials per size.
/// Aggregation is a deterministic reduction in trial-index order, so the
/// output does not depend on `parallelism` (except wall times).
pub fn run_benchmark_with_parallelism(spec: &BenchmarkSpec, parallelism: usize) -> Vec<AggregateRow> {
    spec.validate();
    let parallelism = parallelism.max(1);
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &n in &spec.sizes {
        let instance = instance_for(spec.problem, n, spec.base_seed);
        let seeds: Vec<u64> = (0..spec.trials as u64)
            .map(|t| derive_seed(spec.base_seed, n, t))
            .collect();
        let results = run_trials(spec, &instance, &seeds, parallelism);
        rows.push(aggregate(spec, n, results));
    }
    rows
}

#[cfg(not(target_arch = "wasm32"))]
fn run_trials(
    spec: &BenchmarkSpec,
    instance: &ProblemInstance,
    seeds: &[u64],
    parallelism: usize,
) -> Vec<TrialResult> {
    if parallelism <= 1 || seeds.len() <= 1 {
        return seeds
            .iter()
            .map(|&s| run_trial(instance, spec.algorithm, s, &spec.solver, spec.altproj_max_iter))
            .collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<TrialResult>> = vec![None; seeds.len()];
    let slot_refs: Vec<std::sync::Mutex<&mut Option<TrialResult>>> =
        slots.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let result = run_trial(
                    instance,
                    spec.algorithm,
                    seeds[i],
                    &spec.solver,
                    spec.altproj_max_iter,
                );
                **slot_refs[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("trial completed")).collect()
}

#[cfg(target_arch = "wasm32")]
fn run_trials(
    spec: &BenchmarkSpec,
    instance: &ProblemInstance,
    seeds: &[u64],
    _parallelism: usize,
) -> Vec<TrialResult> {
    seeds
        .iter()
        .map(|&s| run_trial(instance, spec.algorithm, s, &spec.solver, spec.altproj_max_iter))
        .collect()
}

fn problem_name(p: Problem) -> &'static str {
    match p {
        Problem::Niep => "niep",
        Problem::NiepPe => "niep-pe",
    }
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::NewtonCg => "newton-cg",
        Algorithm::AltProj => "altproj",
    }
}

fn fmt_opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Fixed-column CSV: `problem,algorithm,n,trials,ct_mean_s,it_mean,nf_mean,
/// ncg_mean,res_mean,grad_mean,failures`. Columns that do not apply to the
/// algorithm stay empty.
pub fn format_csv(rows: &[AggregateRow]) -> String {
    let mut out =
        String::from("problem,algorithm,n,trials,ct_mean_s,it_mean,nf_mean,ncg_mean,res_mean,grad_mean,failures\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.2},{},{},{:.6e},{},{}\n",
            problem_name(r.problem),
            algorithm_name(r.algorithm),
            r.n,
            r.trials,
            r.ct_mean_s,
            r.it_mean,
            fmt_opt(r.nf_mean, |v| format!("{v:.2}")),
            fmt_opt(r.ncg_mean, |v| format!("{v:.2}")),
            r.res_mean,
            fmt_opt(r.grad_mean, |v| format!("{v:.6e}")),
            r.failures,
        ));
    }
    out
}

/// JSON mirror of the CSV with per-trial arrays included.
pub fn format_json(rows: &[AggregateRow]) -> String {
    serde_json::to_string_pretty(rows).expect("benchmark rows serialize")
}

/// Human-readable table. Rows where some trial failed carry the `*` flag on
/// the residual column.
pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut out = format!(
        "{:<8} {:<10} {:>5} {:>7} {:>10} {:>8} {:>8} {:>9} {:>12} {:>12} {:>5}\n",
        "problem", "algorithm", "n", "trials", "ct_mean_s", "it", "nf", "ncg", "res", "grad", "fail"
    );
    for r in rows {
        let res = format!(
            "{:.3e}{}",
            r.res_mean,
            if r.failures > 0 { "*" } else { "" }
        );
        out.push_str(&format!(
            "{:<8} {:<10} {:>5} {:>7} {:>10.4} {:>8.1} {:>8} {:>9} {:>12} {:>12} {:>5}\n",
            problem_name(r.problem),
            algorithm_name(r.algorithm),
            r.n,
            r.trials,
            r.ct_mean_s,
            r.it_mean,
            fmt_opt(r.nf_mean, |v| format!("{v:.1}")),
            fmt_opt(r.ncg_mean, |v| format!("{v:.1}")),
            res,
            fmt_opt(r.grad_mean, |v| format!("{v:.3e}")),
            r.failures,
        ));
    }
    out
}

pub fn format_rows(rows: &[AggregateRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => format_csv(rows),
        OutputFormat::Json => format_json(rows),
        OutputFormat::Table => format_table(rows),
    }
}
