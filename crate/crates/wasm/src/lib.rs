//! Browser bindings for the NIEP solvers.
//!
//! Three operations are exported, all returning JSON strings so the page
//! needs nothing beyond `JSON.parse`:
//!
//! * [`solve_demo`] — generate a seeded random instance (plain or with
//!   prescribed entries) and solve it with the Newton-CG solver, the
//!   alternating-projection baseline, or both, returning the residual
//!   traces, the solution matrix, and target/achieved spectra.
//! * [`solve_spectrum`] — same, for a user-typed spectrum in the text
//!   format (one eigenvalue per line, `a` or `a b`).
//! * [`spectrum_preview`] — canonicalize a typed spectrum and return the
//!   canonical values plus the block structure of `Λ` and the free-pattern
//!   mask, for live feedback while editing.

use niep::altproj::altproj_solve;
use niep::bench::{derive_seed, instance_for, starting_point, Problem};
use niep::diagnostics::verify_solution;
use niep::linalg::Matrix;
use niep::newton_cg::{solve, SolverConfig};
use niep::residual::ProblemInstance;
use niep::spectrum::{build_lambda, canonicalize_spectrum_default, parse_spectrum_file};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SolverRun {
    algorithm: String,
    converged: bool,
    iterations: usize,
    residual_trace: Vec<f64>,
    cg_per_iteration: Vec<usize>,
    final_residual: f64,
    matching_cost: f64,
    matrix: Vec<Vec<f64>>,
    achieved_spectrum: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct DemoResult {
    ok: bool,
    error: Option<String>,
    problem: String,
    n: usize,
    seed: u64,
    target_spectrum: Vec<[f64; 2]>,
    prescribed_mask: Option<Vec<Vec<f64>>>,
    runs: Vec<SolverRun>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn spectrum_pairs(instance: &ProblemInstance) -> Vec<[f64; 2]> {
    instance.spec.values.iter().map(|z| [z.re, z.im]).collect()
}

fn error_json(message: &str) -> String {
    serde_json::to_string(&DemoResult {
        ok: false,
        error: Some(message.into()),
        problem: String::new(),
        n: 0,
        seed: 0,
        target_spectrum: Vec::new(),
        prescribed_mask: None,
        runs: Vec::new(),
    })
    .unwrap()
}

fn run_newton(instance: &ProblemInstance, seed: u64, max_outer: usize) -> SolverRun {
    let config = SolverConfig {
        max_outer,
        ..SolverConfig::default()
    };
    let x0 = instance.random_point(derive_seed(seed, instance.n(), 0));
    let report = solve(instance, &x0, &config);
    let c = instance.reconstruct(&report.final_point);
    let (cost, achieved) = match verify_solution(instance, &report.final_point, 1e-6) {
        Ok(verdict) => {
            let eigs = niep::linalg::eigenvalues(&c)
                .map(|e| e.iter().map(|z| [z.re, z.im]).collect())
                .unwrap_or_default();
            (verdict.matching_cost, eigs)
        }
        Err(_) => (f64::NAN, Vec::new()),
    };
    SolverRun {
        algorithm: "newton-cg".into(),
        converged: report.converged,
        iterations: report.outer_iterations(),
        residual_trace: report.residual_trace(),
        cg_per_iteration: report.iterations.iter().map(|r| r.cg_iterations).collect(),
        final_residual: report.final_residual,
        matching_cost: cost,
        matrix: matrix_rows(&c),
        achieved_spectrum: achieved,
    }
}

fn run_altproj(instance: &ProblemInstance, seed: u64, max_iter: usize) -> SolverRun {
    let (_, c0) = starting_point(instance, derive_seed(seed, instance.n(), 0));
    let report = altproj_solve(instance, &c0, 1e-8, max_iter);
    let (cost, achieved) = match niep::linalg::eigenvalues(&report.final_c) {
        Ok(eigs) => {
            let (_, cost) = niep::linalg::match_multisets(&eigs, &instance.spec.values);
            (cost, eigs.iter().map(|z| [z.re, z.im]).collect())
        }
        Err(_) => (f64::NAN, Vec::new()),
    };
    SolverRun {
        algorithm: "altproj".into(),
        converged: report.converged,
        iterations: report.iterations,
        residual_trace: report.gap_trace.clone(),
        cg_per_iteration: Vec::new(),
        final_residual: report.final_gap,
        matching_cost: cost,
        matrix: matrix_rows(&report.final_c),
        achieved_spectrum: achieved,
    }
}

fn solve_instance_json(
    instance: &ProblemInstance,
    problem_name: &str,
    algorithm: &str,
    seed: u64,
    max_outer: usize,
    altproj_max_iter: usize,
) -> String {
    let mut runs = Vec::new();
    if algorithm == "newton-cg" || algorithm == "both" {
        runs.push(run_newton(instance, seed, max_outer));
    }
    if algorithm == "altproj" || algorithm == "both" {
        runs.push(run_altproj(instance, seed, altproj_max_iter));
    }
    if runs.is_empty() {
        return error_json(&format!("unknown algorithm {algorithm:?}"));
    }
    let result = DemoResult {
        ok: true,
        error: None,
        problem: problem_name.into(),
        n: instance.n(),
        seed,
        target_spectrum: spectrum_pairs(instance),
        prescribed_mask: instance.prescribed.as_ref().map(|pe| matrix_rows(&pe.u_hat)),
        runs,
    };
    serde_json::to_string(&result).unwrap()
}

/// Generates a seeded random instance and solves it. `problem` is `"niep"`
/// or `"niep-pe"`, `algorithm` is `"newton-cg"`, `"altproj"`, or `"both"`.
#[wasm_bindgen]
pub fn solve_demo(problem: &str, algorithm: &str, n: usize, seed: u64, max_outer: usize) -> String {
    if n == 0 || n > 80 {
        return error_json("n must be between 1 and 80 in the demo");
    }
    let problem_kind = match problem {
        "niep" => Problem::Niep,
        "niep-pe" => Problem::NiepPe,
        other => return error_json(&format!("unknown problem {other:?}")),
    };
    let instance = instance_for(problem_kind, n, seed);
    solve_instance_json(&instance, problem, algorithm, seed, max_outer, 20_000)
}

/// Parses a spectrum in the text format and solves the plain problem for it.
#[wasm_bindgen]
pub fn solve_spectrum(text: &str, algorithm: &str, seed: u64, max_outer: usize) -> String {
    let raw = match parse_spectrum_file(text) {
        Ok(raw) => raw,
        Err(msg) => return error_json(&msg),
    };
    let spec = match canonicalize_spectrum_default(&raw) {
        Ok(spec) => spec,
        Err(e) => return error_json(&e.to_string()),
    };
    if spec.n > 80 {
        return error_json("the demo is limited to 80 eigenvalues");
    }
    let instance = ProblemInstance::niep(spec);
    solve_instance_json(&instance, "niep", algorithm, seed, max_outer, 20_000)
}

#[derive(Serialize)]
struct SpectrumPreview {
    ok: bool,
    error: Option<String>,
    n: usize,
    conjugate_pairs: usize,
    values: Vec<[f64; 2]>,
    lambda: Vec<Vec<f64>>,
    free_pattern: Vec<Vec<f64>>,
    manifold_dimension: usize,
}

/// Canonicalizes a typed spectrum and reports the induced structure: the
/// canonical value list, the block matrix `Λ`, the free pattern of `V`, and
/// the manifold dimension.
#[wasm_bindgen]
pub fn spectrum_preview(text: &str) -> String {
    let fail = |msg: &str| {
        serde_json::to_string(&SpectrumPreview {
            ok: false,
            error: Some(msg.into()),
            n: 0,
            conjugate_pairs: 0,
            values: Vec::new(),
            lambda: Vec::new(),
            free_pattern: Vec::new(),
            manifold_dimension: 0,
        })
        .unwrap()
    };
    let raw = match parse_spectrum_file(text) {
        Ok(raw) => raw,
        Err(msg) => return fail(&msg),
    };
    let spec = match canonicalize_spectrum_default(&raw) {
        Ok(spec) => spec,
        Err(e) => return fail(&e.to_string()),
    };
    if spec.n > 80 {
        return fail("the demo is limited to 80 eigenvalues");
    }
    let lambda = build_lambda(&spec);
    serde_json::to_string(&SpectrumPreview {
        ok: true,
        error: None,
        n: spec.n,
        conjugate_pairs: spec.s,
        values: spec.values.iter().map(|z| [z.re, z.im]).collect(),
        lambda: matrix_rows(&lambda.lambda),
        free_pattern: matrix_rows(&lambda.w),
        manifold_dimension: lambda.dim_manifold,
    })
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_demo_returns_complete_payload() {
        let json = solve_demo("niep", "both", 8, 1, 100);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["n"], 8);
        let runs = v["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        for run in runs {
            assert_eq!(run["converged"], true);
            assert!(run["matching_cost"].as_f64().unwrap() <= 1e-6);
            assert_eq!(run["matrix"].as_array().unwrap().len(), 8);
            assert!(!run["residual_trace"].as_array().unwrap().is_empty());
        }
        assert_eq!(v["target_spectrum"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn solve_demo_prescribed_includes_mask() {
        let json = solve_demo("niep-pe", "newton-cg", 8, 2, 100);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["ok"], true);
        assert!(v["prescribed_mask"].is_array());
    }

    #[test]
    fn solve_demo_rejects_bad_arguments() {
        for json in [
            solve_demo("niep", "newton-cg", 0, 1, 100),
            solve_demo("nope", "newton-cg", 5, 1, 100),
            solve_demo("niep", "simplex", 5, 1, 100),
        ] {
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v["ok"], false);
            assert!(v["error"].is_string());
        }
    }

    #[test]
    fn solve_spectrum_accepts_typed_input() {
        let json = solve_spectrum("9.0\n1.0 # a real pair\n", "newton-cg", 0, 100);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["ok"], true, "{v}");
        assert_eq!(v["runs"][0]["converged"], true);
    }

    #[test]
    fn spectrum_preview_reports_structure() {
        let json = spectrum_preview("1.0 2.0\n1.0 -2.0\n3.0\n");
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(v["n"], 3);
        assert_eq!(v["conjugate_pairs"], 1);
        assert_eq!(v["manifold_dimension"], 14);
        assert_eq!(v["lambda"][0][1], 2.0);
        assert_eq!(v["free_pattern"][0][2], 1.0);

        let bad: serde_json::Value =
            serde_json::from_str(&spectrum_preview("1.0 2.0\n")).unwrap();
        assert_eq!(bad["ok"], false);
    }
}
