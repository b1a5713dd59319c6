//! Alternating-projection baseline.
//!
//! Iterates between the isospectral set (matrices with the prescribed
//! spectrum, reached through a complex Schur frame) and the entrywise
//! constraint set (the nonnegative orthant, or the nonnegative matrices with
//! pinned entries in the prescribed variant):
//!
//! 1. factor `C^k = U T U^H`,
//! 2. `Y^{k+1} = Re(U T' U^H)` where `T'` is `T` with its diagonal replaced
//!    by the prescribed eigenvalues under an optimal assignment,
//! 3. `C^{k+1} = max(Y^{k+1}, 0)` entrywise (pinning prescribed entries in
//!    the variant),
//!
//! stopping when the gap `‖C^k − Y^{k+1}‖_F` falls below the tolerance.
//! There are no convergence guarantees on these non-convex sets; the method
//! serves as a baseline and is expected to stall on hard instances.

use crate::linalg::{complex_schur, match_multisets, CMatrix, LinalgError, Matrix};
use crate::residual::ProblemInstance;
use crate::spectrum::{PrescribedEntries, SpectrumSpec};
use crate::util::Stopwatch;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Imaginary mass above which the spectral projection logs an event instead
/// of silently truncating.
const IMAG_DUST_TOL: f64 = 1e-8;

/// Outcome of an alternating-projection run.
#[derive(Debug, Clone)]
pub struct AltProjReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final nonnegative iterate (feasible for the entrywise constraints by
    /// construction).
    pub final_c: Matrix,
    /// Final gap `‖C^k − Y^{k+1}‖_F`.
    pub final_gap: f64,
    pub gap_trace: Vec<f64>,
    /// Iterations whose spectral projection produced imaginary mass above
    /// the dust tolerance (truncated, logged, not fatal).
    pub imag_dust_events: usize,
    pub wall_time: f64,
    pub failure: Option<AltProjFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AltProjFailure {
    MaxIterReached,
    SchurFailed,
}

/// Projection onto the isospectral set through a Schur frame: keeps `U` and
/// the strict upper triangle of `T`, overwrites the diagonal with the
/// prescribed eigenvalues under the optimal assignment, and reassembles.
/// Returns the real part and the imaginary mass discarded.
pub fn project_spectral(u: &CMatrix, t: &CMatrix, spec: &SpectrumSpec) -> (Matrix, f64) {
    let n = spec.n;
    let diag: Vec<Complex<f64>> = (0..n).map(|i| t[(i, i)]).collect();
    let (assignment, _) = match_multisets(&diag, &spec.values);
    let mut t_new = t.clone();
    for i in 0..n {
        t_new[(i, i)] = spec.values[assignment[i]];
    }
    let y_complex = u * t_new * u.adjoint();
    let mut y = Matrix::zeros(n, n);
    let mut imag_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            y[(i, j)] = y_complex[(i, j)].re;
            imag_sq += y_complex[(i, j)].im * y_complex[(i, j)].im;
        }
    }
    (y, imag_sq.sqrt())
}

/// Nearest entrywise-nonnegative matrix in Frobenius norm.
pub fn project_nonneg(y: &Matrix) -> Matrix {
    y.map(|v| v.max(0.0))
}

/// Projection onto the prescribed-entries set: pinned values on `L`,
/// clamped to the nonnegative orthant elsewhere.
pub fn project_prescribed(y: &Matrix, pe: &PrescribedEntries) -> Matrix {
    let mut c = project_nonneg(y);
    for &(i, j) in &pe.index_set_l {
        c[(i, j)] = pe.c_hat[(i, j)];
    }
    c
}

/// Runs the alternating projection from `c0` (which must already satisfy the
/// entrywise constraints) until the gap falls below `tol` or `max_iter`
/// iterations pass.
pub fn altproj_solve(
    instance: &ProblemInstance,
    c0: &Matrix,
    tol: f64,
    max_iter: usize,
) -> AltProjReport {
    let watch = Stopwatch::start();
    let mut c = c0.clone();
    let mut gap_trace = Vec::new();
    let mut imag_dust_events = 0usize;

    let fail = |failure, iterations, c: Matrix, gap_trace: Vec<f64>, dust, watch: Stopwatch| {
        let final_gap = gap_trace.last().copied().unwrap_or(f64::INFINITY);
        AltProjReport {
            converged: false,
            iterations,
            final_c: c,
            final_gap,
            gap_trace,
            imag_dust_events: dust,
            wall_time: watch.elapsed_secs(),
            failure: Some(failure),
        }
    };

    for k in 1..=max_iter {
        let schur = match complex_schur(&c) {
            Ok(s) => s,
            Err(LinalgError::ConvergenceFailure) => {
                return fail(
                    AltProjFailure::SchurFailed,
                    k - 1,
                    c,
                    gap_trace,
                    imag_dust_events,
                    watch,
                )
            }
            Err(e) => panic!("complex Schur failed unexpectedly: {e}"),
        };
        let (y, imag_mass) = project_spectral(&schur.q, &schur.t, &instance.spec);
        if imag_mass > IMAG_DUST_TOL {
            imag_dust_events += 1;
        }
        let gap = (&c - &y).norm();
        gap_trace.push(gap);
        if gap < tol {
            return AltProjReport {
                converged: true,
                iterations: k,
                final_c: c,
                final_gap: gap,
                gap_trace,
                imag_dust_events,
                wall_time: watch.elapsed_secs(),
                failure: None,
            };
        }
        c = match &instance.prescribed {
            None => project_nonneg(&y),
            Some(pe) => project_prescribed(&y, pe),
        };
    }
    fail(
        AltProjFailure::MaxIterReached,
        max_iter,
        c,
        gap_trace,
        imag_dust_events,
        watch,
    )
}
