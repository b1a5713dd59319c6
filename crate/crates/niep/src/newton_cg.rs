//! Riemannian inexact Newton-CG iteration.
//!
//! Each outer step at the iterate `X^k` with residual `G^k = G(X^k)`:
//!
//! 1. Runs CG on the shifted normal equation
//!
//!    ```text
//!    (DG(X^k) ∘ DG(X^k)* + σ̄_k id)[ΔZ] = −G^k,
//!    σ̄_k = min{σ̄_max, ‖G^k‖_F},
//!    ```
//!
//!    from `ΔZ = 0`, stopping at the first CG iterate that satisfies both
//!    the shifted test `‖(A + σ̄_k id)[ΔZ] + G^k‖ ≤ η̄_k‖G^k‖` with
//!    `η̄_k = min{η̄_max, ‖G^k‖}` and the unshifted test
//!    `‖A[ΔZ] + G^k‖ ≤ η̂_max‖G^k‖`. The unshifted residual is monitored
//!    at no extra cost through `A ΔZ + G = −(r + σ̄_k ΔZ)`, where `r` is the
//!    CG residual of the shifted system.
//!
//! 2. Recovers the minimum-norm Newton direction `Δ̂X = DG(X^k)*[ΔZ]` and
//!    its quality `η̂_k = ‖DG(X^k)[Δ̂X] + G^k‖ / ‖G^k‖` from the direction
//!    actually recovered, not from the CG monitor.
//!
//! 3. Damps the step until `‖G(R_{X^k}(ΔX))‖ ≤ (1 − t(1−η_k))‖G^k‖`,
//!    scaling `ΔX ← θΔX` and `η_k ← 1 − θ(1−η_k)` with `θ` chosen by a
//!    quadratic backtracking model of `u(θ) = ‖G(R_{X^k}(θΔX))‖²` clamped
//!    to `[θ_min, θ_max]`.
//!
//! The residual norm contracts by at least `1 − t(1−η_k)` on every accepted
//! step, which is the monotone-decrease invariant recorded per iteration.

use crate::linalg::Matrix;
use crate::manifold::{retract, ManifoldPoint, TangentVector};
use crate::residual::{
    apply_adjoint_cached, apply_differential_cached, residual_cached, ProblemInstance,
};
use crate::util::Stopwatch;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameters of the Newton-CG iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Cap `σ̄_max` on the normal-equation shift, in `[0, 1)`.
    pub sigma_max: f64,
    /// Cap `η̄_max` on the shifted forcing term, in `[0, 1)`.
    pub eta_bar_max: f64,
    /// Cap `η̂_max` on the unshifted forcing term, in `[0, 1)`.
    pub eta_hat_max: f64,
    /// Sufficient-decrease constant `t` in `(0, 1)`.
    pub t: f64,
    /// Backtracking clamp `0 < θ_min < θ_max < 1`.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Stop when `‖G(X^k)‖_F` falls below this.
    pub tol: f64,
    pub max_outer: usize,
    /// Inner CG budget per outer iteration; `None` means `n²`.
    pub max_cg: Option<usize>,
    /// Safety cap on backtracking passes within one outer iteration.
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma_max: 0.01,
            eta_bar_max: 0.1,
            eta_hat_max: 0.9,
            t: 1e-4,
            theta_min: 0.1,
            theta_max: 0.9,
            tol: 1e-8,
            max_outer: 100,
            max_cg: None,
            max_backtracks: 60,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) {
        assert!((0.0..1.0).contains(&self.sigma_max));
        assert!((0.0..1.0).contains(&self.eta_bar_max));
        assert!((0.0..1.0).contains(&self.eta_hat_max));
        assert!(self.t > 0.0 && self.t < 1.0);
        assert!(0.0 < self.theta_min && self.theta_min < self.theta_max && self.theta_max < 1.0);
        assert!(self.tol > 0.0);
    }

    pub fn max_cg_for(&self, n: usize) -> usize {
        self.max_cg.unwrap_or(n * n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("CG spent {0} iterations without satisfying both tolerance tests")]
    CgBudgetExhausted(usize),
    #[error("backtracking spent {0} scalings without acceptance")]
    BacktrackExhausted(usize),
}

/// Why a solve stopped without convergence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    CgBudgetExhausted { at_iteration: usize, cg_iterations: usize },
    BacktrackExhausted { at_iteration: usize, backtracks: usize },
    MaxOuterReached,
}

/// Per-iteration trace entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖G(X^k)‖_F` at the start of the iteration.
    pub residual_norm: f64,
    pub sigma: f64,
    pub eta_bar: f64,
    /// Direction quality `η̂_k` recomputed from the recovered direction.
    pub eta_hat: f64,
    /// Forcing term after damping, `η_k = 1 − Θ(1 − η̂_k)`.
    pub eta: f64,
    pub cg_iterations: usize,
    pub backtracks: usize,
    /// Norm of the undamped Newton direction `Δ̂X^k`.
    pub direction_norm: f64,
    /// Product `Θ` of the applied scalings (1 when the full step passes).
    pub theta_product: f64,
    pub step_accepted: bool,
}

/// Full outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: Vec<IterationRecord>,
    pub final_point: ManifoldPoint,
    pub final_residual: f64,
    /// `‖grad ½‖G‖²‖ = ‖DG(X)*[G(X)]‖` at the final iterate.
    pub final_grad_norm: f64,
    pub total_cg: usize,
    pub total_function_evals: usize,
    pub wall_time: f64,
    pub failure_reason: Option<FailureReason>,
}

impl SolverReport {
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    /// Residual norms `‖G(X^0)‖, …, ‖G(X^K)‖` including the final iterate.
    pub fn residual_trace(&self) -> Vec<f64> {
        let mut trace: Vec<f64> = self.iterations.iter().map(|r| r.residual_norm).collect();
        trace.push(self.final_residual);
        trace
    }
}

/// Result of the inner CG solve.
#[derive(Debug, Clone)]
pub struct NormalEquationSolution {
    pub dz: Matrix,
    pub cg_iterations: usize,
    /// Monitored `‖(A + σ id)[ΔZ] + G‖ / ‖G‖` at exit.
    pub shifted_rel: f64,
    /// Monitored `‖A[ΔZ] + G‖ / ‖G‖` at exit.
    pub unshifted_rel: f64,
}

/// The normal-equation operator `ΔZ ↦ DG(X)[DG(X)*[ΔZ]]` at a fixed point,
/// with the conjugated form `Q(Λ+V)Qᵀ` cached.
pub struct NormalOperator<'a> {
    instance: &'a ProblemInstance,
    x: &'a ManifoldPoint,
    conjugated: Matrix,
}

impl<'a> NormalOperator<'a> {
    pub fn new(instance: &'a ProblemInstance, x: &'a ManifoldPoint) -> Self {
        let conjugated = instance.conjugated_form(x);
        NormalOperator {
            instance,
            x,
            conjugated,
        }
    }

    pub fn residual(&self) -> Matrix {
        residual_cached(self.instance, self.x, &self.conjugated)
    }

    pub fn adjoint(&self, dz: &Matrix) -> TangentVector {
        apply_adjoint_cached(self.instance, self.x, &self.conjugated, dz)
    }

    pub fn differential(&self, xi: &TangentVector) -> Matrix {
        apply_differential_cached(self.x, &self.conjugated, xi)
    }

    /// One application `DG[DG*[ΔZ]]`, matrix-free.
    pub fn apply(&self, dz: &Matrix) -> Matrix {
        self.differential(&self.adjoint(dz))
    }
}

fn cg_on_normal_equation(
    op: &NormalOperator<'_>,
    g_val: &Matrix,
    sigma: f64,
    eta_bar: f64,
    eta_hat_max: f64,
    max_cg: usize,
) -> Result<NormalEquationSolution, SolverError> {
    let gnorm = g_val.norm();
    debug_assert!(gnorm > 0.0, "CG must not be invoked at a zero residual");
    let b = -g_val;
    let mut z = Matrix::zeros(g_val.nrows(), g_val.ncols());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.norm_squared();

    for iter in 1..=max_cg {
        let ap = op.apply(&p) + &p * sigma;
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolverError::CgBudgetExhausted(iter - 1));
        }
        let alpha = rs / pap;
        z += &p * alpha;
        r -= &ap * alpha;

        let shifted = r.norm();
        // A z + G = −(r + σ z) for the shifted-system residual r
        let unshifted = (&r + &z * sigma).norm();
        if shifted <= eta_bar * gnorm && unshifted <= eta_hat_max * gnorm {
            return Ok(NormalEquationSolution {
                dz: z,
                cg_iterations: iter,
                shifted_rel: shifted / gnorm,
                unshifted_rel: unshifted / gnorm,
            });
        }

        let rs_new = r.norm_squared();
        // stagnated shifted solve that still fails the unshifted test
        if rs_new <= (f64::EPSILON * gnorm).powi(2) {
            return Err(SolverError::CgBudgetExhausted(iter));
        }
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    Err(SolverError::CgBudgetExhausted(max_cg))
}

/// Solves the shifted normal equation by CG until both the shifted and the
/// unshifted tolerance tests hold.
///
/// `g_val` must be the (nonzero) residual at `x`, and `sigma`/`eta_bar` the
/// forcing terms `min{σ̄_max, ‖G‖}` and `min{η̄_max, ‖G‖}`.
pub fn solve_normal_equation(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    g_val: &Matrix,
    sigma: f64,
    eta_bar: f64,
    config: &SolverConfig,
) -> Result<NormalEquationSolution, SolverError> {
    let op = NormalOperator::new(instance, x);
    cg_on_normal_equation(
        &op,
        g_val,
        sigma,
        eta_bar,
        config.eta_hat_max,
        config.max_cg_for(instance.n()),
    )
}

/// Recovers the Newton direction `Δ̂X = DG(X)*[ΔZ]` and its quality
/// `η̂ = ‖DG(X)[Δ̂X] + G(X)‖ / ‖G(X)‖`.
pub fn compute_direction(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    dz: &Matrix,
) -> (TangentVector, f64) {
    let op = NormalOperator::new(instance, x);
    let g_val = op.residual();
    compute_direction_cached(&op, &g_val, dz)
}

fn compute_direction_cached(
    op: &NormalOperator<'_>,
    g_val: &Matrix,
    dz: &Matrix,
) -> (TangentVector, f64) {
    let dx = op.adjoint(dz);
    let eta_hat = (op.differential(&dx) + g_val).norm() / g_val.norm();
    (dx, eta_hat)
}

/// Quadratic-backtracking scaling factor for the model
/// `q(θ) = (u1 − u0 − u'0)θ² + u'0·θ + u0` of `u(θ) = ‖Ĝ(θΔX)‖²`:
/// the clamped minimizer when the model is convex, `θ_max` when concave.
pub fn backtracking_theta(u0: f64, u1: f64, uprime0: f64, theta_min: f64, theta_max: f64) -> f64 {
    let q_second = 2.0 * (u1 - u0 - uprime0);
    if q_second <= 0.0 {
        theta_max
    } else {
        (-uprime0 / q_second).clamp(theta_min, theta_max)
    }
}

/// Outcome of one damped step.
#[derive(Debug, Clone)]
pub struct BacktrackOutcome {
    pub x_next: ManifoldPoint,
    /// Residual matrix at `x_next` (already evaluated by the loop).
    pub g_next: Matrix,
    /// Final forcing term `η_k` after damping.
    pub eta: f64,
    /// Product of applied scalings.
    pub theta_product: f64,
    /// Number of repeat-loop passes after the first evaluation.
    pub backtracks: usize,
    /// Residual evaluations spent (1 + backtracks when no retraction fails).
    pub function_evals: usize,
}

/// Damps `dx_hat` until the sufficient-decrease test
/// `‖G(R_X(ΔX))‖ ≤ (1 − t(1−η))‖G(X)‖` holds.
///
/// Each pass evaluates the residual once. A retraction failure counts as a
/// rejected step and scales by `θ_min`.
pub fn backtrack(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    dx_hat: &TangentVector,
    eta_hat: f64,
    config: &SolverConfig,
) -> Result<BacktrackOutcome, SolverError> {
    let op = NormalOperator::new(instance, x);
    let g_val = op.residual();
    backtrack_cached(instance, &op, x, &g_val, dx_hat, eta_hat, config)
}

#[allow(clippy::too_many_arguments)]
fn backtrack_cached(
    instance: &ProblemInstance,
    op: &NormalOperator<'_>,
    x: &ManifoldPoint,
    g_val: &Matrix,
    dx_hat: &TangentVector,
    eta_hat: f64,
    config: &SolverConfig,
) -> Result<BacktrackOutcome, SolverError> {
    let gnorm = g_val.norm();
    let u0 = gnorm * gnorm;
    // ⟨DG[Δ̂X], G⟩; u'(0) for the scaled direction ΘΔ̂X is 2Θ·this
    let slope_hat = op.differential(dx_hat).dot(g_val);

    let mut eta = eta_hat;
    let mut theta_product = 1.0f64;
    let mut backtracks = 0usize;
    let mut function_evals = 0usize;

    let mut dx = dx_hat.clone();
    let mut trial = match retract(x, &dx) {
        Ok(pt) => {
            function_evals += 1;
            let g = crate::residual::residual(instance, &pt);
            Some((pt, g))
        }
        Err(_) => None,
    };

    loop {
        if let Some((_, g_trial)) = &trial {
            if g_trial.norm() <= (1.0 - config.t * (1.0 - eta)) * gnorm {
                let (x_next, g_next) = trial.unwrap();
                return Ok(BacktrackOutcome {
                    x_next,
                    g_next,
                    eta,
                    theta_product,
                    backtracks,
                    function_evals,
                });
            }
        }
        if backtracks >= config.max_backtracks {
            return Err(SolverError::BacktrackExhausted(backtracks));
        }

        let theta = match &trial {
            Some((_, g_trial)) => {
                let u1 = g_trial.norm_squared();
                let uprime0 = 2.0 * theta_product * slope_hat;
                backtracking_theta(u0, u1, uprime0, config.theta_min, config.theta_max)
            }
            None => config.theta_min,
        };
        dx = dx.scale(theta);
        eta = 1.0 - theta * (1.0 - eta);
        theta_product *= theta;
        backtracks += 1;

        trial = match retract(x, &dx) {
            Ok(pt) => {
                function_evals += 1;
                let g = crate::residual::residual(instance, &pt);
                Some((pt, g))
            }
            Err(_) => None,
        };
    }
}

/// Runs the full Newton-CG iteration from `x0`.
///
/// Stops when `‖G(X^k)‖_F < tol` (converged), when the outer budget is
/// exhausted, or when an inner stage aborts; the report carries the
/// per-iteration trace either way.
pub fn solve(instance: &ProblemInstance, x0: &ManifoldPoint, config: &SolverConfig) -> SolverReport {
    config.validate();
    let watch = Stopwatch::start();
    let n = instance.n();
    let max_cg = config.max_cg_for(n);

    let mut x = x0.clone();
    let mut op = NormalOperator::new(instance, &x);
    let mut g_val = op.residual();
    let mut gnorm = g_val.norm();
    let mut total_function_evals = 1usize;
    let mut total_cg = 0usize;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut failure_reason = None;
    let mut converged = false;

    for k in 0..=config.max_outer {
        if gnorm < config.tol {
            converged = true;
            break;
        }
        if k == config.max_outer {
            failure_reason = Some(FailureReason::MaxOuterReached);
            break;
        }

        let sigma = config.sigma_max.min(gnorm);
        let eta_bar = config.eta_bar_max.min(gnorm);

        let cg = match cg_on_normal_equation(&op, &g_val, sigma, eta_bar, config.eta_hat_max, max_cg)
        {
            Ok(sol) => sol,
            Err(SolverError::CgBudgetExhausted(iters)) => {
                total_cg += iters;
                failure_reason = Some(FailureReason::CgBudgetExhausted {
                    at_iteration: k,
                    cg_iterations: iters,
                });
                iterations.push(IterationRecord {
                    k,
                    residual_norm: gnorm,
                    sigma,
                    eta_bar,
                    eta_hat: f64::NAN,
                    eta: f64::NAN,
                    cg_iterations: iters,
                    backtracks: 0,
                    direction_norm: f64::NAN,
                    theta_product: f64::NAN,
                    step_accepted: false,
                });
                break;
            }
            Err(SolverError::BacktrackExhausted(_)) => unreachable!(),
        };
        total_cg += cg.cg_iterations;

        let (dx_hat, eta_hat) = compute_direction_cached(&op, &g_val, &cg.dz);
        debug_assert!(
            eta_hat <= config.eta_hat_max * (1.0 + 1e-10),
            "direction quality {eta_hat} exceeds the unshifted forcing cap"
        );

        let outcome = match backtrack_cached(instance, &op, &x, &g_val, &dx_hat, eta_hat, config) {
            Ok(o) => o,
            Err(SolverError::BacktrackExhausted(bt)) => {
                failure_reason = Some(FailureReason::BacktrackExhausted {
                    at_iteration: k,
                    backtracks: bt,
                });
                total_function_evals += bt + 1;
                iterations.push(IterationRecord {
                    k,
                    residual_norm: gnorm,
                    sigma,
                    eta_bar,
                    eta_hat,
                    eta: f64::NAN,
                    cg_iterations: cg.cg_iterations,
                    backtracks: bt,
                    direction_norm: dx_hat.norm(),
                    theta_product: f64::NAN,
                    step_accepted: false,
                });
                break;
            }
            Err(SolverError::CgBudgetExhausted(_)) => unreachable!(),
        };
        total_function_evals += outcome.function_evals;

        let next_norm = outcome.g_next.norm();
        debug_assert!(
            next_norm <= (1.0 - config.t * (1.0 - outcome.eta)) * gnorm * (1.0 + 1e-14),
            "monotone decrease violated: {next_norm} vs {gnorm}"
        );

        iterations.push(IterationRecord {
            k,
            residual_norm: gnorm,
            sigma,
            eta_bar,
            eta_hat,
            eta: outcome.eta,
            cg_iterations: cg.cg_iterations,
            backtracks: outcome.backtracks,
            direction_norm: dx_hat.norm(),
            theta_product: outcome.theta_product,
            step_accepted: true,
        });

        x = outcome.x_next;
        op = NormalOperator::new(instance, &x);
        g_val = outcome.g_next;
        gnorm = next_norm;
    }

    let final_grad_norm = op.adjoint(&g_val).norm();
    SolverReport {
        converged,
        iterations,
        final_point: x,
        final_residual: gnorm,
        final_grad_norm,
        total_cg,
        total_function_evals,
        wall_time: watch.elapsed_secs(),
        failure_reason,
    }
}
