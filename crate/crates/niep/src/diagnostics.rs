//! Verification instruments.
//!
//! Nothing here is on the solve path; these are the tools used to convince
//! ourselves (and CI) that the calculus and the solvers are right:
//!
//! * finite-difference oracles for the differential and the cost gradient,
//! * a machine-readable derivative/adjoint test suite,
//! * solution certification against the prescribed spectrum,
//! * the surjectivity test for `DG(X)`: the stacked `3n² × n²` matrix
//!
//!   ```text
//!   [ Diag(vec(S))                              ]
//!   [ (I − P̂)((S⊙S) ⊗ I − I ⊗ (S⊙S)ᵀ)          ]
//!   [ Diag(vec(W)) (Q ⊗ Q)ᵀ                     ]
//!   ```
//!
//!   has trivial null space iff the differential is surjective, where `P̂` is
//!   the vectorized-transpose permutation with `vec(Aᵀ) = P̂ vec(A)`. An
//!   independent brute-force check applies the adjoint to every basis matrix
//!   `E_ij` and compares ranks,
//! * an empirical convergence-order estimate from a residual trace.

use crate::linalg::{eigenvalues, match_multisets, LinalgError, Matrix};
use crate::manifold::{ManifoldPoint, TangentVector};
use crate::residual::{
    apply_adjoint, apply_differential, pullback_residual, ProblemInstance,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("n = {0} is too large to assemble the stacked matrix densely (limit 40)")]
    DimensionTooLarge(usize),
    #[error("residual trace has fewer than three strictly positive entries")]
    TraceTooShort,
}

/// Central finite difference of the pullback residual along `xi`:
/// `(Ĝ_X(h·ξ) − Ĝ_X(−h·ξ)) / 2h`. Approximates `DG(X)[ξ]`.
pub fn fd_differential(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    xi: &TangentVector,
    h: f64,
) -> Result<Matrix, LinalgError> {
    let gp = pullback_residual(instance, x, &xi.scale(h))?;
    let gm = pullback_residual(instance, x, &xi.scale(-h))?;
    Ok((gp - gm) / (2.0 * h))
}

/// Central finite difference of `φ(ξ) = ½‖Ĝ_X(ξ)‖_F²` along `xi`.
/// Approximates `⟨grad φ(X), ξ⟩`.
pub fn fd_directional_cost(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    xi: &TangentVector,
    h: f64,
) -> Result<f64, LinalgError> {
    let fp = 0.5 * pullback_residual(instance, x, &xi.scale(h))?.norm_squared();
    let fm = 0.5 * pullback_residual(instance, x, &xi.scale(-h))?.norm_squared();
    Ok((fp - fm) / (2.0 * h))
}

/// The permutation matrix `P̂` with `vec(Aᵀ) = P̂ vec(A)` for all `A`
/// (column-stacking vectorization).
pub fn vec_transpose_matrix(n: usize) -> Matrix {
    let mut p = Matrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            p[(i + j * n, j + i * n)] = 1.0;
        }
    }
    p
}

/// Column-stacking vectorization, matching the layout `P̂` assumes.
pub fn vec_of(a: &Matrix) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Outcome of the surjectivity test at a point.
#[derive(Debug, Clone, Serialize)]
pub struct SurjectivityReport {
    pub n: usize,
    /// Dimensions of the stacked matrix: `(3n², n²)`.
    pub stacked_dims: (usize, usize),
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub rank: usize,
    /// True iff the rank is full (`n²`), i.e. the null space is trivial.
    pub surjective: bool,
}

fn rank_from_singular_values(sv: &[f64], rank_tol: f64) -> usize {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Assembles the stacked surjectivity matrix at `x`.
///
/// The middle block uses the reconstructed matrix `C = S⊙S` (plus the anchor
/// in the prescribed variant), and the first block is masked by `1 − Û` in
/// the prescribed variant so that all three blocks describe the kernel of
/// the adjoint at a solution point.
pub fn surjectivity_matrix(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
) -> Result<Matrix, DiagnosticsError> {
    let n = instance.n();
    if n > 40 {
        return Err(DiagnosticsError::DimensionTooLarge(n));
    }
    let n2 = n * n;
    let eye = Matrix::identity(n, n);
    let c = instance.reconstruct(x);

    let mut s_eff = x.s.clone();
    if let Some(pe) = &instance.prescribed {
        s_eff = pe.free_mask().component_mul(&s_eff);
    }

    let mut stacked = Matrix::zeros(3 * n2, n2);
    // Diag(vec(S))
    for (k, &sk) in s_eff.as_slice().iter().enumerate() {
        stacked[(k, k)] = sk;
    }
    // (I − P̂)(C ⊗ I − I ⊗ Cᵀ)
    let p_hat = vec_transpose_matrix(n);
    let middle = (Matrix::identity(n2, n2) - &p_hat)
        * (c.kronecker(&eye) - eye.kronecker(&c.transpose()));
    stacked.view_mut((n2, 0), (n2, n2)).copy_from(&middle);
    // Diag(vec(W)) (Q ⊗ Q)ᵀ
    let qq_t = x.q.kronecker(&x.q).transpose();
    let w_vec = vec_of(&instance.lambda.w);
    for i in 0..n2 {
        if w_vec[i] != 0.0 {
            for j in 0..n2 {
                stacked[(2 * n2 + i, j)] = w_vec[i] * qq_t[(i, j)];
            }
        }
    }
    Ok(stacked)
}

/// Rank test on the stacked surjectivity matrix.
pub fn surjectivity_check(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    rank_tol: f64,
) -> Result<SurjectivityReport, DiagnosticsError> {
    let n = instance.n();
    let stacked = surjectivity_matrix(instance, x)?;
    let sv = stacked.singular_values();
    let rank = rank_from_singular_values(sv.as_slice(), rank_tol);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SurjectivityReport {
        n,
        stacked_dims: (3 * n * n, n * n),
        smallest_singular_value: smin,
        largest_singular_value: smax,
        rank,
        surjective: rank == n * n,
    })
}

/// Brute-force companion to [`surjectivity_check`]: the `3n² × n²` matrix
/// whose `k`-th column stacks the three components of the adjoint applied to
/// the `k`-th basis matrix `E_ij`. Surjectivity of the differential is
/// equivalent to this matrix having full column rank.
pub fn adjoint_basis_matrix(instance: &ProblemInstance, x: &ManifoldPoint) -> Matrix {
    let n = instance.n();
    let n2 = n * n;
    let mut m = Matrix::zeros(3 * n2, n2);
    for k in 0..n2 {
        let mut e = Matrix::zeros(n, n);
        e[(k % n, k / n)] = 1.0;
        let t = apply_adjoint(instance, x, &e);
        for (r, &val) in t.ds.as_slice().iter().enumerate() {
            m[(r, k)] = val;
        }
        for (r, &val) in t.dq.as_slice().iter().enumerate() {
            m[(n2 + r, k)] = val;
        }
        for (r, &val) in t.dv.as_slice().iter().enumerate() {
            m[(2 * n2 + r, k)] = val;
        }
    }
    m
}

/// Rank of the brute-force adjoint matrix, with the same relative threshold
/// convention as [`surjectivity_check`].
pub fn adjoint_rank_bruteforce(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    rank_tol: f64,
) -> usize {
    let m = adjoint_basis_matrix(instance, x);
    let sv = m.singular_values();
    rank_from_singular_values(sv.as_slice(), rank_tol)
}

/// Certification of a candidate solution point.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionVerdict {
    /// `C ≥ 0` entrywise (true by construction; asserted anyway).
    pub nonnegative: bool,
    /// Prescribed entries of `C` equal the anchor bit-for-bit on `L`
    /// (trivially true for the plain problem).
    pub prescribed_exact: bool,
    /// Optimal-assignment cost between the spectrum of `C` and the
    /// prescribed one.
    pub matching_cost: f64,
    /// `matching_cost ≤ spec_tol`.
    pub spectrum_attained: bool,
    pub pass: bool,
}

/// Checks that the matrix encoded by `x` is nonnegative, pins the prescribed
/// entries exactly, and attains the prescribed spectrum up to `spec_tol` in
/// matching cost. This is the ground-truth check, independent of the
/// residual the solvers drive to zero.
pub fn verify_solution(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    spec_tol: f64,
) -> Result<SolutionVerdict, LinalgError> {
    let c = instance.reconstruct(x);
    let nonnegative = c.iter().all(|&v| v >= 0.0);
    let prescribed_exact = match &instance.prescribed {
        None => true,
        Some(pe) => pe
            .index_set_l
            .iter()
            .all(|&(i, j)| c[(i, j)] == pe.c_hat[(i, j)]),
    };
    let eigs = eigenvalues(&c)?;
    let (_, matching_cost) = match_multisets(&eigs, &instance.spec.values);
    let spectrum_attained = matching_cost <= spec_tol;
    Ok(SolutionVerdict {
        nonnegative,
        prescribed_exact,
        matching_cost,
        spectrum_attained,
        pass: nonnegative && prescribed_exact && spectrum_attained,
    })
}

/// One row of the derivative test suite.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeTestCase {
    pub seed: u64,
    pub adjoint_identity_error: f64,
    pub fd_relative_error: f64,
    pub skew_deviation: f64,
    pub v_mask_exact: bool,
    pub s_mask_exact: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeTestReport {
    pub n: usize,
    pub prescribed: bool,
    pub cases: Vec<DerivativeTestCase>,
    pub all_passed: bool,
}

/// Runs the adjoint-identity, finite-difference, tangency, and mask checks
/// at seeded random points, one case per seed.
pub fn derivative_test_suite(instance: &ProblemInstance, seeds: &[u64]) -> DerivativeTestReport {
    let mut cases = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let x = instance.random_point(seed);
        let xi = instance.random_tangent(&x, seed.wrapping_add(0x9e37));
        let dz = instance.random_tangent(&x, seed.wrapping_add(0x79b9)).ds;

        let lhs = apply_differential(instance, &x, &xi).dot(&dz);
        let adj = apply_adjoint(instance, &x, &dz);
        let rhs = xi.inner(&adj);
        let adjoint_identity_error = (lhs - rhs).abs() / (1.0 + lhs.abs());

        let h = 1e-6 * (1.0 + xi.norm());
        let fd_relative_error = match fd_differential(instance, &x, &xi, h) {
            Ok(fd) => {
                let an = apply_differential(instance, &x, &xi);
                (&an - &fd).norm() / (1.0 + an.norm())
            }
            Err(_) => f64::INFINITY,
        };

        let qtdq = x.q.transpose() * &adj.dq;
        let skew_deviation = (&qtdq + qtdq.transpose()).norm() / (1.0 + adj.dq.norm());
        let v_mask_exact = instance
            .lambda
            .index_set_i
            .iter()
            .all(|&(i, j)| adj.dv[(i, j)] == 0.0);
        let s_mask_exact = match &instance.prescribed {
            None => true,
            Some(pe) => pe.index_set_l.iter().all(|&(i, j)| adj.ds[(i, j)] == 0.0),
        };

        let pass = adjoint_identity_error <= 1e-11
            && fd_relative_error <= 1e-5
            && skew_deviation <= 1e-12
            && v_mask_exact
            && s_mask_exact;
        cases.push(DerivativeTestCase {
            seed,
            adjoint_identity_error,
            fd_relative_error,
            skew_deviation,
            v_mask_exact,
            s_mask_exact,
            pass,
        });
    }
    DerivativeTestReport {
        n: instance.n(),
        prescribed: instance.is_prescribed(),
        all_passed: cases.iter().all(|c| c.pass),
        cases,
    }
}

/// Empirical convergence order from a residual trace: the exponent `q` with
/// `r_{k+1} ≈ r_k^q` estimated on the final three strictly positive
/// residuals, `q = log(r_{k+1}/r_k) / log(r_k/r_{k−1})`.
///
/// The estimate only speaks to the asymptotic rate when the trace ends deep
/// in the convergent regime (final residual below about `1e-6`); enforcing
/// that is the caller's business.
pub fn convergence_order(residual_trace: &[f64]) -> Result<f64, DiagnosticsError> {
    let pos: Vec<f64> = residual_trace.iter().copied().filter(|&r| r > 0.0).collect();
    if pos.len() < 3 {
        return Err(DiagnosticsError::TraceTooShort);
    }
    let [r0, r1, r2] = [pos[pos.len() - 3], pos[pos.len() - 2], pos[pos.len() - 1]];
    Ok((r2 / r1).ln() / (r1 / r0).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{canonicalize_spectrum, PrescribedEntries};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn real_instance(vals: &[f64]) -> ProblemInstance {
        let raw: Vec<Complex<f64>> = vals.iter().map(|&x| Complex::new(x, 0.0)).collect();
        ProblemInstance::niep(canonicalize_spectrum(&raw, 1e-12).unwrap())
    }

    fn mixed_instance(n: usize) -> ProblemInstance {
        assert!(n >= 3);
        let mut raw = vec![Complex::new(0.4, 0.8), Complex::new(0.4, -0.8)];
        for i in 0..(n - 2) {
            raw.push(Complex::new(1.5 - 0.3 * i as f64, 0.0));
        }
        ProblemInstance::niep(canonicalize_spectrum(&raw, 1e-12).unwrap())
    }

    #[test]
    fn vec_transpose_small_cases() {
        assert_eq!(vec_transpose_matrix(1), Matrix::identity(1, 1));
        // for n = 2 the permutation swaps the two off-diagonal positions
        let p = vec_transpose_matrix(2);
        let expect = Matrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(p, expect);
    }

    #[test]
    fn vec_transpose_action_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 4;
        let a = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let p = vec_transpose_matrix(n);
        let lhs = Matrix::from_column_slice(n * n, 1, &vec_of(&a.transpose()));
        let rhs = &p * Matrix::from_column_slice(n * n, 1, &vec_of(&a));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn vec_transpose_is_an_involutory_permutation() {
        for n in 1..=5usize {
            let p = vec_transpose_matrix(n);
            assert_eq!(&p * &p, Matrix::identity(n * n, n * n));
            assert_eq!(p.transpose(), p);
        }
    }

    #[test]
    fn kronecker_swap_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=5usize {
            let a = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let b = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let p = vec_transpose_matrix(n);
            // P̂(A ⊗ B) = (B ⊗ A)P̂ holds exactly: both sides permute the
            // same floating-point products
            assert_eq!(&p * a.kronecker(&b), b.kronecker(&a) * &p);
        }
    }

    #[test]
    fn surjectivity_one_by_one() {
        let inst = real_instance(&[4.0]);
        let x = ManifoldPoint {
            s: Matrix::from_row_slice(1, 1, &[2.0]),
            q: Matrix::from_row_slice(1, 1, &[1.0]),
            v: Matrix::zeros(1, 1),
            prescribed: false,
        };
        let stacked = surjectivity_matrix(&inst, &x).unwrap();
        assert_eq!(stacked, Matrix::from_column_slice(3, 1, &[2.0, 0.0, 0.0]));
        let report = surjectivity_check(&inst, &x, 1e-10).unwrap();
        assert_eq!(report.rank, 1);
        assert!(report.surjective);
    }

    #[test]
    fn surjectivity_degenerate_point() {
        // S = 0 and W = 0 (n = 1 has empty J) with C = S⊙S = 0: everything
        // vanishes and the check must report a trivial rank
        let inst = real_instance(&[4.0]);
        let x = ManifoldPoint {
            s: Matrix::zeros(1, 1),
            q: Matrix::from_row_slice(1, 1, &[1.0]),
            v: Matrix::zeros(1, 1),
            prescribed: false,
        };
        let report = surjectivity_check(&inst, &x, 1e-10).unwrap();
        assert_eq!(report.rank, 0);
        assert!(!report.surjective);
    }

    #[test]
    fn surjectivity_rejects_large_dimension() {
        let inst = mixed_instance(41);
        let x = inst.random_point(0);
        assert!(matches!(
            surjectivity_check(&inst, &x, 1e-10),
            Err(DiagnosticsError::DimensionTooLarge(41))
        ));
    }

    #[test]
    fn stacked_rank_matches_bruteforce_adjoint_rank() {
        for n in 2..=4usize {
            let inst = if n == 2 {
                real_instance(&[1.0, 2.0])
            } else {
                mixed_instance(n)
            };
            for seed in 0..5u64 {
                let x = inst.random_point(seed);
                let report = surjectivity_check(&inst, &x, 1e-10).unwrap();
                let brute = adjoint_rank_bruteforce(&inst, &x, 1e-10);
                assert_eq!(
                    report.rank, brute,
                    "n={n} seed={seed}: stacked rank {} vs brute-force {}",
                    report.rank, brute
                );
                // random points are generic: full rank expected
                assert!(report.surjective, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn verify_solution_passes_on_exact_solution() {
        let inst = real_instance(&[1.0, 9.0]);
        let x = ManifoldPoint {
            s: Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]),
            q: Matrix::identity(2, 2),
            v: Matrix::from_row_slice(2, 2, &[0.0, 4.0, 0.0, 0.0]),
            prescribed: false,
        };
        let verdict = verify_solution(&inst, &x, 1e-6).unwrap();
        assert!(verdict.pass);
        assert!(verdict.matching_cost <= 1e-12);
    }

    #[test]
    fn verify_solution_flags_perturbed_spectrum() {
        // perturbing one eigenvalue by 1e-3 costs about 1e-6 in matching
        let inst = real_instance(&[1.0, 9.0]);
        let x = ManifoldPoint {
            s: Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, (9.0f64 + 1e-3).sqrt()]),
            q: Matrix::identity(2, 2),
            v: Matrix::from_row_slice(2, 2, &[0.0, 4.0, 0.0, 0.0]),
            prescribed: false,
        };
        let verdict = verify_solution(&inst, &x, 1e-8).unwrap();
        assert!(!verdict.pass);
        assert_abs_diff_eq!(verdict.matching_cost, 1e-6, epsilon = 1e-8);
    }

    #[test]
    fn verify_solution_checks_prescribed_entries_bit_exact() {
        let mut c_a = Matrix::zeros(2, 2);
        c_a[(0, 1)] = 0.25;
        let pe = PrescribedEntries::new(2, vec![(0, 1)], &c_a);
        let spec = canonicalize_spectrum(
            &[Complex::new(1.0, 0.0), Complex::new(2.0, 0.0)],
            1e-12,
        )
        .unwrap();
        let inst = ProblemInstance::niep_pe(spec, pe);
        let x = inst.random_point(3);
        let verdict = verify_solution(&inst, &x, 1e-6).unwrap();
        // a random starting point pins the entries but misses the spectrum
        assert!(verdict.prescribed_exact);
        assert!(verdict.nonnegative);
        assert!(!verdict.spectrum_attained);
    }

    #[test]
    fn derivative_suite_passes_on_correct_build() {
        let inst = mixed_instance(4);
        let report = derivative_test_suite(&inst, &[0, 1, 2]);
        assert!(report.all_passed, "{report:?}");
        // the report serializes for machine consumption
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("adjoint_identity_error"));
    }

    #[test]
    fn derivative_suite_catches_sign_flipped_adjoint() {
        // a deliberately corrupted adjoint identity: flip the sign of dz
        let inst = mixed_instance(3);
        let x = inst.random_point(0);
        let xi = inst.random_tangent(&x, 1);
        let dz = inst.random_tangent(&x, 2).ds;
        let lhs = apply_differential(&inst, &x, &xi).dot(&dz);
        let rhs = xi.inner(&apply_adjoint(&inst, &x, &(-&dz)));
        assert!((lhs - rhs).abs() > 1e-6 * (1.0 + lhs.abs()));
    }

    #[test]
    fn fd_error_shrinks_quadratically_with_h() {
        let inst = mixed_instance(4);
        let x = inst.random_point(11);
        let xi = inst.random_tangent(&x, 12);
        let an = apply_differential(&inst, &x, &xi);
        let err_at = |h: f64| (fd_differential(&inst, &x, &xi, h).unwrap() - &an).norm();
        let (e3, e4) = (err_at(1e-3), err_at(1e-4));
        let ratio = e3 / e4;
        assert!(
            (20.0..500.0).contains(&ratio),
            "central differences should gain ~100× per 10× step shrink, got {ratio}"
        );
    }

    #[test]
    fn convergence_order_examples() {
        assert_abs_diff_eq!(
            convergence_order(&[1e-2, 1e-4, 1e-8]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            convergence_order(&[1e-1, 1e-2, 1e-3]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(
            convergence_order(&[1e-2, 1e-8]),
            Err(DiagnosticsError::TraceTooShort)
        );
        // zeros at the tail are skipped; the last strictly positive triple counts
        assert_abs_diff_eq!(
            convergence_order(&[1.0, 1e-2, 1e-4, 1e-8, 0.0]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }
}
