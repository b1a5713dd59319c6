//! The product manifold `ℝ^{n×n} × O(n) × V` and its prescribed-entries
//! variant `Z × O(n) × V`.
//!
//! A point is a triple `(S, Q, V)` with `Q` orthogonal and `V` supported on
//! the free index set `J` (enforced through the mask `W`); in the
//! prescribed-entries variant `S` additionally vanishes on `L` (mask `Û`).
//! Tangent vectors are triples `(ΔS, ΔQ, ΔV)` with `QᵀΔQ` skew-symmetric and
//! the same support constraints.
//!
//! The metric is the ambient Frobenius inner product restricted to the
//! tangent space,
//!
//! ```text
//! ⟨(X₁,Y₁,Z₁), (X₂,Y₂,Z₂)⟩ = tr(X₁ᵀX₂) + tr(Y₁ᵀY₂) + tr(Z₁ᵀZ₂),
//! ```
//!
//! and the retraction is additive on the linear factors and `qf` on the
//! orthogonal group:
//!
//! ```text
//! R_{(S,Q,V)}(ξ, ζ, η) = (S + ξ, qf(Q + ζ), V + η).
//! ```
//!
//! Points are not re-orthonormalized on read; the retraction is the only
//! feasibility mechanism, and a failed `qf` surfaces as
//! [`LinalgError::SingularInput`] for the caller to treat as a rejected step.

use crate::linalg::{qf, real_schur_canonical, LinalgError, Matrix};
use crate::spectrum::{LambdaStructure, PrescribedEntries};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Orthogonality slack tolerated on stored points.
pub const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("Q is not orthogonal: ‖QᵀQ − I‖_F = {0:e}")]
    NotOrthogonal(f64),
    #[error("V has mass on the fixed index set I: {0:e}")]
    SupportViolation(f64),
    #[error("S has mass on the prescribed index set L: {0:e}")]
    PrescribedViolation(f64),
    #[error("QᵀΔQ is not skew-symmetric: {0:e}")]
    NotSkew(f64),
}

/// A point `(S, Q, V)` on the product manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub s: Matrix,
    pub q: Matrix,
    pub v: Matrix,
    /// True when the point lives on `Z × O(n) × V` (prescribed entries).
    pub prescribed: bool,
}

/// A tangent vector `(ΔS, ΔQ, ΔV)` at some point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub ds: Matrix,
    pub dq: Matrix,
    pub dv: Matrix,
}

impl ManifoldPoint {
    pub fn n(&self) -> usize {
        self.s.nrows()
    }

    /// Verifies the point invariants against the problem structure.
    pub fn check(
        &self,
        lambda: &LambdaStructure,
        prescribed: Option<&PrescribedEntries>,
    ) -> Result<(), ManifoldError> {
        let n = self.n();
        let ortho_dev = (self.q.transpose() * &self.q - Matrix::identity(n, n)).norm();
        if ortho_dev > ORTHO_TOL {
            return Err(ManifoldError::NotOrthogonal(ortho_dev));
        }
        // V must vanish on I, i.e. W ⊙ V = V
        let support_dev = (lambda.w.component_mul(&self.v) - &self.v).norm();
        if support_dev > 0.0 {
            return Err(ManifoldError::SupportViolation(support_dev));
        }
        if let Some(pe) = prescribed {
            let pinned = pe.u_hat.component_mul(&self.s).norm();
            if pinned > 0.0 {
                return Err(ManifoldError::PrescribedViolation(pinned));
            }
        }
        Ok(())
    }
}

impl TangentVector {
    pub fn zeros(n: usize) -> Self {
        TangentVector {
            ds: Matrix::zeros(n, n),
            dq: Matrix::zeros(n, n),
            dv: Matrix::zeros(n, n),
        }
    }

    /// Riemannian inner product (sum of the three Frobenius products). The
    /// metric does not depend on the base point.
    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.ds.dot(&other.ds) + self.dq.dot(&other.dq) + self.dv.dot(&other.dv)
    }

    /// Norm induced by [`TangentVector::inner`].
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, a: f64) -> TangentVector {
        TangentVector {
            ds: &self.ds * a,
            dq: &self.dq * a,
            dv: &self.dv * a,
        }
    }

    pub fn add_scaled(&self, a: f64, other: &TangentVector) -> TangentVector {
        TangentVector {
            ds: &self.ds + &other.ds * a,
            dq: &self.dq + &other.dq * a,
            dv: &self.dv + &other.dv * a,
        }
    }

    /// Verifies the tangent-space invariants at `base`.
    pub fn check(
        &self,
        base: &ManifoldPoint,
        lambda: &LambdaStructure,
        prescribed: Option<&PrescribedEntries>,
        skew_tol: f64,
    ) -> Result<(), ManifoldError> {
        let qtdq = base.q.transpose() * &self.dq;
        let sym = (&qtdq + qtdq.transpose()).norm();
        if sym > skew_tol * (1.0 + self.dq.norm()) {
            return Err(ManifoldError::NotSkew(sym));
        }
        let support_dev = (lambda.w.component_mul(&self.dv) - &self.dv).norm();
        if support_dev > 0.0 {
            return Err(ManifoldError::SupportViolation(support_dev));
        }
        if let Some(pe) = prescribed {
            let pinned = pe.u_hat.component_mul(&self.ds).norm();
            if pinned > 0.0 {
                return Err(ManifoldError::PrescribedViolation(pinned));
            }
        }
        Ok(())
    }
}

/// Retraction `R_X(ξ) = (S + ξ_S, qf(Q + ξ_Q), V + ξ_V)`.
///
/// Fails with [`LinalgError::SingularInput`] when `Q + ξ_Q` is numerically
/// singular; callers in a line search treat that as a rejected step.
pub fn retract(base: &ManifoldPoint, xi: &TangentVector) -> Result<ManifoldPoint, LinalgError> {
    let (q, _) = qf(&(&base.q + &xi.dq))?;
    Ok(ManifoldPoint {
        s: &base.s + &xi.ds,
        q,
        v: &base.v + &xi.dv,
        prescribed: base.prescribed,
    })
}

/// Seeded starting point.
///
/// Draws `C⁰` with uniform entries via `S ⊙ S = rand(n,n)` (so `S` is the
/// entrywise square root of uniforms), takes a real Schur factorization
/// `C⁰ = Q T Qᵀ`, and keeps `Q⁰ = Q`, `V⁰ = W ⊙ T`. In the
/// prescribed-entries variant `S` is first zeroed on `L` and the anchor
/// `Ĉ_a` is added to `C⁰` before factorizing, so that
/// `C⁰ = Ĉ_a + S⁰ ⊙ S⁰` lies in the prescribed set.
///
/// The Schur factorization is taken with its diagonal blocks in the same
/// canonical order `Λ` uses, so the initial residual measures eigenvalue
/// distance rather than an arbitrary ordering mismatch; any block order is
/// a valid Schur factorization of `C⁰`.
pub fn random_point(
    lambda: &LambdaStructure,
    prescribed: Option<&PrescribedEntries>,
    seed: u64,
) -> ManifoldPoint {
    let n = lambda.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Matrix::from_fn(n, n, |_, _| rng.random::<f64>().sqrt());
    if let Some(pe) = prescribed {
        s = pe.free_mask().component_mul(&s);
    }
    let mut c0 = s.component_mul(&s);
    if let Some(pe) = prescribed {
        c0 += &pe.c_hat;
    }
    let schur =
        real_schur_canonical(&c0).expect("Schur factorization of the starting matrix failed");
    let v = lambda.w.component_mul(&schur.t);
    ManifoldPoint {
        s,
        q: schur.q,
        v,
        prescribed: prescribed.is_some(),
    }
}

/// Seeded tangent vector at `base`: Gaussian `ΔS` (restricted to `Z` in the
/// prescribed variant), `ΔQ = QΩ` with `Ω` the skew part of a Gaussian
/// matrix, and `ΔV = W ⊙ B` for Gaussian `B`.
pub fn random_tangent(
    base: &ManifoldPoint,
    lambda: &LambdaStructure,
    prescribed: Option<&PrescribedEntries>,
    seed: u64,
) -> TangentVector {
    let n = base.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |_: usize, _: usize| -> f64 { rng.sample(StandardNormal) };
    let mut ds = Matrix::from_fn(n, n, &mut gaussian);
    let a = Matrix::from_fn(n, n, &mut gaussian);
    let b = Matrix::from_fn(n, n, &mut gaussian);
    if let Some(pe) = prescribed {
        ds = pe.free_mask().component_mul(&ds);
    }
    let omega = (&a - a.transpose()) * 0.5;
    TangentVector {
        ds,
        dq: &base.q * omega,
        dv: lambda.w.component_mul(&b),
    }
}
