//! The residual map and its first-order calculus.
//!
//! For a problem instance with canonical matrix `Λ` the residual at a point
//! `X = (S, Q, V)` is
//!
//! ```text
//! G(X) = S ⊙ S − Q(Λ + V)Qᵀ            (plain)
//! H(X) = Ĉ_a + S ⊙ S − Q(Λ + V)Qᵀ     (prescribed entries)
//! ```
//!
//! Its differential along a tangent `(ΔS, ΔQ, ΔV)` is
//!
//! ```text
//! DG(X)[Δ] = 2S ⊙ ΔS + [Q(Λ+V)Qᵀ, ΔQQᵀ] − QΔVQᵀ,
//! ```
//!
//! and the adjoint with respect to the product metric sends `ΔZ` to
//!
//! ```text
//! ( 2S ⊙ ΔZ,
//!   ½([Q(Λ+V)Qᵀ, ΔZᵀ] + [Q(Λ+V)ᵀQᵀ, ΔZ])Q,
//!   −W ⊙ (QᵀΔZ Q) )
//! ```
//!
//! where `[A, B] = AB − BA`. The bracket sum is skew-symmetric, so the
//! Q-component lands in the tangent space of `O(n)` by construction, and the
//! Hadamard mask keeps the V-component supported on `J`. The same formulas
//! serve the prescribed-entries variant; its S-component `2S ⊙ ΔZ` already
//! lies in `Z` because `S` does, and is re-masked here only to keep the
//! support exactly zero under floating point.
//!
//! The gradient of the squared-residual cost `φ(X) = ½‖G(X)‖_F²` is
//! `DG(X)*[G(X)]`, and the pullback `Ĝ_X(ξ) = G(R_X(ξ))` composes the
//! residual with the retraction; its differential at the origin is `DG(X)`,
//! which is what the finite-difference checks in [`crate::diagnostics`]
//! exploit.

use crate::linalg::{LinalgError, Matrix};
use crate::manifold::{retract, random_point, random_tangent, ManifoldPoint, TangentVector};
use crate::spectrum::{LambdaStructure, PrescribedEntries, SpectrumSpec};

/// A problem statement: the canonical spectrum structure plus, for the
/// prescribed-entries variant, the pinned index set and anchor.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub spec: SpectrumSpec,
    pub lambda: LambdaStructure,
    pub prescribed: Option<PrescribedEntries>,
}

impl ProblemInstance {
    pub fn niep(spec: SpectrumSpec) -> Self {
        let lambda = crate::spectrum::build_lambda(&spec);
        ProblemInstance {
            spec,
            lambda,
            prescribed: None,
        }
    }

    pub fn niep_pe(spec: SpectrumSpec, prescribed: PrescribedEntries) -> Self {
        assert_eq!(spec.n, prescribed.n, "prescribed entries size mismatch");
        let lambda = crate::spectrum::build_lambda(&spec);
        ProblemInstance {
            spec,
            lambda,
            prescribed: Some(prescribed),
        }
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn is_prescribed(&self) -> bool {
        self.prescribed.is_some()
    }

    /// The candidate solution a point encodes: `C = S ⊙ S`, plus the anchor
    /// `Ĉ_a` in the prescribed variant. Entrywise nonnegative by
    /// construction.
    pub fn reconstruct(&self, x: &ManifoldPoint) -> Matrix {
        let mut c = x.s.component_mul(&x.s);
        if let Some(pe) = &self.prescribed {
            c += &pe.c_hat;
        }
        c
    }

    /// Seeded starting point on the instance's manifold.
    pub fn random_point(&self, seed: u64) -> ManifoldPoint {
        random_point(&self.lambda, self.prescribed.as_ref(), seed)
    }

    /// Seeded tangent vector at `base`.
    pub fn random_tangent(&self, base: &ManifoldPoint, seed: u64) -> TangentVector {
        random_tangent(base, &self.lambda, self.prescribed.as_ref(), seed)
    }

    /// `Q(Λ + V)Qᵀ`, the isospectral part of the residual. The solver caches
    /// this between operator applications at a fixed point.
    pub fn conjugated_form(&self, x: &ManifoldPoint) -> Matrix {
        &x.q * (&self.lambda.lambda + &x.v) * x.q.transpose()
    }
}

/// Residual `G(X)` (or `H(X)` for the prescribed variant).
pub fn residual(instance: &ProblemInstance, x: &ManifoldPoint) -> Matrix {
    let a = instance.conjugated_form(x);
    residual_cached(instance, x, &a)
}

pub(crate) fn residual_cached(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    conjugated: &Matrix,
) -> Matrix {
    let mut g = x.s.component_mul(&x.s) - conjugated;
    if let Some(pe) = &instance.prescribed {
        g += &pe.c_hat;
    }
    g
}

/// Differential `DG(X)[ξ]`, linear in `ξ`.
pub fn apply_differential(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    xi: &TangentVector,
) -> Matrix {
    let a = instance.conjugated_form(x);
    apply_differential_cached(x, &a, xi)
}

pub(crate) fn apply_differential_cached(
    x: &ManifoldPoint,
    conjugated: &Matrix,
    xi: &TangentVector,
) -> Matrix {
    let dqqt = &xi.dq * x.q.transpose();
    let bracket = conjugated * &dqqt - &dqqt * conjugated;
    let s_part = x.s.component_mul(&xi.ds) * 2.0;
    s_part + bracket - &x.q * &xi.dv * x.q.transpose()
}

/// Adjoint `DG(X)*[ΔZ]` with respect to the product metric. The result is a
/// valid tangent vector at `x`: the Q-component has the form `QΩ` with `Ω`
/// skew, the V-component is supported on `J`, and in the prescribed variant
/// the S-component vanishes on `L` exactly.
pub fn apply_adjoint(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    dz: &Matrix,
) -> TangentVector {
    let a = instance.conjugated_form(x);
    apply_adjoint_cached(instance, x, &a, dz)
}

pub(crate) fn apply_adjoint_cached(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    conjugated: &Matrix,
    dz: &Matrix,
) -> TangentVector {
    let mut ds = x.s.component_mul(dz) * 2.0;
    if let Some(pe) = &instance.prescribed {
        // already supported off L since S is; kill floating-point dust
        ds = pe.free_mask().component_mul(&ds);
    }

    let dzt = dz.transpose();
    let at = conjugated.transpose();
    let bracket1 = conjugated * &dzt - &dzt * conjugated;
    let bracket2 = &at * dz - dz * &at;
    let dq = (bracket1 + bracket2) * 0.5 * &x.q;

    let dv = -instance.lambda.w.component_mul(&(x.q.transpose() * dz * &x.q));
    TangentVector { ds, dq, dv }
}

/// Riemannian gradient of `φ(X) = ½‖G(X)‖_F²`, i.e. `DG(X)*[G(X)]`.
pub fn gradient_cost(instance: &ProblemInstance, x: &ManifoldPoint) -> TangentVector {
    let a = instance.conjugated_form(x);
    let g = residual_cached(instance, x, &a);
    apply_adjoint_cached(instance, x, &a, &g)
}

/// Pullback residual `Ĝ_X(ξ) = G(R_X(ξ))`.
pub fn pullback_residual(
    instance: &ProblemInstance,
    x: &ManifoldPoint,
    xi: &TangentVector,
) -> Result<Matrix, LinalgError> {
    Ok(residual(instance, &retract(x, xi)?))
}
