//! Canonicalization of the prescribed spectrum and the induced structure.
//!
//! The problem data is a self-conjugate multiset of complex numbers. This
//! module turns a raw list into a canonical [`SpectrumSpec`] (conjugate pairs
//! first, then reals, with a deterministic order), builds the block-diagonal
//! matrix `Λ` whose eigenvalues are that spectrum, and derives the index sets
//! and masks the manifold parametrization needs:
//!
//! * `I = {(i,j) | i ≥ j or Λ_{ij} ≠ 0}` — positions where `V` must vanish,
//! * `J = N \ I` — the free strictly-upper positions of `V`,
//! * `W` — the 0/1 mask with ones exactly on `J`.
//!
//! For problems with prescribed entries, [`PrescribedEntries`] carries the
//! index set `L`, its mask `Û`, and the anchor matrix `Ĉ_a = Û ⊙ C_a`.

use crate::linalg::{match_multisets, Matrix};
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    /// A value with a significant imaginary part has no conjugate partner
    /// within the pairing tolerance.
    #[error("eigenvalue {0} has no conjugate partner within tolerance {1:e}")]
    UnpairedComplexValue(Complex<f64>, f64),
    #[error("spectrum contains a non-finite value")]
    NonFiniteValue,
    #[error("spectrum must contain at least one value")]
    Empty,
}

/// A canonicalized self-conjugate eigenvalue list.
///
/// Entries `0..2s` are conjugate pairs `(a_i + b_i·i, a_i − b_i·i)` with
/// `b_i > 0`, sorted lexicographically by `(a_i, b_i)`; entries `2s..n` are
/// the real eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumSpec {
    pub n: usize,
    /// Number of conjugate pairs.
    pub s: usize,
    pub values: Vec<Complex<f64>>,
}

impl SpectrumSpec {
    /// Largest modulus among the prescribed eigenvalues.
    pub fn magnitude(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Real and imaginary part of the `i`-th conjugate pair (`i < s`).
    fn pair(&self, i: usize) -> (f64, f64) {
        let z = self.values[2 * i];
        (z.re, z.im)
    }
}

/// Default conjugate-pairing tolerance for a raw value list:
/// `1e-10 · max(1, max_i |λ_i|)`.
pub fn default_pair_tol(raw: &[Complex<f64>]) -> f64 {
    let mag = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    1e-10 * mag.max(1.0)
}

/// Canonicalizes a raw self-conjugate list of complex numbers.
///
/// Values with `|imag| ≤ pair_tol` are snapped to the real axis. The
/// remaining values are matched to conjugate partners (exact minimum-cost
/// matching); each matched pair is stored exactly conjugate-symmetric by
/// averaging its real and imaginary parts. Fails with
/// [`SpectrumError::UnpairedComplexValue`] when a value with a significant
/// imaginary part has no partner within `pair_tol`.
pub fn canonicalize_spectrum(
    raw: &[Complex<f64>],
    pair_tol: f64,
) -> Result<SpectrumSpec, SpectrumError> {
    if raw.is_empty() {
        return Err(SpectrumError::Empty);
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectrumError::NonFiniteValue);
    }
    assert!(pair_tol >= 0.0, "pair_tol must be nonnegative");

    let mut reals: Vec<f64> = Vec::new();
    let mut upper: Vec<Complex<f64>> = Vec::new();
    let mut lower: Vec<Complex<f64>> = Vec::new();
    for &z in raw {
        if z.im.abs() <= pair_tol {
            reals.push(z.re);
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    if upper.len() != lower.len() {
        let odd = if upper.len() > lower.len() {
            *upper.last().unwrap()
        } else {
            *lower.last().unwrap()
        };
        return Err(SpectrumError::UnpairedComplexValue(odd, pair_tol));
    }

    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(upper.len());
    if !upper.is_empty() {
        let conj_lower: Vec<Complex<f64>> = lower.iter().map(|z| z.conj()).collect();
        let (assignment, _) = match_multisets(&upper, &conj_lower);
        for (i, &j) in assignment.iter().enumerate() {
            let z = upper[i];
            let w = lower[j];
            if (z - w.conj()).norm() > pair_tol {
                return Err(SpectrumError::UnpairedComplexValue(z, pair_tol));
            }
            // exact conjugate symmetry by averaging across the pair
            pairs.push((0.5 * (z.re + w.re), 0.5 * (z.im - w.im)));
        }
    }

    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let s = pairs.len();
    let n = 2 * s + reals.len();
    let mut values = Vec::with_capacity(n);
    for &(a, b) in &pairs {
        values.push(Complex::new(a, b));
        values.push(Complex::new(a, -b));
    }
    values.extend(reals.iter().map(|&r| Complex::new(r, 0.0)));
    Ok(SpectrumSpec { n, s, values })
}

/// Canonicalizes with the default pairing tolerance.
pub fn canonicalize_spectrum_default(raw: &[Complex<f64>]) -> Result<SpectrumSpec, SpectrumError> {
    canonicalize_spectrum(raw, default_pair_tol(raw))
}

/// The block-diagonal matrix `Λ`, the index sets `I`/`J`, and the mask `W`.
///
/// Index pairs are 0-based. `dim_manifold` is the dimension
/// `n² + n(n−1)/2 + |J|` of the product manifold `ℝ^{n×n} × O(n) × V`.
#[derive(Debug, Clone)]
pub struct LambdaStructure {
    pub n: usize,
    pub lambda: Matrix,
    /// Positions where `V` must vanish: `i ≥ j` or `Λ_{ij} ≠ 0`.
    pub index_set_i: Vec<(usize, usize)>,
    /// Complement of `I`: the free positions of `V`.
    pub index_set_j: Vec<(usize, usize)>,
    /// 0/1 mask with ones exactly on `J`.
    pub w: Matrix,
    pub dim_manifold: usize,
}

/// Builds `Λ = blkdiag([[a_i, b_i], [−b_i, a_i]], …, λ_{2s+1}, …, λ_n)` and
/// the derived index sets and mask.
pub fn build_lambda(spec: &SpectrumSpec) -> LambdaStructure {
    let n = spec.n;
    let mut lambda = Matrix::zeros(n, n);
    for i in 0..spec.s {
        let (a, b) = spec.pair(i);
        lambda[(2 * i, 2 * i)] = a;
        lambda[(2 * i, 2 * i + 1)] = b;
        lambda[(2 * i + 1, 2 * i)] = -b;
        lambda[(2 * i + 1, 2 * i + 1)] = a;
    }
    for i in (2 * spec.s)..n {
        lambda[(i, i)] = spec.values[i].re;
    }

    let mut index_set_i = Vec::new();
    let mut index_set_j = Vec::new();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i >= j || lambda[(i, j)] != 0.0 {
                index_set_i.push((i, j));
            } else {
                index_set_j.push((i, j));
                w[(i, j)] = 1.0;
            }
        }
    }
    let dim_manifold = n * n + n * (n - 1) / 2 + index_set_j.len();
    LambdaStructure {
        n,
        lambda,
        index_set_i,
        index_set_j,
        w,
        dim_manifold,
    }
}

/// Prescribed entries for the NIEP-PE: the index set `L`, its 0/1 mask `Û`,
/// and the anchor `Ĉ_a = Û ⊙ C_a`.
#[derive(Debug, Clone)]
pub struct PrescribedEntries {
    pub n: usize,
    /// Index pairs (0-based) where entries of the solution are pinned.
    pub index_set_l: Vec<(usize, usize)>,
    /// `Û_{ij} = 1` iff `(i,j) ∈ L`.
    pub u_hat: Matrix,
    /// `Ĉ_a = Û ⊙ C_a`; zero off `L`, nonnegative on `L`.
    pub c_hat: Matrix,
}

impl PrescribedEntries {
    /// Builds the masks from an index set and a value matrix. Entries of
    /// `c_a` off `L` are ignored; entries on `L` must be nonnegative.
    pub fn new(n: usize, index_set_l: Vec<(usize, usize)>, c_a: &Matrix) -> Self {
        assert_eq!(c_a.nrows(), n);
        assert_eq!(c_a.ncols(), n);
        let mut u_hat = Matrix::zeros(n, n);
        let mut c_hat = Matrix::zeros(n, n);
        for &(i, j) in &index_set_l {
            assert!(i < n && j < n, "prescribed index out of range");
            assert!(c_a[(i, j)] >= 0.0, "prescribed entries must be nonnegative");
            u_hat[(i, j)] = 1.0;
            c_hat[(i, j)] = c_a[(i, j)];
        }
        PrescribedEntries {
            n,
            index_set_l,
            u_hat,
            c_hat,
        }
    }

    /// Complement mask `1 − Û`, used to keep `S` (and tangent `ΔS`) in `Z`.
    pub fn free_mask(&self) -> Matrix {
        self.u_hat.map(|x| 1.0 - x)
    }
}

/// Parses the spectrum file format: one eigenvalue per line, either `a` or
/// `a b` (real and imaginary part); `#` starts a comment.
pub fn parse_spectrum_file(text: &str) -> Result<Vec<Complex<f64>>, String> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<f64, String> {
            s.parse::<f64>()
                .map_err(|e| format!("line {}: bad number {:?}: {}", lineno + 1, s, e))
        };
        match parts.as_slice() {
            [re] => values.push(Complex::new(parse(re)?, 0.0)),
            [re, im] => values.push(Complex::new(parse(re)?, parse(im)?)),
            _ => {
                return Err(format!(
                    "line {}: expected `a` or `a b`, got {:?}",
                    lineno + 1,
                    line
                ))
            }
        }
    }
    Ok(values)
}

/// Writes a spectrum in the same file format, in canonical order.
pub fn format_spectrum_file(spec: &SpectrumSpec) -> String {
    let mut out = String::new();
    for z in &spec.values {
        if z.im == 0.0 {
            out.push_str(&format!("{:.17e}\n", z.re));
        } else {
            out.push_str(&format!("{:.17e} {:.17e}\n", z.re, z.im));
        }
    }
    out
}
