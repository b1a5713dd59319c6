//! Dense linear-algebra kernels the rest of the crate is built on.
//!
//! Everything here operates on `nalgebra` dynamic matrices. The pieces with
//! contracts of their own:
//!
//! * [`qf`] — the orthogonal factor of the unique QR decomposition whose
//!   triangular factor has strictly positive diagonal entries. This is the
//!   normalization the orthogonal-group retraction relies on.
//! * [`real_schur`] / [`complex_schur`] — Schur decompositions
//!   `A = QTQᵀ` (quasi-upper-triangular `T`) and `A = UTU^H` (upper
//!   triangular `T`).
//! * [`eigenvalues`] — eigenvalues of a real matrix read off the diagonal
//!   blocks of its real Schur form.
//! * [`match_multisets`] — exact minimum-cost matching between two complex
//!   multisets, used to compare computed spectra against prescribed ones
//!   without fixing an eigenvalue order.

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense complex matrix.
pub type CMatrix = DMatrix<Complex<f64>>;

/// Relative threshold below which a triangular diagonal entry counts as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    /// The input failed the nonsingularity test of [`qf`].
    #[error("matrix is singular to working precision")]
    SingularInput,
    /// The QR iteration underlying a Schur decomposition did not converge.
    #[error("Schur decomposition did not converge")]
    ConvergenceFailure,
    /// An input contained NaN or infinite entries.
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Real Schur factorization `A = Q T Qᵀ` with `Q` orthogonal and `T`
/// quasi-upper-triangular (1×1 and 2×2 diagonal blocks).
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub q: Matrix,
    pub t: Matrix,
}

/// Complex Schur factorization `A = U T U^H` with `U` unitary and `T`
/// upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub q: CMatrix,
    pub t: CMatrix,
}

/// Returns an error if any entry is NaN or infinite.
pub fn ensure_finite(a: &Matrix) -> Result<(), LinalgError> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// QR decomposition `A = QR` normalized so that `diag(R) > 0` strictly.
///
/// Under this normalization the decomposition of a nonsingular matrix is
/// unique, which makes `qf(Q) = (Q, I)` for orthogonal `Q` and turns the map
/// `A ↦ qf(A)` into a well-defined retraction onto the orthogonal group.
///
/// Fails with [`LinalgError::SingularInput`] when the smallest diagonal entry
/// of the raw triangular factor falls below `RANK_TOL · ‖A‖_F`.
pub fn qf(a: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "qf expects a square matrix");
    ensure_finite(a)?;
    let norm_a = a.norm();
    let (mut q, mut r) = a.clone().qr().unpack();
    let min_diag = (0..n).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if n > 0 && min_diag <= RANK_TOL * norm_a {
        return Err(LinalgError::SingularInput);
    }
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in 0..n {
                r[(i, j)] = -r[(i, j)];
                q[(j, i)] = -q[(j, i)];
            }
        }
    }
    Ok((q, r))
}

fn schur_max_iter(n: usize) -> usize {
    // generous multiple of the usual 30n LAPACK budget
    200 * n.max(4)
}

/// Real Schur decomposition of a real square matrix.
pub fn real_schur(a: &Matrix) -> Result<RealSchur, LinalgError> {
    ensure_finite(a)?;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "real_schur expects a square matrix");
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, schur_max_iter(n))
        .ok_or(LinalgError::ConvergenceFailure)?;
    let (q, t) = schur.unpack();
    Ok(RealSchur { q, t })
}

/// Complex Schur decomposition of a real square matrix.
pub fn complex_schur(a: &Matrix) -> Result<ComplexSchur, LinalgError> {
    ensure_finite(a)?;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "complex_schur expects a square matrix");
    let ac = a.map(|x| Complex::new(x, 0.0));
    let schur = nalgebra::linalg::Schur::try_new(ac, f64::EPSILON, schur_max_iter(n))
        .ok_or(LinalgError::ConvergenceFailure)?;
    let (q, t) = schur.unpack();
    Ok(ComplexSchur { q, t })
}

/// Diagonal block layout of a quasi-upper-triangular matrix: offsets and
/// sizes (1 or 2) of the blocks.
fn diagonal_blocks(t: &Matrix) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Sort key mirroring the canonical spectrum order: complex-pair blocks
/// first, ordered lexicographically by `(a, b)`, then real blocks ascending.
fn block_sort_key(t: &Matrix, offset: usize, size: usize) -> (u8, f64, f64) {
    if size == 2 {
        let (a11, a12) = (t[(offset, offset)], t[(offset, offset + 1)]);
        let (a21, a22) = (t[(offset + 1, offset)], t[(offset + 1, offset + 1)]);
        let mean = 0.5 * (a11 + a22);
        let disc = 0.25 * (a11 - a22) * (a11 - a22) + a12 * a21;
        let b = if disc < 0.0 { (-disc).sqrt() } else { 0.0 };
        (0, mean, b)
    } else {
        (1, t[(offset, offset)], 0.0)
    }
}

/// Swaps the adjacent diagonal blocks at `offset` (sizes `p` then `q`) by an
/// orthogonal similarity, updating `t` and accumulating into `q_acc`.
/// Returns false (leaving both untouched) when the blocks are too close to
/// swap stably.
fn swap_adjacent_blocks(t: &mut Matrix, q_acc: &mut Matrix, offset: usize, p: usize, q: usize) -> bool {
    let m = p + q;
    let b = t.view((offset, offset), (m, m)).clone_owned();
    let t11 = b.view((0, 0), (p, p)).clone_owned();
    let t12 = b.view((0, p), (p, q)).clone_owned();
    let t22 = b.view((p, p), (q, q)).clone_owned();

    // invariant-subspace equation T11·X − X·T22 = −T12, vectorized over the
    // pq ≤ 4 unknowns
    let mut sylvester = Matrix::zeros(p * q, p * q);
    for col in 0..q {
        for row in 0..p {
            let r = row + col * p;
            for k in 0..p {
                sylvester[(r, k + col * p)] += t11[(row, k)];
            }
            for k in 0..q {
                sylvester[(r, row + k * p)] -= t22[(k, col)];
            }
        }
    }
    let rhs = Matrix::from_column_slice(p * q, 1, (-&t12).as_slice());
    let sep = sylvester.norm();
    let x_vec = match sylvester.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => return false,
    };
    // reject swaps of nearly confluent blocks
    if x_vec.norm() > 1e12 * (1.0 + sep) {
        return false;
    }
    let x = Matrix::from_column_slice(p, q, x_vec.as_slice());

    // orthonormal frame whose leading q columns span the T22-eigenspace
    // span{[X; I]}; the trailing columns complete the basis
    let mut frame = Matrix::zeros(m, m);
    frame.view_mut((0, 0), (p, q)).copy_from(&x);
    frame.view_mut((p, 0), (q, q)).copy_from(&Matrix::identity(q, q));
    frame.view_mut((0, q), (p, p)).copy_from(&Matrix::identity(p, p));
    let (u, _) = frame.qr().unpack();

    let b_new = u.transpose() * &b * &u;
    // the swap must leave the sub-block triangular to rounding
    let spill = b_new.view((q, 0), (p, q)).norm();
    if spill > 1e-8 * (1.0 + b.norm()) {
        return false;
    }

    // apply the similarity to the full factorization
    let n = t.nrows();
    let mut t_rows = t.view((offset, 0), (m, n)).clone_owned();
    t_rows = u.transpose() * t_rows;
    t.view_mut((offset, 0), (m, n)).copy_from(&t_rows);
    let mut t_cols = t.view((0, offset), (n, m)).clone_owned();
    t_cols *= &u;
    t.view_mut((0, offset), (n, m)).copy_from(&t_cols);
    let mut q_cols = q_acc.view((0, offset), (n, m)).clone_owned();
    q_cols *= &u;
    q_acc.view_mut((0, offset), (n, m)).copy_from(&q_cols);

    // restore exact zeros below the swapped blocks
    for j in offset..(offset + m) {
        for i in (j + 1)..n {
            let inside_new_pair = (i == j + 1)
                && ((j == offset && q == 2) || (j == offset + q && p == 2));
            if !inside_new_pair {
                t[(i, j)] = 0.0;
            }
        }
    }
    true
}

/// Reorders a real Schur factorization so that its diagonal blocks follow
/// the canonical spectrum order (conjugate-pair blocks sorted by `(a, b)`,
/// then real eigenvalues ascending), using orthogonal block swaps.
///
/// Swaps that would be numerically unstable (nearly confluent eigenvalues)
/// are skipped, so the order is best-effort; the result is still an exact
/// Schur factorization of the same matrix up to rounding.
pub fn sort_real_schur(schur: RealSchur) -> RealSchur {
    let RealSchur { mut q, mut t } = schur;
    let n = t.nrows();
    let mut budget = n * n + 16;
    loop {
        let blocks = diagonal_blocks(&t);
        let mut swapped = false;
        for w in 0..blocks.len().saturating_sub(1) {
            let (off1, s1) = blocks[w];
            let (off2, s2) = blocks[w + 1];
            let k1 = block_sort_key(&t, off1, s1);
            let k2 = block_sort_key(&t, off2, s2);
            if k2 < k1 && swap_adjacent_blocks(&mut t, &mut q, off1, s1, s2) {
                swapped = true;
                break; // block layout may have shifted; rescan
            }
        }
        budget -= 1;
        if !swapped || budget == 0 {
            break;
        }
    }
    RealSchur { q, t }
}

/// Real Schur decomposition with diagonal blocks in canonical order.
pub fn real_schur_canonical(a: &Matrix) -> Result<RealSchur, LinalgError> {
    Ok(sort_real_schur(real_schur(a)?))
}

/// Eigenvalues of the quasi-upper-triangular factor `t`, read off its 1×1 and
/// 2×2 diagonal blocks. Conjugate pairs come out exactly symmetric.
pub fn eigenvalues_of_quasi_triangular(t: &Matrix) -> Vec<Complex<f64>> {
    let n = t.nrows();
    let mut eigs = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a11, a12) = (t[(i, i)], t[(i, i + 1)]);
            let (a21, a22) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mean = 0.5 * (a11 + a22);
            let disc = 0.25 * (a11 - a22) * (a11 - a22) + a12 * a21;
            if disc < 0.0 {
                let b = (-disc).sqrt();
                eigs.push(Complex::new(mean, b));
                eigs.push(Complex::new(mean, -b));
            } else {
                let d = disc.sqrt();
                eigs.push(Complex::new(mean + d, 0.0));
                eigs.push(Complex::new(mean - d, 0.0));
            }
            i += 2;
        } else {
            eigs.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    eigs
}

/// Eigenvalues of a real square matrix via its real Schur form.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>, LinalgError> {
    let schur = real_schur(a)?;
    Ok(eigenvalues_of_quasi_triangular(&schur.t))
}

/// Minimum-cost bijection between two complex multisets of equal size.
///
/// Returns `(assignment, total_cost)` where `assignment[i] = j` pairs `u[i]`
/// with `v[j]` and the cost of a pair is `|u_i − v_j|²`. The matching is
/// exact (Hungarian algorithm with potentials, O(n³)); greedy matching can
/// report spurious mismatches on clustered spectra.
pub fn match_multisets(u: &[Complex<f64>], v: &[Complex<f64>]) -> (Vec<usize>, f64) {
    assert_eq!(u.len(), v.len(), "multisets must have equal size");
    let n = u.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let cost = |i: usize, j: usize| (u[i] - v[j]).norm_sqr();

    // Hungarian algorithm with row/column potentials; indices are 1-based
    // internally with 0 as the virtual unmatched column.
    let mut pot_u = vec![0.0f64; n + 1];
    let mut pot_v = vec![0.0f64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - pot_u[i0] - pot_v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    pot_u[matched[j]] += delta;
                    pot_v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched[j] != 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost(i, j))
        .sum();
    (assignment, total)
}
