//! Small dense/sparse linear-algebra helpers used across the crate.
//!
//! Frame Gram matrices are symmetric and, for localized frames such as
//! Gabor systems, mostly zero. [`SparseSym`] keeps the nonzero structure so
//! products and the Hadamard-product systems of the shrinkage solvers scale
//! with the number of overlapping atoms instead of `N²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Entries with magnitude at or below this fraction of the largest entry are
/// treated as structural zeros.
pub const SPARSE_DROP: f64 = 1e-12;

/// Relative singular-value cutoff for pseudo-inverses and least squares.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Symmetric matrix in compressed-row form (both triangles stored).
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseSym {
    /// Builds from a dense symmetric matrix, dropping entries below
    /// `SPARSE_DROP * max|a_ij|`.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "SparseSym needs a square matrix");
        let n = a.nrows();
        let scale = a.amax();
        let cutoff = SPARSE_DROP * scale;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v.abs() > cutoff || (i == j && v != 0.0) {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let diag = (0..n).map(|i| a[(i, i)]).collect();
        SparseSym { n, row_ptr, cols, vals, diag }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            out[i] = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
        out
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                x[i] * c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum::<f64>()
            })
            .sum()
    }

    /// Lower-triangle sparsity pattern (column indices `j <= i`, sorted).
    pub fn lower_pattern(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| {
                let (c, _) = self.row(i);
                let mut lower: Vec<usize> = c.iter().copied().filter(|&j| j <= i).collect();
                if !lower.contains(&i) {
                    lower.push(i);
                }
                lower.sort_unstable();
                lower
            })
            .collect()
    }
}

/// Moore–Penrose inverse through the SVD, with singular values below
/// `SVD_CUTOFF * s_max` treated as zero. Also returns the extreme singular
/// values of `a`.
pub fn pinv_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, f64)> {
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let u = svd.u.as_ref().ok_or_else(|| Error::SolveFailure("SVD did not produce U".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::SolveFailure("SVD did not produce V^T".into()))?;
    let cutoff = SVD_CUTOFF * smax;
    let k = s.len();
    let mut scaled_ut = u.columns(0, k).transpose();
    for i in 0..k {
        let inv = if s[i] > cutoff { 1.0 / s[i] } else { 0.0 };
        scaled_ut.row_mut(i).scale_mut(inv);
    }
    let pinv = vt.rows(0, k).transpose() * scaled_ut;
    Ok((pinv, smin, smax))
}

/// Minimum-norm least-squares solution of `a x = b` through the SVD.
pub fn lstsq_svd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::SolveFailure("non-finite matrix".into()));
    }
    svd.solve(b, SVD_CUTOFF * smax).map_err(|e| Error::SolveFailure(e.to_string()))
}

/// Root-free envelope (profile) `L D Lᵀ` factorization of a symmetric
/// positive-definite matrix.
///
/// Fill-in is confined to each row's envelope (from its first nonzero column
/// to the diagonal), so banded and nearly banded systems factor in
/// `O(N · bandwidth²)`.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl EnvelopeLdl {
    /// Factors the matrix whose lower triangle is given by `pattern`
    /// (sorted column indices per row, diagonal included) and `entry(i, j)`.
    /// Returns `None` when a pivot is not safely positive.
    pub fn factor(pattern: &[Vec<usize>], entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let n = pattern.len();
        let first: Vec<usize> =
            pattern.iter().enumerate().map(|(i, p)| p.first().copied().unwrap_or(i).min(i)).collect();
        let diag_scale = (0..n).map(|i| entry(i, i).abs()).fold(0.0, f64::max);
        let tiny = 1e-13 * diag_scale.max(f64::MIN_POSITIVE);

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut t = Vec::new();
        for i in 0..n {
            let fi = first[i];
            let width = i - fi;
            // t holds A_ij - sum_k L_ik d_k L_jk, i.e. L_ij d_j once finished.
            t.clear();
            t.resize(width, 0.0);
            let mut a_ii = 0.0;
            for &j in &pattern[i] {
                if j < i {
                    t[j - fi] = entry(i, j);
                } else if j == i {
                    a_ii = entry(i, i);
                }
            }
            let mut li = vec![0.0; width];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let lj = &rows[j];
                let mut s = t[j - fi];
                for k in k0..j {
                    s -= li[k - fi] * d[k] * lj[k - fj];
                }
                t[j - fi] = s;
                li[j - fi] = s / d[j];
            }
            let mut dii = a_ii;
            for k in 0..width {
                dii -= li[k] * t[k];
            }
            if !(dii > tiny) || !dii.is_finite() {
                return None;
            }
            d.push(dii);
            rows.push(li);
        }
        Some(EnvelopeLdl { first, rows, d })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.d.len();
        let mut z = b.clone();
        for i in 0..n {
            let fi = self.first[i];
            let s: f64 = self.rows[i].iter().enumerate().map(|(k, l)| l * z[fi + k]).sum();
            z[i] -= s;
        }
        for i in 0..n {
            z[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = z[i];
            for (k, l) in self.rows[i].iter().enumerate() {
                z[fi + k] -= l * xi;
            }
        }
        z
    }
}

/// Solves the symmetric system defined by `pattern`/`entry` with an
/// envelope `LDLᵀ`, falling back to SVD least squares when the matrix is not
/// numerically positive definite.
pub fn solve_sym(
    pattern: &[Vec<usize>],
    entry: impl Fn(usize, usize) -> f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = pattern.len();
    if rhs.len() != n {
        return Err(Error::dims(n, rhs.len()));
    }
    if let Some(ldl) = EnvelopeLdl::factor(pattern, &entry) {
        let x = ldl.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let mut a = DMatrix::zeros(n, n);
    for (i, p) in pattern.iter().enumerate() {
        for &j in p {
            let v = entry(i, j);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let x = lstsq_svd(&a, rhs)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SolveFailure("least-squares fallback produced non-finite values".into()))
    }
}

/// `A x` for the symmetric matrix given by its lower `pattern` and `entry`.
pub fn sym_mul(
    pattern: &[Vec<usize>],
    entry: impl Fn(usize, usize) -> f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    for (i, p) in pattern.iter().enumerate() {
        for &j in p {
            let a = entry(i, j);
            y[i] += a * x[j];
            if j != i {
                y[j] += a * x[i];
            }
        }
    }
    y
}

/// Outcome of [`box_qp`].
#[derive(Debug, Clone)]
pub struct BoxQp {
    pub x: DVector<f64>,
    /// Indices at the lower and upper bound.
    pub at_lower: usize,
    pub at_upper: usize,
    pub iterations: usize,
    /// Whether the active sets stabilized with all KKT conditions met.
    pub converged: bool,
}

const BOX_QP_MAX_ITER: usize = 60;

/// Minimizes `½xᵀAx − bᵀx` over the box `[lo, hi]^N` for symmetric positive
/// semidefinite `A` by a primal-dual active-set iteration started from the
/// unconstrained solution `x0`.
///
/// Each iteration fixes the active coordinates at their bounds and solves
/// the remaining free block with [`solve_sym`]. If the active sets start to
/// cycle, the best feasible iterate seen (by objective value) is returned
/// with `converged = false`.
pub fn box_qp(
    pattern: &[Vec<usize>],
    entry: impl Fn(usize, usize) -> f64,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    lo: f64,
    hi: f64,
) -> Result<BoxQp> {
    #[derive(Clone, Copy, PartialEq, Eq)]
    enum State {
        Free,
        Lower,
        Upper,
    }
    let n = pattern.len();
    if b.len() != n || x0.len() != n {
        return Err(Error::dims(n, if b.len() != n { b.len() } else { x0.len() }));
    }
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&sym_mul(pattern, &entry, x)) - b.dot(x);

    let mut state: Vec<State> = x0
        .iter()
        .map(|&v| {
            if v < lo {
                State::Lower
            } else if v > hi {
                State::Upper
            } else {
                State::Free
            }
        })
        .collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut seen: Vec<Vec<State>> = Vec::new();

    for iter in 1..=BOX_QP_MAX_ITER {
        let fixed = |i: usize| match state[i] {
            State::Free => None,
            State::Lower => Some(lo),
            State::Upper => Some(hi),
        };
        // Reduced system, with fixed coordinates moved to the right-hand side.
        let mut rhs = b.clone();
        for (i, p) in pattern.iter().enumerate() {
            for &j in p {
                if j == i {
                    continue;
                }
                let a = entry(i, j);
                if let (None, Some(v)) = (fixed(i), fixed(j)) {
                    rhs[i] -= a * v;
                }
                if let (Some(v), None) = (fixed(i), fixed(j)) {
                    rhs[j] -= a * v;
                }
            }
        }
        // Solve on the free coordinates only.
        let free: Vec<usize> = (0..n).filter(|&i| fixed(i).is_none()).collect();
        let mut index = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            index[i] = k;
        }
        let sub_pattern: Vec<Vec<usize>> = free
            .iter()
            .map(|&i| pattern[i].iter().filter(|&&j| index[j] != usize::MAX).map(|&j| index[j]).collect())
            .collect();
        let sub_rhs = DVector::from_fn(free.len(), |k, _| rhs[free[k]]);
        let sub_x = solve_sym(&sub_pattern, |p, q| entry(free[p], free[q]), &sub_rhs)?;
        let x = DVector::from_fn(n, |i, _| match fixed(i) {
            Some(v) => v,
            None => sub_x[index[i]],
        });
        let grad = sym_mul(pattern, &entry, &x) - b;

        let mut next = state.clone();
        let mut kkt = true;
        for i in 0..n {
            next[i] = match state[i] {
                State::Free if x[i] < lo => State::Lower,
                State::Free if x[i] > hi => State::Upper,
                State::Lower if grad[i] < 0.0 => State::Free,
                State::Upper if grad[i] > 0.0 => State::Free,
                s => s,
            };
            if next[i] != state[i] {
                kkt = false;
            }
        }
        let feasible = x.map(|v| v.clamp(lo, hi));
        let val = objective(&feasible);
        if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
            best = Some((val, feasible.clone()));
        }
        if kkt {
            return Ok(BoxQp {
                at_lower: state.iter().filter(|s| **s == State::Lower).count(),
                at_upper: state.iter().filter(|s| **s == State::Upper).count(),
                x: feasible,
                iterations: iter,
                converged: true,
            });
        }
        if seen.contains(&next) {
            break;
        }
        seen.push(std::mem::replace(&mut state, next));
    }
    let (_, x) = best.expect("at least one iteration ran");
    Ok(BoxQp {
        at_lower: x.iter().filter(|v| **v == lo).count(),
        at_upper: x.iter().filter(|v| **v == hi).count(),
        x,
        iterations: seen.len() + 1,
        converged: false,
    })
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn envelope_ldl_matches_dense_solve() {
        let a = random_spd(12, 3);
        let b = DVector::from_fn(12, |i, _| i as f64 - 4.0);
        let pattern: Vec<Vec<usize>> = (0..12).map(|i| (0..=i).collect()).collect();
        let x = solve_sym(&pattern, |i, j| a[(i, j)], &b).unwrap();
        let reference = a.clone().cholesky().unwrap().solve(&b);
        assert!((x - reference).amax() < 1e-10);
    }

    #[test]
    fn envelope_ldl_handles_banded_with_corner() {
        // Tridiagonal plus a corner entry, the shape of a periodic lattice.
        let n = 20;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0;
            if i + 1 < n {
                a[(i, i + 1)] = -1.0;
                a[(i + 1, i)] = -1.0;
            }
        }
        a[(0, n - 1)] = -1.0;
        a[(n - 1, 0)] = -1.0;
        let s = SparseSym::from_dense(&a);
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = solve_sym(&s.lower_pattern(), |i, j| a[(i, j)], &b).unwrap();
        assert!((&a * x - b).amax() < 1e-12);
    }

    #[test]
    fn singular_system_falls_back_to_min_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let pattern = vec![vec![0], vec![0, 1]];
        let x = solve_sym(&pattern, |i, j| a[(i, j)], &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_tall_matrix_is_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>());
        let (p, smin, smax) = pinv_svd(&w).unwrap();
        assert!(smin > 0.0 && smax >= smin);
        assert!((&p * &w - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn sparse_products_match_dense() {
        let a = random_spd(9, 5);
        let s = SparseSym::from_dense(&a);
        let x = DVector::from_fn(9, |i, _| 1.0 / (1.0 + i as f64));
        assert!((s.mul_vec(&x) - &a * &x).amax() < 1e-12);
        assert!((s.quad_form(&x) - x.dot(&(&a * &x))).abs() < 1e-12);
    }

    fn brute_force_box_qp(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        // Enumerate all 3^n assignments of (free, lower, upper) and keep the
        // best feasible stationary point.
        let n = b.len();
        let mut best = (f64::INFINITY, DVector::zeros(n));
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let kinds: Vec<usize> = (0..n)
                .map(|_| {
                    let k = c % 3;
                    c /= 3;
                    k
                })
                .collect();
            let mut x = DVector::zeros(n);
            let free: Vec<usize> = (0..n).filter(|&i| kinds[i] == 0).collect();
            for i in 0..n {
                if kinds[i] == 2 {
                    x[i] = 1.0;
                }
            }
            if !free.is_empty() {
                let m = DMatrix::from_fn(free.len(), free.len(), |p, q| a[(free[p], free[q])]);
                let r = DVector::from_fn(free.len(), |p, _| {
                    b[free[p]] - (0..n).filter(|j| kinds[*j] == 2).map(|j| a[(free[p], j)]).sum::<f64>()
                });
                let Some(ch) = m.cholesky() else { continue };
                let s = ch.solve(&r);
                for (p, &i) in free.iter().enumerate() {
                    x[i] = s[p];
                }
            }
            if x.iter().any(|v| *v < -1e-12 || *v > 1.0 + 1e-12) {
                continue;
            }
            let val = 0.5 * x.dot(&(a * &x)) - b.dot(&x);
            if val < best.0 {
                best = (val, x);
            }
        }
        best.1
    }

    #[test]
    fn box_qp_matches_enumeration() {
        for seed in 0..30 {
            let a = random_spd(6, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = DVector::from_fn(6, |_, _| 3.0 * (rng.random::<f64>() - 0.3));
            let pattern: Vec<Vec<usize>> = (0..6).map(|i| (0..=i).collect()).collect();
            let x0 = a.clone().cholesky().unwrap().solve(&b);
            let r = box_qp(&pattern, |i, j| a[(i, j)], &b, &x0, 0.0, 1.0).unwrap();
            let reference = brute_force_box_qp(&a, &b);
            let obj = |x: &DVector<f64>| 0.5 * x.dot(&(&a * x)) - b.dot(x);
            assert!(
                obj(&r.x) <= obj(&reference) + 1e-10,
                "seed {seed}: {} vs {}",
                obj(&r.x),
                obj(&reference)
            );
        }
    }

    #[test]
    fn box_qp_keeps_interior_solution() {
        let a = random_spd(5, 7);
        let x_true = DVector::from_vec(vec![0.2, 0.5, 0.9, 0.1, 0.4]);
        let b = &a * &x_true;
        let pattern: Vec<Vec<usize>> = (0..5).map(|i| (0..=i).collect()).collect();
        let r = box_qp(&pattern, |i, j| a[(i, j)], &b, &x_true, 0.0, 1.0).unwrap();
        assert!(r.converged && r.iterations == 1);
        assert!((r.x - x_true).amax() < 1e-10);
    }
}
