//! Dense row-major `f64` matrices and the Cholesky machinery behind every
//! Gaussian KL and conditional in the crate.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative base jitter used by [`cholesky_default`].
pub const BASE_JITTER_REL: f64 = 1e-6;
/// The jitter ladder stops once it would exceed this fraction of the largest diagonal entry.
pub const MAX_JITTER_REL: f64 = 1e-2;
/// Inputs whose asymmetry exceeds this (relative to the largest entry) are rejected.
pub const SYMMETRY_TOL_REL: f64 = 1e-8;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn scalar(value: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The scalar held by a 1x1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix { rows: rows.len(), cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        self.map(|v| alpha * v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn try_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!("matmul {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols)));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        gemm(false, false, 1.0, self, rhs, 0.0, &mut out);
        Ok(out)
    }

    /// Panics on incompatible shapes; see [`Matrix::try_matmul`].
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        self.try_matmul(rhs).expect("matmul shape mismatch")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
pub fn gemm(trans_a: bool, trans_b: bool, alpha: f64, a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides and extents describe the row-major buffers checked above.
    unsafe {
        matrixmultiply::dgemm(m, k, n, alpha, a.data.as_ptr(), rsa, csa, b.data.as_ptr(), rsb, csb, beta, c.data.as_mut_ptr(), c.cols as isize, 1);
    }
}

/// Lower-triangular Cholesky factor together with the diagonal jitter that
/// was needed to obtain it.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    l: Matrix,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        solve_chol(self, b)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        forward_subst_in_place(&self.l, &mut x);
        backward_subst_transpose_in_place(&self.l, &mut x);
        x
    }

    pub fn logdet(&self) -> f64 {
        logdet_chol(self)
    }

    /// `(L Lᵀ)⁻¹`, symmetrised.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = solve_chol(self, &Matrix::identity(n)).expect("square identity");
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Factorises `(A + Aᵀ)/2 + jitter·I`, escalating the jitter through
/// `0, base_jitter, 10·base_jitter, …` until the factorisation succeeds or the
/// jitter would exceed `1e-2 · max diag(A)`. A non-positive `base_jitter`
/// permits only the zero-jitter attempt.
pub fn cholesky(a: &Matrix, base_jitter: f64) -> Result<CholeskyFactor> {
    let n = a.rows;
    if n == 0 || a.cols != n {
        return Err(Error::DimensionMismatch(format!("cholesky needs a non-empty square matrix, got {}x{}", a.rows, a.cols)));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("cholesky input"));
    }
    let scale = a.max_abs();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL_REL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym / scale });
    }
    let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));

    let max_diag = sym.max_diagonal();
    let cap = MAX_JITTER_REL * max_diag.max(0.0);
    let mut jitter = 0.0;
    loop {
        if let Some(l) = try_factor(&sym, jitter) {
            return Ok(CholeskyFactor { l, jitter_used: jitter });
        }
        if base_jitter <= 0.0 {
            return Err(Error::NotPositiveDefinite { max_jitter: 0.0 });
        }
        let next = if jitter == 0.0 { base_jitter } else { jitter * 10.0 };
        if next > cap * (1.0 + 1e-12) {
            return Err(Error::NotPositiveDefinite { max_jitter: jitter });
        }
        jitter = next;
    }
}

/// [`cholesky`] with the base jitter set to `1e-6 · max diag(A)`.
pub fn cholesky_default(a: &Matrix) -> Result<CholeskyFactor> {
    let base = BASE_JITTER_REL * a.max_diagonal().max(0.0);
    cholesky(a, base)
}

fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    let tiny = f64::EPSILON * a.max_diagonal().abs().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        d -= l.row(j)[..j].iter().map(|v| v * v).sum::<f64>();
        if !(d > tiny) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            let (li, lj) = (i * n, j * n);
            for k in 0..j {
                s -= l.data[li + k] * l.data[lj + k];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L y = b` in place.
pub fn forward_subst_in_place(l: &Matrix, b: &mut [f64]) {
    let n = l.rows;
    for i in 0..n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Solves `Lᵀ x = y` in place.
pub fn backward_subst_transpose_in_place(l: &Matrix, b: &mut [f64]) {
    let n = l.rows;
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `(L·Lᵀ)·X = B` by forward then backward substitution.
pub fn solve_chol(f: &CholeskyFactor, b: &Matrix) -> Result<Matrix> {
    let n = f.dim();
    if b.rows != n {
        return Err(Error::DimensionMismatch(format!("factor is {n}x{n}, right-hand side has {} rows", b.rows)));
    }
    let mut out = Matrix::zeros(n, b.cols);
    let mut col = vec![0.0; n];
    for c in 0..b.cols {
        for r in 0..n {
            col[r] = b[(r, c)];
        }
        forward_subst_in_place(&f.l, &mut col);
        backward_subst_transpose_in_place(&f.l, &mut col);
        for r in 0..n {
            out[(r, c)] = col[r];
        }
    }
    Ok(out)
}

/// `log |L Lᵀ| = 2 Σ log Lᵢᵢ`.
pub fn logdet_chol(f: &CholeskyFactor) -> f64 {
    2.0 * (0..f.dim()).map(|i| f.l[(i, i)].ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = b.matmul(&b.transpose());
        for i in 0..n {
            a[(i, i)] += n as f64 * 0.1;
        }
        a
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    fn lu_logdet(a: &Matrix) -> f64 {
        let n = a.rows();
        let mut m = a.clone();
        let mut logdet = 0.0;
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs())).unwrap();
            if p != k {
                for c in 0..n {
                    let t = m[(k, c)];
                    m[(k, c)] = m[(p, c)];
                    m[(p, c)] = t;
                }
            }
            let piv = m[(k, k)];
            logdet += piv.abs().ln();
            for i in (k + 1)..n {
                let f = m[(i, k)] / piv;
                for c in k..n {
                    m[(i, c)] -= f * m[(k, c)];
                }
            }
        }
        logdet
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let f = cholesky(&a, 1e-6).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        let l = f.l();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);

        let x = solve_chol(&f, &Matrix::column(&[1.0, 0.0])).unwrap();
        assert!((x[(0, 0)] - 0.375).abs() < 1e-15);
        assert!((x[(1, 0)] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn identity_cases() {
        let f = cholesky_default(&Matrix::identity(3)).unwrap();
        assert_eq!(f.l(), &Matrix::identity(3));
        assert_eq!(f.jitter_used(), 0.0);
        let b = Matrix::from_rows(&[[1.0, -2.0], [3.5, 0.0], [7.0, 1e3]]);
        assert_eq!(solve_chol(&f, &b).unwrap(), b);
        assert_eq!(logdet_chol(&cholesky_default(&Matrix::identity(5)).unwrap()), 0.0);
    }

    #[test]
    fn logdet_of_diagonal() {
        let f = cholesky_default(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!((logdet_chol(&f) - 36f64.ln()).abs() < 1e-14);
        assert!((logdet_chol(&f) - 3.5835).abs() < 1e-4);
    }

    #[test]
    fn random_spd_reconstructs() {
        let a = random_spd(8, 11);
        let f = cholesky_default(&a).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        let l = f.l();
        for i in 0..8 {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..8 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let mut r = l.matmul(&l.transpose());
        r.axpy(-1.0, &a);
        assert!(r.frobenius_norm() / a.frobenius_norm() < 1e-10);
    }

    #[test]
    fn solve_residual() {
        let a = random_spd(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Matrix::from_fn(6, 3, |_, _| rng.random_range(-2.0..2.0));
        let x = solve_chol(&cholesky_default(&a).unwrap(), &b).unwrap();
        let mut res = a.matmul(&x);
        res.axpy(-1.0, &b);
        assert!(res.max_abs() < 1e-9);
    }

    #[test]
    fn logdet_matches_lu() {
        for seed in 0..5 {
            let a = random_spd(7, 100 + seed);
            let chol = logdet_chol(&cholesky_default(&a).unwrap());
            let lu = lu_logdet(&a);
            assert!((chol - lu).abs() <= 1e-9 * lu.abs().max(1.0), "{chol} vs {lu}");
        }
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = cholesky_default(&Matrix::identity(3)).unwrap();
        assert!(matches!(solve_chol(&f, &Matrix::zeros(2, 1)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let a = Matrix::from_rows(&[[1.0, f64::NAN], [f64::NAN, 1.0]]);
        assert!(matches!(cholesky_default(&a), Err(Error::NonFinite(_))));
    }

    #[test]
    fn asymmetry_tolerance() {
        let ok = Matrix::from_rows(&[[2.0, 1.0 + 1e-12], [1.0, 2.0]]);
        assert!(cholesky_default(&ok).is_ok());
        let bad = Matrix::from_rows(&[[2.0, 1.1], [1.0, 2.0]]);
        assert!(matches!(cholesky_default(&bad), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn singular_gets_jitter_and_indefinite_fails() {
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let f = cholesky_default(&singular).unwrap();
        assert!(f.jitter_used() > 0.0 && f.jitter_used() <= 1e-2);
        let mut r = f.l().matmul(&f.l().transpose());
        r.axpy(-1.0, &singular);
        for i in 0..2 {
            r[(i, i)] -= f.jitter_used();
        }
        assert!(r.max_abs() < 1e-12);

        let indefinite = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(matches!(cholesky_default(&indefinite), Err(Error::NotPositiveDefinite { .. })));
        assert!(matches!(cholesky(&singular, 0.0), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn no_jitter_on_well_separated_spectra() {
        // Q diag(λ) Qᵀ with smallest eigenvalue just above 1e-8 of the largest.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = {
            // Gram-Schmidt
            let mut q = Matrix::zeros(n, n);
            for c in 0..n {
                let mut v: Vec<f64> = (0..n).map(|r| b[(r, c)]).collect();
                for p in 0..c {
                    let dot: f64 = (0..n).map(|r| v[r] * q[(r, p)]).sum();
                    for r in 0..n {
                        v[r] -= dot * q[(r, p)];
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                for r in 0..n {
                    q[(r, c)] = v[r] / norm;
                }
            }
            q
        };
        for min_eig in [1e-7, 1e-5, 1e-2] {
            let lams = [1.0, 0.5, 0.3, 0.1, 0.01, min_eig];
            let a = q.matmul(&Matrix::diag(&lams)).matmul(&q.transpose());
            let f = cholesky_default(&a).unwrap();
            assert_eq!(f.jitter_used(), 0.0, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn solve_against_self_is_identity() {
        let a = random_spd(5, 21);
        let f = cholesky_default(&a).unwrap();
        let x = solve_chol(&f, &a).unwrap();
        let mut d = x;
        d.axpy(-1.0, &Matrix::identity(5));
        assert!(d.max_abs() < 1e-9);
    }

    #[test]
    fn logdet_permutation_invariant() {
        let a = random_spd(6, 5);
        let perm = [3, 0, 5, 1, 4, 2];
        let pa = Matrix::from_fn(6, 6, |i, j| a[(perm[i], perm[j])]);
        let d1 = logdet_chol(&cholesky_default(&a).unwrap());
        let d2 = logdet_chol(&cholesky_default(&pa).unwrap());
        assert!((d1 - d2).abs() < 1e-9);
    }

    #[test]
    fn gemm_transposes() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let ab = a.matmul(&b);
        assert_eq!(ab, Matrix::from_rows(&[[4.0, 5.0], [10.0, 11.0]]));
        let mut c = Matrix::zeros(2, 2);
        gemm(true, true, 1.0, &b, &a, 0.0, &mut c);
        assert_eq!(c, ab.transpose());
    }
}
