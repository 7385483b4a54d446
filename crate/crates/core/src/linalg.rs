//! Dense linear algebra used by the model: row-major matrices, a Cholesky
//! factorization with escalating diagonal jitter, triangular solves and
//! log-determinants.
//!
//! Every reduction runs in a fixed index order, so results are bit-identical
//! for identical inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Maximum number of jitter escalations attempted by [`jittered_cholesky`].
pub const MAX_JITTER_ESCALATIONS: usize = 10;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
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

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |acc, v| acc + v.abs()))
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Square matrix checked to be symmetric at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Scalar> SymMatrix<T> {
    /// Wraps `m`, rejecting it if any pair of mirrored entries differs by more
    /// than `1e-12` times the largest absolute entry.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                found: m.cols(),
            });
        }
        let scale = m.as_slice().iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        let tol = T::lit(1e-12) * scale.max(T::min_positive_value());
        let mut worst = T::zero();
        for i in 0..m.rows() {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if worst > tol {
            return Err(Error::NotSymmetric(worst.as_f64()));
        }
        Ok(Self(m))
    }

    /// Trusted constructor for matrices that are symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(m: Matrix<T>) -> Self {
        debug_assert_eq!(m.rows(), m.cols());
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn mean_diag(&self) -> T {
        let n = self.dim();
        if n == 0 {
            return T::zero();
        }
        (0..n).map(|i| self.0[(i, i)]).sum::<T>() / T::from_usize_lossy(n)
    }

    pub fn add_diag(&mut self, c: T) {
        for i in 0..self.dim() {
            self.0[(i, i)] += c;
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor<T> {
    factor: Matrix<T>,
    jitter: T,
}

/// Which triangular system [`tri_solve`] solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `L X = B`
    Forward,
    /// `Lᵀ X = B`
    Backward,
}

fn try_cholesky<T: Scalar>(a: &Matrix<T>, jitter: T) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Cholesky factorization that adds diagonal jitter only when the plain
/// factorization fails.
///
/// The first jitter is `base_jitter · mean(diag(A))` (or `base_jitter` itself
/// when the mean diagonal is not positive) and doubles on each further failure,
/// for at most [`MAX_JITTER_ESCALATIONS`] attempts.
pub fn jittered_cholesky<T: Scalar>(a: &SymMatrix<T>, base_jitter: T) -> Result<CholeskyFactor<T>> {
    if let Some(l) = try_cholesky(a.as_matrix(), T::zero()) {
        return Ok(CholeskyFactor {
            factor: l,
            jitter: T::zero(),
        });
    }
    let mean_diag = a.mean_diag();
    let mut jitter = if mean_diag > T::zero() {
        base_jitter * mean_diag
    } else {
        base_jitter
    };
    for _ in 0..MAX_JITTER_ESCALATIONS {
        if let Some(l) = try_cholesky(a.as_matrix(), jitter) {
            log::debug!("cholesky succeeded with jitter {jitter:e}");
            return Ok(CholeskyFactor { factor: l, jitter });
        }
        jitter = jitter + jitter;
    }
    Err(Error::NotPositiveDefinite {
        escalations: MAX_JITTER_ESCALATIONS,
        jitter: (jitter / T::lit(2.0)).as_f64(),
    })
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Wraps an existing lower-triangular factor with positive diagonal.
    pub fn from_lower(factor: Matrix<T>) -> Result<Self> {
        if factor.rows() != factor.cols() {
            return Err(Error::DimensionMismatch {
                expected: factor.rows(),
                found: factor.cols(),
            });
        }
        Ok(Self {
            factor,
            jitter: T::zero(),
        })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.factor
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    pub fn logdet(&self) -> T {
        logdet_from_factor(&self.factor)
    }

    /// Solves `L x = b` in place.
    pub fn forward_in_place(&self, b: &mut [T]) {
        let l = &self.factor;
        let n = l.rows();
        for i in 0..n {
            let row = l.row(i);
            let mut s = b[i];
            for k in 0..i {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_in_place(&self, b: &mut [T]) {
        let l = &self.factor;
        let n = l.rows();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `(L Lᵀ) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Dense inverse of `L Lᵀ`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = T::zero());
            col[j] = T::one();
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize to remove round-off asymmetry
        for i in 0..n {
            for j in 0..i {
                let v = (inv[(i, j)] + inv[(j, i)]) / T::lit(2.0);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Solves `L X = B` ([`Side::Forward`]) or `Lᵀ X = B` ([`Side::Backward`]).
pub fn tri_solve<T: Scalar>(l: &CholeskyFactor<T>, b: &Matrix<T>, side: Side) -> Result<Matrix<T>> {
    let n = l.dim();
    if b.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.rows(),
        });
    }
    let mut out = Matrix::zeros(n, b.cols());
    let mut col = vec![T::zero(); n];
    for j in 0..b.cols() {
        for i in 0..n {
            col[i] = b[(i, j)];
        }
        match side {
            Side::Forward => l.forward_in_place(&mut col),
            Side::Backward => l.backward_in_place(&mut col),
        }
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

/// `2 Σ log L_ii`
pub fn logdet_from_factor<T: Scalar>(l: &Matrix<T>) -> T {
    let n = l.rows().min(l.cols());
    let two = T::lit(2.0);
    (0..n).fold(T::zero(), |acc, i| acc + two * l[(i, i)].ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix<f64> {
        SymMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identity_factor_needs_no_jitter() {
        let f = jittered_cholesky(&SymMatrix::<f64>::identity(3), 1e-8).unwrap();
        assert_eq!(f.factor(), &Matrix::identity(3));
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn two_by_two_hand_factorization() {
        let f = jittered_cholesky(&sym(&[&[4.0, 2.0], &[2.0, 5.0]]), 1e-8).unwrap();
        let l = f.factor();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_matrix_gets_sqrt_jitter_identity() {
        let base = 1e-6;
        let f = jittered_cholesky(&sym(&[&[0.0, 0.0], &[0.0, 0.0]]), base).unwrap();
        assert_eq!(f.jitter(), base);
        let l = f.factor();
        assert_abs_diff_eq!(l[(0, 0)], base.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], base.sqrt(), epsilon = 1e-15);
        assert_eq!(l[(1, 0)], 0.0);
    }

    #[test]
    fn rank_deficient_escalates_jitter() {
        let f = jittered_cholesky(&sym(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-10).unwrap();
        assert!(f.jitter() > 0.0);
        assert!(f.factor()[(1, 1)] > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails_after_escalation() {
        let err = jittered_cholesky(&sym(&[&[1.0, 0.0], &[0.0, -5.0]]), 1e-8).unwrap_err();
        assert!(matches!(
            err,
            Error::NotPositiveDefinite {
                escalations: MAX_JITTER_ESCALATIONS,
                ..
            }
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn forward_solve_by_hand() {
        let f = jittered_cholesky(&sym(&[&[4.0, 2.0], &[2.0, 5.0]]), 1e-8).unwrap();
        let b = Matrix::from_rows(&[[2.0], [3.0]]).unwrap();
        let x = tri_solve(&f, &b, Side::Forward).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(1, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let f = jittered_cholesky(&SymMatrix::<f64>::identity(3), 1e-8).unwrap();
        let b = Matrix::from_rows(&[[1.0, -2.0], [3.5, 0.0], [7.0, 1e3]]).unwrap();
        assert_eq!(tri_solve(&f, &b, Side::Forward).unwrap(), b);
        assert_eq!(tri_solve(&f, &b, Side::Backward).unwrap(), b);
    }

    #[test]
    fn tri_solve_dimension_mismatch() {
        let f = jittered_cholesky(&SymMatrix::<f64>::identity(3), 1e-8).unwrap();
        let b = Matrix::<f64>::zeros(2, 1);
        assert!(matches!(
            tri_solve(&f, &b, Side::Forward),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    /// Gauss-Jordan inverse with partial pivoting, independent of the factor path.
    fn gauss_jordan_inverse(a: &Matrix<f64>) -> Matrix<f64> {
        let n = a.rows();
        let mut aug = Matrix::from_fn(n, 2 * n, |i, j| {
            if j < n {
                a[(i, j)]
            } else if j - n == i {
                1.0
            } else {
                0.0
            }
        });
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| aug[(x, c)].abs().partial_cmp(&aug[(y, c)].abs()).unwrap())
                .unwrap();
            for j in 0..2 * n {
                let t = aug[(c, j)];
                aug[(c, j)] = aug[(p, j)];
                aug[(p, j)] = t;
            }
            let piv = aug[(c, c)];
            for j in 0..2 * n {
                aug[(c, j)] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[(r, c)];
                    for j in 0..2 * n {
                        aug[(r, j)] -= f * aug[(c, j)];
                    }
                }
            }
        }
        Matrix::from_fn(n, n, |i, j| aug[(i, j + n)])
    }

    #[test]
    fn forward_backward_round_trip_matches_dense_inverse() {
        let r = Matrix::from_rows(&[
            [1.0, 0.3, -0.2, 0.5],
            [0.0, 2.0, 0.7, -0.1],
            [0.4, -0.6, 1.5, 0.2],
            [0.1, 0.9, 0.0, 1.1],
        ])
        .unwrap();
        let mut a = r.transpose().matmul(&r).unwrap();
        for i in 0..4 {
            a[(i, i)] += 1.0;
        }
        let b = Matrix::from_rows(&[[1.0, 0.0], [2.0, -1.0], [-0.5, 3.0], [0.25, 0.5]]).unwrap();
        let f = jittered_cholesky(&SymMatrix::new(a.clone()).unwrap(), 1e-8).unwrap();
        let y = tri_solve(&f, &b, Side::Forward).unwrap();
        let x = tri_solve(&f, &y, Side::Backward).unwrap();
        let expected = gauss_jordan_inverse(&a).matmul(&b).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert_abs_diff_eq!(x[(i, j)], expected[(i, j)], epsilon = 1e-10);
            }
        }
        let inv = f.inverse();
        let oracle = gauss_jordan_inverse(&a);
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(inv[(i, j)], oracle[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn logdet_cases() {
        let f = jittered_cholesky(&SymMatrix::<f64>::identity(4), 1e-8).unwrap();
        assert_eq!(f.logdet(), 0.0);
        let f = jittered_cholesky(&sym(&[&[2.0, 0.0], &[0.0, 3.0]]), 1e-8).unwrap();
        assert_abs_diff_eq!(f.logdet(), 6.0f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(f.logdet(), 1.7918, epsilon = 1e-4);
    }

    #[test]
    fn logdet_homogeneity() {
        let a = sym(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let c = 3.7;
        let scaled = SymMatrix::new(a.as_matrix().scale(c)).unwrap();
        let l1 = jittered_cholesky(&a, 1e-8).unwrap().logdet();
        let l2 = jittered_cholesky(&scaled, 1e-8).unwrap().logdet();
        assert_abs_diff_eq!(l2 - l1, 3.0 * c.ln(), epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = SymMatrix::new(Matrix::from_rows(&[[4.0f32, 2.0], [2.0, 5.0]]).unwrap()).unwrap();
        let f = jittered_cholesky(&a, 1e-6).unwrap();
        assert!((f.factor()[(1, 1)] - 2.0).abs() < 1e-6);
    }

    /// Determinant by Laplace expansion; product of eigenvalues.
    fn laplace_det(a: &Matrix<f64>) -> f64 {
        let n = a.rows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = Matrix::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * laplace_det(&minor)
            })
            .sum()
    }

    fn spd_strategy(max_dim: usize) -> impl Strategy<Value = Matrix<f64>> {
        (1..=max_dim).prop_flat_map(|n| {
            prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
                let r = Matrix::from_vec(n, n, v).unwrap();
                let mut a = r.transpose().matmul(&r).unwrap();
                for i in 0..n {
                    a[(i, i)] += 1.0;
                }
                a
            })
        })
    }

    proptest! {
        #[test]
        fn factor_reconstructs_spd(a in spd_strategy(8)) {
            let f = jittered_cholesky(&SymMatrix::new(a.clone()).unwrap(), 1e-8).unwrap();
            prop_assert_eq!(f.jitter(), 0.0);
            let l = f.factor();
            for i in 0..l.rows() {
                prop_assert!(l[(i, i)] > 0.0);
            }
            let llt = l.matmul(&l.transpose()).unwrap();
            let diff = Matrix::from_fn(a.rows(), a.cols(), |i, j| llt[(i, j)] - a[(i, j)]);
            prop_assert!(diff.norm_inf() <= 1e-10 * a.norm_inf());
        }

        #[test]
        fn tri_solve_residual_small(a in spd_strategy(8), seed in 0u64..1000) {
            let n = a.rows();
            let f = jittered_cholesky(&SymMatrix::new(a).unwrap(), 1e-8).unwrap();
            let b = Matrix::from_fn(n, 2, |i, j| ((seed as f64 + 1.0) * (i as f64 + 0.5) * (j as f64 + 1.3)).sin());
            let x = tri_solve(&f, &b, Side::Forward).unwrap();
            let lx = f.factor().matmul(&x).unwrap();
            let diff = Matrix::from_fn(n, 2, |i, j| lx[(i, j)] - b[(i, j)]);
            prop_assert!(diff.norm_inf() <= 1e-10 * b.norm_inf().max(1e-300));
        }

        #[test]
        fn logdet_matches_determinant(a in spd_strategy(4)) {
            let f = jittered_cholesky(&SymMatrix::new(a.clone()).unwrap(), 1e-8).unwrap();
            let expected = laplace_det(&a).ln();
            prop_assert!((f.logdet() - expected).abs() <= 1e-8);
        }
    }
}
