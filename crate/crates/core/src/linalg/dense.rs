//! Stack-allocated square matrices of size at most [`MAX_DIM`].

use std::ops::{Index, IndexMut};

use crate::grid::MAX_DIM;
use crate::scalar::Real;

const CAP: usize = MAX_DIM * MAX_DIM;

/// A dense `n x n` matrix, row-major, `n <= MAX_DIM`; storage beyond the
/// leading block stays zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat<T> {
    n: usize,
    a: [T; CAP],
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n <= MAX_DIM);
        Mat { n, a: [T::zero(); CAP] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut m = *self;
        m.a.iter_mut().for_each(|x| *x = *x * s);
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn mul(&self, other: &Self) -> Self {
        Mat::from_fn(self.n, |i, j| (0..self.n).map(|k| self[(i, k)] * other[(k, j)]).sum())
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// `sum_ij self_ij other_ij`.
    pub fn contract(&self, other: &Self) -> T {
        self.a.iter().zip(&other.a).map(|(&x, &y)| x * y).sum()
    }

    pub fn max_abs(&self) -> T {
        self.a.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }

    pub fn mul_vec(&self, v: &[T]) -> [T; MAX_DIM] {
        let mut out = [T::zero(); MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|j| self[(i, j)] * v[j]).sum();
        }
        out
    }

    /// Cholesky factor `L` with `self = L L^T`, or `None` if a pivot is not
    /// strictly positive.
    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        let n = self.n;
        let mut l = Mat::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(Cholesky { l })
    }

    /// Leading principal minors, computed by elimination without pivoting.
    /// Stops at the first non-positive pivot; remaining minors are reported
    /// as zero.
    pub fn leading_minors(&self) -> [T; MAX_DIM] {
        let n = self.n;
        let mut m = *self;
        let mut out = [T::zero(); MAX_DIM];
        let mut prod = T::one();
        for k in 0..n {
            let piv = m[(k, k)];
            prod = prod * piv;
            out[k] = prod;
            if !(piv > T::zero()) {
                break;
            }
            for i in k + 1..n {
                let f = m[(i, k)] / piv;
                for j in k..n {
                    let v = m[(k, j)];
                    m[(i, j)] = m[(i, j)] - f * v;
                }
            }
        }
        out
    }

    /// Determinant by Laplace expansion along the first row.
    pub fn det_cofactor(&self) -> T {
        fn rec<T: Real>(m: &Mat<T>, rows: &[usize], cols: &[usize]) -> T {
            if rows.len() == 1 {
                return m[(rows[0], cols[0])];
            }
            let mut acc = T::zero();
            let mut sign = T::one();
            for (c_pos, &c) in cols.iter().enumerate() {
                let sub_cols: Vec<usize> = cols.iter().enumerate().filter(|(k, _)| *k != c_pos).map(|(_, &v)| v).collect();
                acc = acc + sign * m[(rows[0], c)] * rec(m, &rows[1..], &sub_cols);
                sign = -sign;
            }
            acc
        }
        let idx: Vec<usize> = (0..self.n).collect();
        rec(self, &idx, &idx)
    }

    /// Eigenvalues of a symmetric matrix (ascending) by cyclic Jacobi sweeps.
    pub fn sym_eigenvalues(&self) -> [T; MAX_DIM] {
        self.sym_eigen().0
    }

    /// Eigenvalues (ascending) and eigenvectors (columns, same order).
    pub fn sym_eigen(&self) -> ([T; MAX_DIM], Mat<T>) {
        let n = self.n;
        let mut a = *self;
        let mut v = Mat::identity(n);
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off = off + a[(i, j)] * a[(i, j)];
                }
            }
            let scale = a.max_abs();
            if off.sqrt() <= T::epsilon() * T::lit(1e-2) * scale || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let mut vals = [T::zero(); MAX_DIM];
        let mut vecs = Mat::zeros(n);
        for (dst, &src) in order.iter().enumerate() {
            vals[dst] = a[(src, src)];
            for k in 0..n {
                vecs[(k, dst)] = v[(k, src)];
            }
        }
        (vals, vecs)
    }

    /// Eigenvalues of `self` relative to the SPD matrix `g`, i.e. of
    /// `g^{-1} self`, ascending. `None` if `g` is not positive definite.
    pub fn eigenvalues_relative_to(&self, g: &Mat<T>) -> Option<[T; MAX_DIM]> {
        let chol = g.cholesky()?;
        let linv = chol.lower_inverse();
        let m = linv.mul(self).mul(&linv.transpose());
        // restore exact symmetry lost to rounding
        let m = Mat::from_fn(self.n, |i, j| (m[(i, j)] + m[(j, i)]) * T::lit(0.5));
        Some(m.sym_eigenvalues())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.a[i * MAX_DIM + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.a[i * MAX_DIM + j]
    }
}

/// Lower Cholesky factor of an SPD matrix.
#[derive(Debug, Clone, Copy)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn lower(&self) -> &Mat<T> {
        &self.l
    }

    pub fn log_det(&self) -> T {
        let n = self.l.dim();
        T::lit(2.0) * (0..n).map(|i| self.l[(i, i)].ln()).sum::<T>()
    }

    pub fn det(&self) -> T {
        let n = self.l.dim();
        let p = (0..n).map(|i| self.l[(i, i)]).fold(T::one(), |a, b| a * b);
        p * p
    }

    pub fn lower_inverse(&self) -> Mat<T> {
        let n = self.l.dim();
        let mut inv = Mat::zeros(n);
        for j in 0..n {
            inv[(j, j)] = T::one() / self.l[(j, j)];
            for i in j + 1..n {
                let mut s = T::zero();
                for k in j..i {
                    s = s + self.l[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / self.l[(i, i)];
            }
        }
        inv
    }

    /// Inverse of the factored matrix, exactly symmetric.
    pub fn inverse(&self) -> Mat<T> {
        let linv = self.lower_inverse();
        let n = self.l.dim();
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: T = (j..n).map(|k| linv[(k, i)] * linv[(k, j)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}
