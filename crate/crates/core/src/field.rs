//! Per-node storage for scalars, covectors and symmetric 2-tensors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ChartGrid;
use crate::linalg::Mat;
use crate::scalar::Real;

/// Number of packed entries of a symmetric `n x n` matrix.
pub const fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed upper-triangle offset of entry `(i, j)`.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(values: Vec<T>) -> Self {
        ScalarField { values }
    }

    pub fn constant(grid: &ChartGrid<T>, c: T) -> Self {
        ScalarField { values: vec![c; grid.len()] }
    }

    /// Samples `f` at every node of `grid`.
    pub fn from_fn(grid: &ChartGrid<T>, f: impl Fn(&[T]) -> T + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|p| f(&grid.point(p))).collect();
        ScalarField { values }
    }

    /// Like [`from_fn`](Self::from_fn) for fallible samplers.
    pub fn try_from_fn<E: Send>(grid: &ChartGrid<T>, f: impl Fn(usize, &[T]) -> Result<T, E> + Sync) -> Result<Self, E> {
        let values = (0..grid.len()).into_par_iter().map(|p| f(p, &grid.point(p))).collect::<Result<Vec<T>, E>>()?;
        Ok(ScalarField { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, p: usize) -> T {
        self.values[p]
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        ScalarField { values: self.values.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Sync) -> Self {
        ScalarField { values: self.values.par_iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// Max-norm of the difference over the listed nodes.
    pub fn max_diff_on(&self, other: &Self, nodes: impl IntoIterator<Item = usize>) -> T {
        nodes.into_iter().map(|p| (self.values[p] - other.values[p]).abs()).fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(node) => Err(Error::NonFinite { what, node }),
            None => Ok(()),
        }
    }

    pub fn check_len(&self, grid: &ChartGrid<T>, what: &'static str) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::SizeMismatch { what, got: self.values.len(), expected: grid.len() });
        }
        Ok(())
    }
}

/// An `n`-vector per node, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovectorField<T> {
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> CovectorField<T> {
    pub fn zeros(dim: usize, len: usize) -> Self {
        CovectorField { dim, values: vec![T::zero(); dim * len] }
    }

    pub fn from_nodes(dim: usize, nodes: Vec<[T; crate::grid::MAX_DIM]>) -> Self {
        let mut values = Vec::with_capacity(dim * nodes.len());
        for v in &nodes {
            values.extend_from_slice(&v[..dim]);
        }
        CovectorField { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, p: usize) -> &[T] {
        &self.values[p * self.dim..(p + 1) * self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize) -> &mut [T] {
        &mut self.values[p * self.dim..(p + 1) * self.dim]
    }
}

/// A symmetric `n x n` matrix per node, stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Sym2Field<T> {
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> Sym2Field<T> {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Sym2Field { dim, values: vec![T::zero(); sym_len(dim) * len] }
    }

    /// Packs node matrices, symmetrizing each as `(m + m^T) / 2`.
    pub fn from_mats(dim: usize, mats: &[Mat<T>]) -> Self {
        let mut f = Self::zeros(dim, mats.len());
        for (p, m) in mats.iter().enumerate() {
            f.set(p, m);
        }
        f
    }

    pub fn from_fn(grid: &ChartGrid<T>, f: impl Fn(usize) -> Mat<T> + Sync) -> Self {
        let mats: Vec<Mat<T>> = (0..grid.len()).into_par_iter().map(&f).collect();
        Self::from_mats(grid.dim(), &mats)
    }

    /// The same matrix at every node.
    pub fn constant(grid: &ChartGrid<T>, m: &Mat<T>) -> Self {
        let mut f = Self::zeros(grid.dim(), grid.len());
        for p in 0..grid.len() {
            f.set(p, m);
        }
        f
    }

    pub fn identity(grid: &ChartGrid<T>) -> Self {
        Self::constant(grid, &Mat::identity(grid.dim()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / sym_len(self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn entry(&self, p: usize, i: usize, j: usize) -> T {
        self.values[p * sym_len(self.dim) + sym_index(self.dim, i, j)]
    }

    #[inline]
    pub fn packed(&self, p: usize) -> &[T] {
        let s = sym_len(self.dim);
        &self.values[p * s..(p + 1) * s]
    }

    #[inline]
    pub fn mat(&self, p: usize) -> Mat<T> {
        let n = self.dim;
        let packed = self.packed(p);
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = packed[sym_index(n, i, j)];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn set(&mut self, p: usize, m: &Mat<T>) {
        let n = self.dim;
        let s = sym_len(n);
        let half = T::lit(0.5);
        for i in 0..n {
            for j in i..n {
                let v = if i == j { m[(i, i)] } else { (m[(i, j)] + m[(j, i)]) * half };
                self.values[p * s + sym_index(n, i, j)] = v;
            }
        }
    }

    /// Entry `(i, j)` at every node as a scalar field.
    pub fn component(&self, i: usize, j: usize) -> ScalarField<T> {
        let s = sym_len(self.dim);
        let k = sym_index(self.dim, i, j);
        ScalarField::new((0..self.len()).map(|p| self.values[p * s + k]).collect())
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        let s = sym_len(self.dim);
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite { what, node: k / s }),
            None => Ok(()),
        }
    }

    /// Pointwise linear combination `a * self + b * other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Self {
        Sym2Field { dim: self.dim, values: self.values.iter().zip(&other.values).map(|(&x, &y)| a * x + b * y).collect() }
    }
}
