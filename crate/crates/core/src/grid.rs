//! Uniform axis-aligned chart grids.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported chart dimension. Per-node matrices live on the stack.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
}

/// An axis-aligned box in `R^n` sampled with identical spacing on every axis.
///
/// Nodes are numbered lexicographically with the first axis running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid<T> {
    dim: usize,
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    h: T,
    distance: Vec<T>,
    interior: Vec<usize>,
    unknown: Vec<Option<usize>>,
}

impl<T: Real> ChartGrid<T> {
    /// Builds a grid from per-axis bounds and node counts.
    ///
    /// A single count is broadcast to every axis. The spacing must agree
    /// across axes to relative precision `1e-12`.
    pub fn new(bounds: &[(T, T)], counts: &[usize]) -> Result<Self> {
        let dim = bounds.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim, max: MAX_DIM });
        }
        let counts: Vec<usize> = match counts.len() {
            1 => vec![counts[0]; dim],
            n if n == dim => counts.to_vec(),
            n => {
                return Err(Error::SizeMismatch { what: "resolution", got: n, expected: dim });
            }
        };
        let mut h0 = T::zero();
        for (axis, (&(lo, hi), &nodes)) in bounds.iter().zip(&counts).enumerate() {
            if nodes < 5 {
                return Err(Error::ResolutionTooSmall { axis, nodes });
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::DegenerateBounds { axis, lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
            }
            let h = (hi - lo) / T::from_usize_lossy(nodes - 1);
            if axis == 0 {
                h0 = h;
            } else if ((h - h0) / h0).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
                return Err(Error::NonUniformSpacing { axis, h: h.to_f64_lossy(), h0: h0.to_f64_lossy() });
            }
        }
        let mut strides = vec![1; dim];
        for a in 1..dim {
            strides[a] = strides[a - 1] * counts[a - 1];
        }
        let len = strides[dim - 1] * counts[dim - 1];
        let mut grid = ChartGrid {
            dim,
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
            counts,
            strides,
            h: h0,
            distance: Vec::with_capacity(len),
            interior: Vec::new(),
            unknown: vec![None; len],
        };
        let mut idx = vec![0usize; dim];
        for p in 0..len {
            grid.fill_multi_index(p, &mut idx);
            // exact on a box: the nearest face along the nearest axis
            let steps = idx.iter().zip(&grid.counts).map(|(&i, &n)| i.min(n - 1 - i)).min().unwrap();
            grid.distance.push(T::from_usize_lossy(steps) * h0);
            if steps > 0 {
                grid.unknown[p] = Some(grid.interior.len());
                grid.interior.push(p);
            }
        }
        Ok(grid)
    }

    /// The cube `[lo, hi]^dim` with `nodes` nodes per axis.
    pub fn cube(dim: usize, lo: T, hi: T, nodes: usize) -> Result<Self> {
        Self::new(&vec![(lo, hi); dim], &[nodes])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.distance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distance.is_empty()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Per-axis index of node `p` written into `out`.
    pub fn fill_multi_index(&self, mut p: usize, out: &mut [usize]) {
        for a in 0..self.dim {
            out[a] = p % self.counts[a];
            p /= self.counts[a];
        }
    }

    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        self.fill_multi_index(p, &mut out);
        out
    }

    /// Index of node `p` along a single axis.
    #[inline]
    pub fn axis_index(&self, p: usize, axis: usize) -> usize {
        (p / self.strides[axis]) % self.counts[axis]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coordinate(&self, p: usize, axis: usize) -> T {
        self.lower[axis] + T::from_usize_lossy(self.axis_index(p, axis)) * self.h
    }

    pub fn point(&self, p: usize) -> Vec<T> {
        (0..self.dim).map(|a| self.coordinate(p, a)).collect()
    }

    pub fn point_f64(&self, p: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.coordinate(p, a).to_f64_lossy()).collect()
    }

    /// Euclidean distance in chart coordinates to the boundary of the box.
    pub fn boundary_distance(&self, p: usize) -> T {
        self.distance[p]
    }

    pub fn distances(&self) -> &[T] {
        &self.distance
    }

    pub fn class(&self, p: usize) -> NodeClass {
        if self.unknown[p].is_some() {
            NodeClass::Interior
        } else {
            NodeClass::Boundary
        }
    }

    pub fn is_interior(&self, p: usize) -> bool {
        self.unknown[p].is_some()
    }

    /// Interior nodes in increasing flat order; position = unknown index.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Unknown index of an interior node, `None` on the boundary.
    pub fn unknown_index(&self, p: usize) -> Option<usize> {
        self.unknown[p]
    }

    /// The grid with spacing halved on the same box.
    pub fn refined(&self) -> Result<Self> {
        let bounds: Vec<(T, T)> = self.lower.iter().copied().zip(self.upper.iter().copied()).collect();
        let counts: Vec<usize> = self.counts.iter().map(|n| 2 * n - 1).collect();
        Self::new(&bounds, &counts)
    }
}
