//! Second-order finite differences on chart grids.
//!
//! Interior nodes use central stencils, boundary nodes second-order
//! one-sided stencils along the axis that leaves the box.

use rayon::prelude::*;

use crate::field::{CovectorField, ScalarField, Sym2Field};
use crate::grid::{ChartGrid, MAX_DIM};
use crate::linalg::Mat;
use crate::scalar::Real;

/// `∂_axis f` at node `p`.
#[inline]
pub fn d1_at<T: Real>(grid: &ChartGrid<T>, f: &[T], p: usize, axis: usize) -> T {
    let i = grid.axis_index(p, axis);
    let n = grid.counts()[axis];
    let s = grid.stride(axis);
    let two_h = T::lit(2.0) * grid.spacing();
    if i == 0 {
        (T::lit(-3.0) * f[p] + T::lit(4.0) * f[p + s] - f[p + 2 * s]) / two_h
    } else if i == n - 1 {
        (T::lit(3.0) * f[p] - T::lit(4.0) * f[p - s] + f[p - 2 * s]) / two_h
    } else {
        (f[p + s] - f[p - s]) / two_h
    }
}

/// `∂_axis ∂_axis f` at node `p`.
#[inline]
pub fn d2_at<T: Real>(grid: &ChartGrid<T>, f: &[T], p: usize, axis: usize) -> T {
    let i = grid.axis_index(p, axis);
    let n = grid.counts()[axis];
    let s = grid.stride(axis);
    let h = grid.spacing();
    let hh = h * h;
    if i == 0 {
        (T::lit(2.0) * f[p] - T::lit(5.0) * f[p + s] + T::lit(4.0) * f[p + 2 * s] - f[p + 3 * s]) / hh
    } else if i == n - 1 {
        (T::lit(2.0) * f[p] - T::lit(5.0) * f[p - s] + T::lit(4.0) * f[p - 2 * s] - f[p - 3 * s]) / hh
    } else {
        (f[p + s] - T::lit(2.0) * f[p] + f[p - s]) / hh
    }
}

pub fn d1<T: Real>(grid: &ChartGrid<T>, f: &[T], axis: usize) -> Vec<T> {
    (0..grid.len()).into_par_iter().map(|p| d1_at(grid, f, p, axis)).collect()
}

pub fn d2<T: Real>(grid: &ChartGrid<T>, f: &[T], axis: usize) -> Vec<T> {
    (0..grid.len()).into_par_iter().map(|p| d2_at(grid, f, p, axis)).collect()
}

/// Partial derivatives `u_{,i}`.
pub fn gradient<T: Real>(grid: &ChartGrid<T>, u: &ScalarField<T>) -> CovectorField<T> {
    let n = grid.dim();
    let f = u.values();
    let nodes: Vec<[T; MAX_DIM]> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let mut g = [T::zero(); MAX_DIM];
            for (a, ga) in g.iter_mut().enumerate().take(n) {
                *ga = d1_at(grid, f, p, a);
            }
            g
        })
        .collect();
    CovectorField::from_nodes(n, nodes)
}

/// Partial second derivatives `u_{,ij}`: three-point stencils on the
/// diagonal, one-dimensional first differences composed across axes off it.
pub fn partial_hessian<T: Real>(grid: &ChartGrid<T>, u: &ScalarField<T>) -> Sym2Field<T> {
    let n = grid.dim();
    let f = u.values();
    let first: Vec<Vec<T>> = (0..n).map(|b| d1(grid, f, b)).collect();
    Sym2Field::from_fn(grid, |p| {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = d2_at(grid, f, p, i);
            for j in i + 1..n {
                let v = d1_at(grid, &first[j], p, i);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_constant_are_exact() {
        let g = ChartGrid::<f64>::cube(3, -1.0, 1.0, 9).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0]);
        let du = gradient(&g, &u);
        let c = gradient(&g, &ScalarField::constant(&g, 3.5));
        for p in 0..g.len() {
            assert!((du.at(p)[0] - 1.0).abs() < 1e-13);
            assert!(du.at(p)[1].abs() < 1e-13 && du.at(p)[2].abs() < 1e-13);
            assert!(c.at(p).iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn sine_gradient_error_bound() {
        let g = ChartGrid::<f64>::cube(2, -1.0, 1.0, 65).unwrap();
        assert_eq!(g.spacing(), 1.0 / 32.0);
        let u = ScalarField::from_fn(&g, |x| x[0].sin());
        let du = gradient(&g, &u);
        let err = (0..g.len()).map(|p| (du.at(p)[0] - g.coordinate(p, 0).cos()).abs()).fold(0.0, f64::max);
        assert!(err <= 2e-4, "{err}");
    }

    #[test]
    fn quadratics_have_exact_hessians() {
        let g = ChartGrid::<f64>::cube(3, -1.0, 1.0, 9).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) + 0.3 * x[0] * x[2] - x[1]);
        let h = partial_hessian(&g, &u);
        for p in 0..g.len() {
            let m = h.mat(p);
            let expect = Mat::from_fn(3, |i, j| match (i, j) {
                (0, 0) | (1, 1) | (2, 2) => 1.0,
                (0, 2) | (2, 0) => 0.3,
                _ => 0.0,
            });
            assert!(m.sub(&expect).max_abs() < 1e-11, "node {p}");
        }
    }

    #[test]
    fn mixed_product_hessian() {
        let g = ChartGrid::<f64>::cube(3, -1.0, 1.0, 9).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0] * x[1]);
        let h = partial_hessian(&g, &u);
        for &p in g.interior_nodes() {
            let m = h.mat(p);
            assert!((m[(0, 1)] - 1.0).abs() < 1e-13);
            assert!(m[(0, 0)].abs() < 1e-13 && m[(2, 2)].abs() < 1e-13 && m[(1, 2)].abs() < 1e-13);
        }
    }
}
