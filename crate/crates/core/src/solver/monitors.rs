//! Observed values of the functionals from the gradient and interior
//! second-derivative estimates.

use crate::conformal::{w_at, Derivatives, NodeW};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym2Field};
use crate::scalar::Real;
use crate::tensor::{gradient, MetricPackage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientMonitor<T> {
    pub max: T,
    pub node: usize,
    pub on_boundary: bool,
}

/// `max ½ log max(|∇u|², floor) + μ u` over all nodes.
pub fn gradient_monitor<T: Real>(u: &ScalarField<T>, mu: T, floor: T, m: &MetricPackage<T>) -> GradientMonitor<T> {
    let grid = m.grid();
    let n = grid.dim();
    let du = gradient(grid, u);
    let half = T::lit(0.5);
    let mut best = GradientMonitor { max: T::neg_infinity(), node: 0, on_boundary: false };
    for p in 0..grid.len() {
        let gi = m.inverse().mat(p);
        let d = du.at(p);
        let mut norm2 = T::zero();
        for i in 0..n {
            for j in 0..n {
                norm2 = norm2 + gi[(i, j)] * d[i] * d[j];
            }
        }
        let w = half * norm2.max(floor).ln() + mu * u.at(p);
        if w > best.max {
            best = GradientMonitor { max: w, node: p, on_boundary: !grid.is_interior(p) };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianMonitor<T> {
    pub max: T,
    pub node: usize,
    /// Largest eigenvalue of `w` relative to `g` over the region.
    pub max_eig: T,
}

/// `max log(top eigenvalue of w relative to g) + λ χ` over `region`
/// (interior nodes by default).
pub fn hessian_monitor<T: Real>(
    u: &ScalarField<T>,
    lambda_mon: T,
    chi: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    m: &MetricPackage<T>,
    region: Option<&[usize]>,
) -> Result<HessianMonitor<T>> {
    let d = Derivatives::of(u, m);
    let nodes = region.unwrap_or(m.grid().interior_nodes());
    let mut best = HessianMonitor { max: T::neg_infinity(), node: nodes.first().copied().unwrap_or(0), max_eig: T::neg_infinity() };
    for &p in nodes {
        let node = NodeW::analyse(w_at(&d, psi.at(p), &t.mat(p), m, p), &m.metric().mat(p));
        if !(node.positive && node.min_eig > T::zero()) {
            return Err(Error::AdmissibilityViolation { node: p, min_eig: node.min_eig.to_f64_lossy() });
        }
        let v = node.max_eig.ln() + lambda_mon * chi.at(p);
        best.max_eig = best.max_eig.max(node.max_eig);
        if v > best.max {
            best.max = v;
            best.node = p;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;
    use crate::linalg::Mat;

    #[test]
    fn gradient_monitor_examples() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let lin = ScalarField::from_fn(&g, |x| x[0]);
        let r = gradient_monitor(&lin, 0.0, 1e-14, &m);
        assert!(r.max.abs() < 1e-14);
        let r = gradient_monitor(&ScalarField::constant(&g, 0.0), 0.0, 1e-14, &m);
        assert!((r.max - 0.5 * 1e-14f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hessian_monitor_examples() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let zero = ScalarField::constant(&g, 0.0);
        let q = ScalarField::from_fn(&g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let one = ScalarField::constant(&g, 1.0);
        let c = g.flat_index(&[4, 4, 4]);
        let r = hessian_monitor(&q, 0.0, &zero, &one, &Sym2Field::zeros(3, g.len()), &m, Some(&[c])).unwrap();
        assert!(r.max.abs() < 1e-12);
        let t = Sym2Field::constant(&g, &Mat::diagonal(&[2.0, 1.0, 1.0]));
        let r = hessian_monitor(&zero, 0.0, &zero, &zero, &t, &m, None).unwrap();
        assert!((r.max - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
