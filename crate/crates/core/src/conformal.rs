//! The conformal transformation law, the `w` tensor and the residual of the
//! (regularized) log-determinant equation.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{EvalError, Expr};
use crate::field::{CovectorField, ScalarField, Sym2Field};
use crate::grid::{ChartGrid, MAX_DIM};
use crate::linalg::Mat;
use crate::scalar::Real;
use crate::tensor::{covariant_hessian, gradient, MetricPackage};

/// Admissibility threshold on the smallest eigenvalue of `w`.
pub const W_PD_TOL: f64 = 1e-8;

/// Right-hand side `f(x, z)` in general form.
pub trait GeneralRhs<T>: Send + Sync {
    fn value(&self, x: &[T], z: T) -> Result<T, EvalError>;
    /// `∂f/∂z`.
    fn dz(&self, x: &[T], z: T) -> Result<T, EvalError>;
}

/// `f` and `f_z` given as closures.
pub struct FnRhs<F, G> {
    pub f: F,
    pub f_z: G,
}

impl<T, F, G> GeneralRhs<T> for FnRhs<F, G>
where
    F: Fn(&[T], T) -> T + Send + Sync,
    G: Fn(&[T], T) -> T + Send + Sync,
{
    fn value(&self, x: &[T], z: T) -> Result<T, EvalError> {
        Ok((self.f)(x, z))
    }

    fn dz(&self, x: &[T], z: T) -> Result<T, EvalError> {
        Ok((self.f_z)(x, z))
    }
}

/// `f` as an expression in `x1..xn, z`. Without an explicit `f_z`
/// expression the derivative is a central difference in `z`.
pub struct ExprRhs {
    pub f: Expr,
    pub f_z: Option<Expr>,
}

impl<T: Real> GeneralRhs<T> for ExprRhs {
    fn value(&self, x: &[T], z: T) -> Result<T, EvalError> {
        let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
        self.f.eval(&xs, Some(z.to_f64_lossy())).map(T::lit)
    }

    fn dz(&self, x: &[T], z: T) -> Result<T, EvalError> {
        let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
        let z = z.to_f64_lossy();
        if let Some(fz) = &self.f_z {
            return fz.eval(&xs, Some(z)).map(T::lit);
        }
        if !self.f.uses_z() {
            return Ok(T::zero());
        }
        let step = f64::EPSILON.cbrt() * z.abs().max(1.0);
        let hi = self.f.eval(&xs, Some(z + step))?;
        let lo = self.f.eval(&xs, Some(z - step))?;
        Ok(T::lit((hi - lo) / (2.0 * step)))
    }
}

/// The right-hand side of `log det w = f(x, u)`.
#[derive(Clone)]
pub enum RhsFunction<T> {
    /// `f(x, z) = log s(x) + log det g(x) − 2 n z`, from a positive target `s`.
    FromS { log_s: ScalarField<T>, log_det_g: ScalarField<T>, dim: usize },
    General(Arc<dyn GeneralRhs<T>>),
}

impl<T> fmt::Debug for RhsFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhsFunction::FromS { dim, .. } => write!(f, "RhsFunction::FromS {{ dim: {dim} }}"),
            RhsFunction::General(_) => write!(f, "RhsFunction::General"),
        }
    }
}

impl<T: Real> RhsFunction<T> {
    pub fn general(rhs: impl GeneralRhs<T> + 'static) -> Self {
        RhsFunction::General(Arc::new(rhs))
    }

    /// Constant `f ≡ c`.
    pub fn constant(c: T) -> Self {
        Self::general(FnRhs { f: move |_: &[T], _: T| c, f_z: |_: &[T], _: T| T::zero() })
    }

    /// `f(x_p, z)` at node `p`.
    #[inline]
    pub fn value(&self, grid: &ChartGrid<T>, p: usize, z: T) -> Result<T> {
        match self {
            RhsFunction::FromS { log_s, log_det_g, dim } => {
                Ok(log_s.at(p) + log_det_g.at(p) - T::lit(2.0) * T::from_usize_lossy(*dim) * z)
            }
            RhsFunction::General(g) => g.value(&grid.point(p), z).map_err(|source| Error::Eval { node: p, source }),
        }
    }

    /// `f_z(x_p, z)` at node `p`.
    #[inline]
    pub fn dz(&self, grid: &ChartGrid<T>, p: usize, z: T) -> Result<T> {
        match self {
            RhsFunction::FromS { dim, .. } => Ok(-T::lit(2.0) * T::from_usize_lossy(*dim)),
            RhsFunction::General(g) => g.dz(&grid.point(p), z).map_err(|source| Error::Eval { node: p, source }),
        }
    }

    pub fn is_from_s(&self) -> bool {
        matches!(self, RhsFunction::FromS { .. })
    }
}

/// Gradient and covariant Hessian of a scalar field.
#[derive(Debug, Clone)]
pub struct Derivatives<T> {
    pub grad: CovectorField<T>,
    pub hess: Sym2Field<T>,
}

impl<T: Real> Derivatives<T> {
    pub fn of(u: &ScalarField<T>, m: &MetricPackage<T>) -> Self {
        Derivatives { grad: gradient(m.grid(), u), hess: covariant_hessian(u, m) }
    }
}

/// `u_ij + ψ u_i u_j − ½ ψ |∇u|² g_ij + T_ij` at one node.
#[inline]
pub fn w_at<T: Real>(d: &Derivatives<T>, psi: T, tensor: &Mat<T>, m: &MetricPackage<T>, p: usize) -> Mat<T> {
    let n = m.dim();
    let g = d.grad.at(p);
    let gm = m.metric().mat(p);
    let ginv = m.inverse().mat(p);
    let mut norm2 = T::zero();
    for k in 0..n {
        for l in 0..n {
            norm2 = norm2 + ginv[(k, l)] * g[k] * g[l];
        }
    }
    let half = T::lit(0.5);
    let h = d.hess.mat(p);
    Mat::from_fn(n, |i, j| h[(i, j)] + psi * g[i] * g[j] - half * psi * norm2 * gm[(i, j)] + tensor[(i, j)])
}

/// Per-node information about the tensor inside the determinant.
#[derive(Debug, Clone, Copy)]
pub struct NodeW<T> {
    pub w: Mat<T>,
    pub w_inv: Mat<T>,
    /// Eigenvalues relative to `g`, smallest and largest.
    pub min_eig: T,
    pub max_eig: T,
    /// `log det w`, meaningful only when `positive`.
    pub log_det: T,
    pub positive: bool,
}

impl<T: Real> NodeW<T> {
    pub fn analyse(w: Mat<T>, g: &Mat<T>) -> Self {
        let n = w.dim();
        let ev = w.eigenvalues_relative_to(g).unwrap_or([T::nan(); MAX_DIM]);
        let (min_eig, max_eig) = (ev[0], ev[n - 1]);
        match w.cholesky() {
            Some(c) => NodeW { w, w_inv: c.inverse(), min_eig, max_eig, log_det: c.log_det(), positive: true },
            None => NodeW { w, w_inv: Mat::zeros(n), min_eig, max_eig, log_det: T::zero(), positive: false },
        }
    }

    pub fn trace_inv(&self, g: &Mat<T>) -> T {
        self.w_inv.contract(g)
    }
}

/// The `w` tensor over a grid with its inverse and spectral data.
#[derive(Debug, Clone)]
pub struct WField<T> {
    pub w: Sym2Field<T>,
    /// Zero where `w` is not positive definite.
    pub w_inv: Sym2Field<T>,
    pub min_eig: ScalarField<T>,
    pub max_eig: ScalarField<T>,
    /// `w^ij g_ij`, zero where `w` is not positive definite.
    pub trw: ScalarField<T>,
    pub log_det: ScalarField<T>,
    pub positive: Vec<bool>,
}

/// Computes `w` at every node.
pub fn w_tensor<T: Real>(u: &ScalarField<T>, psi: &ScalarField<T>, tensor: &Sym2Field<T>, m: &MetricPackage<T>) -> WField<T> {
    let d = Derivatives::of(u, m);
    w_field_from(&d, psi, tensor, m)
}

pub(crate) fn w_field_from<T: Real>(d: &Derivatives<T>, psi: &ScalarField<T>, tensor: &Sym2Field<T>, m: &MetricPackage<T>) -> WField<T> {
    let grid = m.grid();
    let n = grid.dim();
    let nodes: Vec<NodeW<T>> = (0..grid.len())
        .into_par_iter()
        .map(|p| NodeW::analyse(w_at(d, psi.at(p), &tensor.mat(p), m, p), &m.metric().mat(p)))
        .collect();
    let ws: Vec<Mat<T>> = nodes.iter().map(|x| x.w).collect();
    let winv: Vec<Mat<T>> = nodes.iter().map(|x| x.w_inv).collect();
    WField {
        w: Sym2Field::from_mats(n, &ws),
        w_inv: Sym2Field::from_mats(n, &winv),
        min_eig: ScalarField::new(nodes.iter().map(|x| x.min_eig).collect()),
        max_eig: ScalarField::new(nodes.iter().map(|x| x.max_eig).collect()),
        trw: ScalarField::new(nodes.iter().enumerate().map(|(p, x)| x.trace_inv(&m.metric().mat(p))).collect()),
        log_det: ScalarField::new(nodes.iter().map(|x| x.log_det).collect()),
        positive: nodes.iter().map(|x| x.positive).collect(),
    }
}

/// The transformed Schouten tensor `u_ij + u_i u_j − ½|∇u|² g_ij + S_ij`
/// of `e^{-2u} g`.
pub fn schouten_conformal<T: Real>(u: &ScalarField<T>, m: &MetricPackage<T>) -> Result<Sym2Field<T>> {
    let s = m.schouten().ok_or(Error::MissingSchouten)?;
    let one = ScalarField::constant(m.grid(), T::one());
    Ok(w_tensor(u, &one, s, m).w)
}

/// Result of an admissibility scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility<T> {
    pub node_flags: Vec<bool>,
    pub all: bool,
    pub worst_margin: T,
    pub worst_node: usize,
}

/// Node flags `min_eig > delta`, over `nodes`.
pub fn admissible_on<T: Real>(w: &WField<T>, delta: T, nodes: &[usize]) -> Admissibility<T> {
    let mut flags = vec![true; w.positive.len()];
    let mut worst = T::infinity();
    let mut worst_node = nodes.first().copied().unwrap_or(0);
    for &p in nodes {
        let e = w.min_eig.at(p);
        let ok = w.positive[p] && e > delta;
        flags[p] = ok;
        // NaN eigenvalues only arise from a broken metric; count them as worst
        if !(e >= worst) {
            worst = if e.is_nan() { T::neg_infinity() } else { e };
            worst_node = p;
        }
    }
    Admissibility { all: nodes.iter().all(|&p| flags[p]), node_flags: flags, worst_margin: worst, worst_node }
}

/// Admissibility over every node.
pub fn admissible<T: Real>(w: &WField<T>, delta: T) -> Admissibility<T> {
    let all: Vec<usize> = (0..w.positive.len()).collect();
    admissible_on(w, delta, &all)
}

/// `log det w − f(x, u)` at every interior node, in unknown order.
pub fn residual<T: Real>(
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    tensor: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<Vec<T>> {
    residual_with_tol(u, psi, tensor, rhs, m, T::lit(W_PD_TOL)).map(|(r, _)| r)
}

/// Residual together with the worst interior admissibility margin.
pub fn residual_with_tol<T: Real>(
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    tensor: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
    delta: T,
) -> Result<(Vec<T>, T)> {
    let grid = m.grid();
    let d = Derivatives::of(u, m);
    let vals: Vec<(T, T)> = grid
        .interior_nodes()
        .par_iter()
        .map(|&p| {
            let node = NodeW::analyse(w_at(&d, psi.at(p), &tensor.mat(p), m, p), &m.metric().mat(p));
            if !(node.positive && node.min_eig > delta) {
                return Err(Error::AdmissibilityViolation { node: p, min_eig: node.min_eig.to_f64_lossy() });
            }
            Ok((node.log_det - rhs.value(grid, p, u.at(p))?, node.min_eig))
        })
        .collect::<Result<_>>()?;
    let margin = vals.iter().fold(T::infinity(), |m, v| m.min(v.1));
    Ok((vals.into_iter().map(|v| v.0).collect(), margin))
}

/// `det S̃[u] / (e^{-2nu} det g)`, the target for which `u` is an exact
/// discrete solution. Boundary nodes copy the nearest interior value.
pub fn s_from_u<T: Real>(u: &ScalarField<T>, m: &MetricPackage<T>) -> Result<ScalarField<T>> {
    let grid = m.grid();
    let n = grid.dim();
    let st = schouten_conformal(u, m)?;
    let two_n = T::lit(2.0) * T::from_usize_lossy(n);
    let delta = T::lit(W_PD_TOL);
    let interior: Vec<T> = grid
        .interior_nodes()
        .par_iter()
        .map(|&p| {
            let node = NodeW::analyse(st.mat(p), &m.metric().mat(p));
            if !(node.positive && node.min_eig > delta) {
                return Err(Error::AdmissibilityViolation { node: p, min_eig: node.min_eig.to_f64_lossy() });
            }
            Ok((node.log_det + two_n * u.at(p) - m.log_det().at(p)).exp())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![T::zero(); grid.len()];
    for (k, &p) in grid.interior_nodes().iter().enumerate() {
        out[p] = interior[k];
    }
    let mut idx = vec![0; n];
    for (p, slot) in out.iter_mut().enumerate() {
        if !grid.is_interior(p) {
            grid.fill_multi_index(p, &mut idx);
            for (a, i) in idx.iter_mut().enumerate() {
                *i = (*i).clamp(1, grid.counts()[a] - 2);
            }
            let q = grid.flat_index(&idx);
            *slot = interior[grid.unknown_index(q).expect("clamped node is interior")];
        }
    }
    Ok(ScalarField::new(out))
}

/// The from-`s` right-hand side `log s + log det g − 2 n z`.
pub fn f_from_s<T: Real>(s: &ScalarField<T>, m: &MetricPackage<T>) -> Result<RhsFunction<T>> {
    s.check_len(m.grid(), "target s")?;
    if let Some(node) = s.values().iter().position(|&v| !(v > T::zero() && v.is_finite())) {
        return Err(Error::NonPositiveTarget { node, value: s.at(node).to_f64_lossy() });
    }
    Ok(RhsFunction::FromS { log_s: s.map(|v| v.ln()), log_det_g: m.log_det().clone(), dim: m.dim() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_factor(x: &[f64]) -> f64 {
        ((1.0 + x.iter().map(|v| v * v).sum::<f64>()) / 2.0).ln()
    }

    #[test]
    fn flat_zero_and_quadratic() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let zero = schouten_conformal(&ScalarField::constant(&g, 0.0), &m).unwrap();
        assert!((0..g.len()).all(|p| zero.mat(p).max_abs() == 0.0));
        let q = ScalarField::from_fn(&g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let st = schouten_conformal(&q, &m).unwrap();
        let c = g.flat_index(&[4, 4, 4]);
        assert!(st.mat(c).sub(&Mat::identity(3)).max_abs() < 1e-13);
    }

    #[test]
    fn stereographic_factor_at_origin() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 33).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let u = ScalarField::from_fn(&g, sphere_factor);
        let st = schouten_conformal(&u, &m).unwrap();
        let c = g.flat_index(&[16, 16, 16]);
        // ½ e^{-2u(0)} = 2
        assert!(st.mat(c).sub(&Mat::identity(3).scaled(2.0)).max_abs() < 1e-2);
    }

    #[test]
    fn quadratic_w_rank_one_determinant() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let one = ScalarField::constant(&g, 1.0);
        let zero_t = Sym2Field::zeros(3, g.len());
        let w = w_tensor(&u, &one, &zero_t, &m);
        for &p in g.interior_nodes() {
            let r2: f64 = g.point(p).iter().map(|v| v * v).sum();
            let det = (1.0 - r2 / 2.0).powi(2) * (1.0 + r2 / 2.0);
            assert!((w.log_det.at(p) - det.ln()).abs() < 1e-12);
        }
        let w0 = w_tensor(&u, &ScalarField::constant(&g, 0.0), &zero_t, &m);
        for &p in g.interior_nodes() {
            assert!(w0.w.mat(p).sub(&Mat::identity(3)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn admissibility_flags() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 5).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let mut mats = vec![Mat::identity(3); g.len()];
        mats[7] = Mat::diagonal(&[1.0, -0.1, 1.0]);
        let zero = ScalarField::constant(&g, 0.0);
        let w = w_tensor(&zero, &zero, &Sym2Field::from_mats(3, &mats), &m);
        let a = admissible(&w, W_PD_TOL);
        assert!(!a.all && !a.node_flags[7] && a.node_flags[6]);
        assert_eq!(a.worst_node, 7);
        let wi = w_tensor(&zero, &zero, &Sym2Field::identity(&g), &m);
        let ai = admissible(&wi, W_PD_TOL);
        assert!(ai.all && (ai.worst_margin - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_errors_and_zero_cases() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let zero = ScalarField::constant(&g, 0.0);
        let zt = Sym2Field::zeros(3, g.len());
        let rhs = RhsFunction::constant(0.0);
        assert!(matches!(residual(&zero, &zero, &zt, &rhs, &m), Err(Error::AdmissibilityViolation { .. })));
        let q = ScalarField::from_fn(&g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let r = residual(&q, &zero, &zt, &rhs, &m).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn s_from_u_examples() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let q = ScalarField::from_fn(&g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let s = s_from_u(&q, &m).unwrap();
        assert!((s.at(g.flat_index(&[4, 4, 4])) - 1.0).abs() < 1e-12);
        assert!(matches!(s_from_u(&ScalarField::constant(&g, 0.0), &m), Err(Error::AdmissibilityViolation { .. })));
    }

    #[test]
    fn f_from_s_examples() {
        let g = ChartGrid::<f64>::cube(3, -0.5, 0.5, 5).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        let f = f_from_s(&ScalarField::constant(&g, 1.0), &m).unwrap();
        assert_eq!(f.value(&g, 0, 0.0).unwrap(), 0.0);
        assert_eq!(f.dz(&g, 0, 0.3).unwrap(), -6.0);
        let f = f_from_s(&ScalarField::constant(&g, 0.125), &m).unwrap();
        assert!((f.value(&g, 3, 0.0).unwrap() + 2.0794415).abs() < 1e-7);
        let mut s = ScalarField::constant(&g, 1.0);
        s.values_mut()[11] = 0.0;
        assert_eq!(f_from_s(&s, &m).unwrap_err(), Error::NonPositiveTarget { node: 11, value: 0.0 });
    }

    #[test]
    fn schouten_missing_in_two_dimensions() {
        let g = ChartGrid::<f64>::cube(2, -0.5, 0.5, 9).unwrap();
        let m = MetricPackage::flat(&g).unwrap();
        assert_eq!(schouten_conformal(&ScalarField::constant(&g, 0.0), &m).unwrap_err(), Error::MissingSchouten);
    }

    #[test]
    fn expression_rhs_derivative_by_differences() {
        let e = crate::expr::parse("sin(z) * x1", crate::expr::VarSet::with_z(2)).unwrap();
        let rhs = ExprRhs { f: e, f_z: None };
        let d: f64 = rhs.dz(&[2.0, 0.0], 0.3).unwrap();
        assert!((d - 2.0 * 0.3f64.cos()).abs() < 1e-9);
    }
}
