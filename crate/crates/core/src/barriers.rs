//! Sub- and supersolution checks, the flat-chart supersolution construction
//! and the linear comparison operator between two admissible functions.

use rayon::prelude::*;

use crate::conformal::{w_at, Derivatives, NodeW, RhsFunction, W_PD_TOL};
use crate::error::{Error, Result};
use crate::field::{CovectorField, ScalarField, Sym2Field};
use crate::grid::{ChartGrid, MAX_DIM};
use crate::linalg::Mat;
use crate::quadrature::gauss_legendre_unit;
use crate::regularization::{build_t, PsiSchedule, MARGIN_TOL};
use crate::scalar::Real;
use crate::tensor::{covariant_hessian, MetricPackage};

pub const ORDERING_TOL: f64 = 1e-8;
pub const QUADRATURE_ORDER: usize = 16;
/// Smallest `ε` tried by [`flat_supersolution`].
pub const EPSILON_FLOOR: f64 = 1.0 / 1_048_576.0;

/// Per-node outcome of a subsolution check.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionReport<T> {
    pub pass: bool,
    pub admissible: bool,
    /// `log det w[ul] − f(x, ul)` per interior node, `-inf` where `w` is
    /// not admissible.
    pub margins: Vec<T>,
    pub worst_margin: T,
    pub worst_node: usize,
}

fn node_margin<T: Real>(d: &Derivatives<T>, u: T, psi: T, t: &Mat<T>, rhs: &RhsFunction<T>, m: &MetricPackage<T>, p: usize) -> Result<(NodeW<T>, T)> {
    let node = NodeW::analyse(w_at(d, psi, t, m, p), &m.metric().mat(p));
    let margin = if node.positive && node.min_eig > T::lit(W_PD_TOL) {
        node.log_det - rhs.value(m.grid(), p, u)?
    } else {
        T::neg_infinity()
    };
    Ok((node, margin))
}

/// Checks `log det w[ul] ≥ f(x, ul)` with `w` admissible at interior nodes.
pub fn verify_subsolution<T: Real>(
    ul: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<SubsolutionReport<T>> {
    let d = Derivatives::of(ul, m);
    let interior = m.grid().interior_nodes();
    let margins: Vec<T> = interior
        .par_iter()
        .map(|&p| node_margin(&d, ul.at(p), psi.at(p), &t.mat(p), rhs, m, p).map(|x| x.1))
        .collect::<Result<_>>()?;
    let (k, worst) = margins.iter().enumerate().fold((0, T::infinity()), |a, (k, &v)| if v < a.1 { (k, v) } else { a });
    let admissible = margins.iter().all(|v| v.is_finite());
    Ok(SubsolutionReport {
        pass: admissible && worst >= -T::lit(MARGIN_TOL),
        admissible,
        margins,
        worst_margin: worst,
        worst_node: interior[k],
    })
}

/// Supersolution check for one cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperCheck<T> {
    /// `None` stands for `ψ ≡ 1`.
    pub k: Option<u32>,
    pub pass: bool,
    /// Nodes where `w[ubar]` is positive definite.
    pub checked: usize,
    /// Largest `log det w[ubar] − f(x, ul)` over checked nodes.
    pub worst_excess: T,
    pub worst_node: usize,
    /// Nodes where comparing against `f(x, ubar)` would change the verdict.
    pub rhs_disagreements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupersolutionReport<T> {
    pub pass: bool,
    /// `ubar ≥ ul` at every node.
    pub ordered: bool,
    pub first_unordered: Option<usize>,
    pub checks: Vec<SuperCheck<T>>,
}

impl<T: Real> SupersolutionReport<T> {
    pub fn rhs_disagreements(&self) -> usize {
        self.checks.iter().map(|c| c.rhs_disagreements).sum()
    }

    /// The failing check with the largest excess.
    pub fn obstruction(&self) -> Option<&SuperCheck<T>> {
        self.checks.iter().filter(|c| !c.pass).max_by(|a, b| a.worst_excess.partial_cmp(&b.worst_excess).unwrap_or(std::cmp::Ordering::Equal))
    }
}

fn super_check<T: Real>(
    k: Option<u32>,
    d: &Derivatives<T>,
    ubar: &ScalarField<T>,
    ul: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<SuperCheck<T>> {
    let grid = m.grid();
    let tol = T::lit(MARGIN_TOL);
    // (node, excess, disagrees) for positive-definite nodes
    let rows: Vec<Option<(usize, T, bool)>> = grid
        .interior_nodes()
        .par_iter()
        .map(|&p| {
            let node = NodeW::analyse(w_at(d, psi.at(p), &t.mat(p), m, p), &m.metric().mat(p));
            if !node.positive {
                return Ok(None);
            }
            let excess = node.log_det - rhs.value(grid, p, ul.at(p))?;
            let alt = node.log_det - rhs.value(grid, p, ubar.at(p))?;
            Ok(Some((p, excess, (excess <= tol) != (alt <= tol))))
        })
        .collect::<Result<_>>()?;
    let mut out = SuperCheck {
        k,
        pass: true,
        checked: 0,
        worst_excess: T::neg_infinity(),
        worst_node: grid.interior_nodes()[0],
        rhs_disagreements: 0,
    };
    for (p, excess, disagrees) in rows.into_iter().flatten() {
        out.checked += 1;
        out.rhs_disagreements += disagrees as usize;
        if excess > out.worst_excess {
            out.worst_excess = excess;
            out.worst_node = p;
        }
    }
    out.pass = out.worst_excess <= tol;
    Ok(out)
}

/// Checks `log det w[ubar] ≤ f(x, ul)` wherever `w[ubar]` is positive
/// definite, for every `ψ_k` with `T = S + λ(1−ψ_k)g` and for `ψ ≡ 1`.
pub fn verify_supersolution<T: Real>(
    ubar: &ScalarField<T>,
    ul: &ScalarField<T>,
    schedule: &PsiSchedule<T>,
    s: &Sym2Field<T>,
    lambda: T,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<SupersolutionReport<T>> {
    let tol = T::lit(ORDERING_TOL);
    let first_unordered = (0..ul.len()).find(|&p| !(ubar.at(p) >= ul.at(p) - tol));
    if first_unordered.is_some() {
        return Ok(SupersolutionReport { pass: false, ordered: false, first_unordered, checks: Vec::new() });
    }
    let d = Derivatives::of(ubar, m);
    let mut checks = Vec::with_capacity(schedule.ks().len() + 1);
    let one = ScalarField::constant(m.grid(), T::one());
    checks.push(super_check(None, &d, ubar, ul, &one, s, rhs, m)?);
    for (k, psi) in schedule.iter() {
        let t = build_t(s, psi, lambda, m);
        checks.push(super_check(Some(k), &d, ubar, ul, psi, &t, rhs, m)?);
    }
    Ok(SupersolutionReport { pass: checks.iter().all(|c| c.pass), ordered: true, first_unordered: None, checks })
}

/// A verified sub/supersolution pair.
#[derive(Debug, Clone)]
pub struct BarrierPair<T> {
    pub ul: ScalarField<T>,
    pub ubar: ScalarField<T>,
    pub epsilon: T,
    pub report: SupersolutionReport<T>,
}

/// Builds `ubar = sup ul + 1 + ε|x|²` on a flat chart, halving `ε` from 1
/// until the supersolution check passes.
pub fn flat_supersolution<T: Real>(
    ul: &ScalarField<T>,
    rhs: &RhsFunction<T>,
    schedule: &PsiSchedule<T>,
    lambda: T,
    m: &MetricPackage<T>,
) -> Result<BarrierPair<T>> {
    if !m.is_flat() {
        return Err(Error::NotFlat);
    }
    let grid = m.grid();
    let n = grid.dim();
    let zero = Sym2Field::zeros(n, grid.len());
    check_lemma_hypotheses(ul, rhs, m)?;
    let top = ul.values().iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut eps = T::one();
    let mut last = None;
    while eps >= T::lit(EPSILON_FLOOR) {
        let ubar = ScalarField::from_fn(grid, |x| top + T::one() + eps * x.iter().map(|&v| v * v).sum::<T>());
        let report = verify_supersolution(&ubar, ul, schedule, &zero, lambda, rhs, m)?;
        if report.pass {
            return Ok(BarrierPair { ul: ul.clone(), ubar, epsilon: eps, report });
        }
        last = report.obstruction().map(|c| c.worst_node);
        eps = eps * T::lit(0.5);
    }
    Err(Error::EpsilonUnderflow { node: last.unwrap_or(0) })
}

/// `ul_ij > 0`, `log det ul_ij ≥ f(x, ul)` and the `ψ ≡ 1` subsolution
/// inequality, on a flat chart.
pub fn check_lemma_hypotheses<T: Real>(ul: &ScalarField<T>, rhs: &RhsFunction<T>, m: &MetricPackage<T>) -> Result<()> {
    let grid = m.grid();
    let hess = covariant_hessian(ul, m);
    for &p in grid.interior_nodes() {
        let h = hess.mat(p);
        let Some(c) = h.cholesky() else {
            return Err(Error::LemmaHypothesis { node: p, reason: "subsolution Hessian is not positive definite" });
        };
        if h.sym_eigenvalues()[0] <= T::zero() {
            return Err(Error::LemmaHypothesis { node: p, reason: "subsolution Hessian is not positive definite" });
        }
        if c.log_det() < rhs.value(grid, p, ul.at(p))? - T::lit(MARGIN_TOL) {
            return Err(Error::LemmaHypothesis { node: p, reason: "det of subsolution Hessian is below the target" });
        }
    }
    let one = ScalarField::constant(grid, T::one());
    let zero = Sym2Field::zeros(grid.dim(), grid.len());
    let sub = verify_subsolution(ul, &one, &zero, rhs, m)?;
    if !sub.pass {
        return Err(Error::LemmaHypothesis { node: sub.worst_node, reason: "subsolution inequality fails for psi = 1" });
    }
    Ok(())
}

/// Coefficients of the linear inequality obtained by integrating the
/// log-determinant along the segment between two admissible tensors.
#[derive(Debug, Clone)]
pub struct ComparisonOperator<T> {
    pub a: Sym2Field<T>,
    /// Multiplies `(u − ul)_i`.
    pub b: CovectorField<T>,
    pub d_coeff: ScalarField<T>,
}

impl<T: Real> ComparisonOperator<T> {
    /// `a^ij (ul−u)_ij + b^i (u−ul)_i + d (ul−u)` at interior nodes.
    pub fn apply(&self, ul: &ScalarField<T>, u: &ScalarField<T>, m: &MetricPackage<T>) -> Vec<T> {
        let diff = ul.zip_map(u, |a, b| a - b);
        let dd = Derivatives::of(&diff, m);
        let n = m.dim();
        m.grid()
            .interior_nodes()
            .iter()
            .map(|&p| {
                let grad = dd.grad.at(p);
                let b = self.b.at(p);
                let first: T = (0..n).map(|i| -b[i] * grad[i]).sum();
                self.a.mat(p).contract(&dd.hess.mat(p)) + first + self.d_coeff.at(p) * diff.at(p)
            })
            .collect()
    }
}

/// The comparison operator with 16-point Gauss–Legendre quadrature in `t`.
pub fn mean_value_operator<T: Real>(
    ul: &ScalarField<T>,
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<ComparisonOperator<T>> {
    mean_value_operator_with_order(ul, u, psi, t, rhs, m, QUADRATURE_ORDER)
}

pub fn mean_value_operator_with_order<T: Real>(
    ul: &ScalarField<T>,
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
    order: usize,
) -> Result<ComparisonOperator<T>> {
    let grid = m.grid();
    let n = grid.dim();
    let rule = gauss_legendre_unit::<T>(order);
    let dl = Derivatives::of(ul, m);
    let du = Derivatives::of(u, m);
    let half = T::lit(0.5);
    let rows: Vec<(usize, Mat<T>, [T; MAX_DIM], T)> = grid
        .interior_nodes()
        .par_iter()
        .map(|&p| {
            let g = m.metric().mat(p);
            let ginv = m.inverse().mat(p);
            let tp = t.mat(p);
            let wl = NodeW::analyse(w_at(&dl, psi.at(p), &tp, m, p), &g);
            let wu = NodeW::analyse(w_at(&du, psi.at(p), &tp, m, p), &g);
            for w in [&wl, &wu] {
                if !(w.positive && w.min_eig > T::zero()) {
                    return Err(Error::AdmissibilityViolation { node: p, min_eig: w.min_eig.to_f64_lossy() });
                }
            }
            let mut a = Mat::zeros(n);
            let mut d = T::zero();
            for &(s, wt) in &rule {
                let mix = wl.w.scaled(s).add(&wu.w.scaled(T::one() - s));
                let inv = mix.cholesky().ok_or(Error::AdmissibilityViolation { node: p, min_eig: 0.0 })?.inverse();
                a = a.add(&inv.scaled(wt));
                if !rhs.is_from_s() {
                    d = d - wt * rhs.dz(grid, p, s * ul.at(p) + (T::one() - s) * u.at(p))?;
                }
            }
            if rhs.is_from_s() {
                // f_z is constant
                d = -rhs.dz(grid, p, u.at(p))?;
            }
            let sum: Vec<T> = (0..n).map(|j| dl.grad.at(p)[j] + du.grad.at(p)[j]).collect();
            let tr = a.contract(&g);
            let a_sum = a.mul_vec(&sum);
            let g_sum = ginv.mul_vec(&sum);
            let mut b = [T::zero(); MAX_DIM];
            for i in 0..n {
                b[i] = -psi.at(p) * (a_sum[i] - half * tr * g_sum[i]);
            }
            Ok((p, a, b, d))
        })
        .collect::<Result<_>>()?;
    let mut a = vec![Mat::zeros(n); grid.len()];
    let mut b = vec![[T::zero(); MAX_DIM]; grid.len()];
    let mut d = vec![T::zero(); grid.len()];
    for (p, ap, bp, dp) in rows {
        a[p] = ap;
        b[p] = bp;
        d[p] = dp;
    }
    Ok(ComparisonOperator { a: Sym2Field::from_mats(n, &a), b: CovectorField::from_nodes(n, b), d_coeff: ScalarField::new(d) })
}

/// Per-node `ul − tol ≤ u ≤ ubar + tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport<T> {
    pub pass: bool,
    pub flags: Vec<bool>,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// `min (u − ul)` over all nodes.
    pub min_above_sub: T,
    /// `min (ubar − u)`, `+inf` without a supersolution.
    pub min_below_super: T,
}

pub fn ordering_check<T: Real>(ul: &ScalarField<T>, u: &ScalarField<T>, ubar: Option<&ScalarField<T>>) -> OrderingReport<T> {
    let tol = T::lit(ORDERING_TOL);
    let mut min_above = T::infinity();
    let mut min_below = T::infinity();
    let flags: Vec<bool> = (0..u.len())
        .map(|p| {
            let lo = u.at(p) - ul.at(p);
            let hi = ubar.map_or(T::infinity(), |b| b.at(p) - u.at(p));
            min_above = min_above.min(lo);
            min_below = min_below.min(hi);
            lo >= -tol && hi >= -tol
        })
        .collect();
    let violations = flags.iter().filter(|f| !**f).count();
    OrderingReport {
        pass: violations == 0,
        first_violation: flags.iter().position(|f| !*f),
        violations,
        flags,
        min_above_sub: min_above,
        min_below_super: min_below,
    }
}

/// `|x|²`, whose Hessian `2δ` dominates the flat metric.
pub fn default_chi<T: Real>(grid: &ChartGrid<T>) -> ScalarField<T> {
    ScalarField::from_fn(grid, |x| x.iter().map(|&v| v * v).sum())
}

/// Checks `χ_ij ≥ g_ij` at interior nodes.
pub fn verify_chi<T: Real>(chi: &ScalarField<T>, m: &MetricPackage<T>) -> Result<()> {
    let hess = covariant_hessian(chi, m);
    for &p in m.grid().interior_nodes() {
        let g = m.metric().mat(p);
        let ok = hess.mat(p).sub(&g).eigenvalues_relative_to(&g).is_some_and(|ev| ev[0] >= -T::lit(ORDERING_TOL));
        if !ok {
            return Err(Error::ChiNotConvex { node: p });
        }
    }
    Ok(())
}
