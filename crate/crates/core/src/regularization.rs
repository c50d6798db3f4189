//! Boundary cutoffs `ψ_k`, the shifted tensor `T = S + λ(1−ψ)g`, and the
//! choice of `λ` that keeps the subsolution a subsolution for every `ψ_k`.

use rayon::prelude::*;

use crate::conformal::{w_at, Derivatives, NodeW, RhsFunction, W_PD_TOL};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym2Field};
use crate::grid::ChartGrid;
use crate::scalar::Real;
use crate::tensor::MetricPackage;

/// Tolerance on subsolution margins.
pub const MARGIN_TOL: f64 = 1e-10;
pub const LAMBDA_MAX: f64 = 1e6;
pub const LAMBDA_UNIT: f64 = 1.0;
pub const LAMBDA_RESOLUTION: f64 = 1e-3;

/// `6t⁵ − 15t⁴ + 10t³` clamped to `[0, 1]`: `C²` at both ends.
pub fn quintic_step<T: Real>(t: T) -> T {
    let t = t.max(T::zero()).min(T::one());
    t * t * t * (T::lit(10.0) + t * (T::lit(-15.0) + T::lit(6.0) * t))
}

/// The cutoff `ψ_k`: 0 within distance `1/k` of the boundary, 1 beyond
/// `2/k`, a quintic ramp in between.
pub fn build_psi<T: Real>(grid: &ChartGrid<T>, k: u32) -> Result<ScalarField<T>> {
    let kf = T::from_u32(k).expect("k fits");
    let h = grid.spacing();
    if k == 0 || h * T::lit(4.0) * kf > T::one() + T::lit(1e-12) {
        return Err(Error::BandUnresolved { k, h: h.to_f64_lossy() });
    }
    Ok(ScalarField::new(grid.distances().iter().map(|&d| quintic_step(d * kf - T::one())).collect()))
}

/// `ψ_k` for a strictly increasing, possibly empty, list of `k`.
#[derive(Debug, Clone)]
pub struct PsiSchedule<T> {
    ks: Vec<u32>,
    psis: Vec<ScalarField<T>>,
}

impl<T: Real> PsiSchedule<T> {
    pub fn new(grid: &ChartGrid<T>, ks: &[u32]) -> Result<Self> {
        if ks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::KListNotIncreasing);
        }
        let psis = ks.iter().map(|&k| build_psi(grid, k)).collect::<Result<_>>()?;
        Ok(PsiSchedule { ks: ks.to_vec(), psis })
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn psis(&self) -> &[ScalarField<T>] {
        &self.psis
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &ScalarField<T>)> {
        self.ks.iter().copied().zip(&self.psis)
    }

    /// Nodes where some `ψ_k < 1`.
    pub fn band_nodes(&self, grid: &ChartGrid<T>) -> Vec<usize> {
        grid.interior_nodes().iter().copied().filter(|&p| self.psis.iter().any(|psi| psi.at(p) < T::one())).collect()
    }
}

/// `T = S + λ(1−ψ)g`.
pub fn build_t<T: Real>(base: &Sym2Field<T>, psi: &ScalarField<T>, lambda: T, m: &MetricPackage<T>) -> Sym2Field<T> {
    let g = m.metric();
    Sym2Field::from_fn(m.grid(), |p| base.mat(p).add(&g.mat(p).scaled(lambda * (T::one() - psi.at(p)))))
}

/// The worst node of a subsolution check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deficit<T> {
    pub node: usize,
    /// `log det w − f`, or `-inf` when `w` is not admissible.
    pub margin: T,
}

/// Smallest margin of `log det w[ul] − f(x, ul)` over `nodes`, where `w`
/// uses the cutoff value `psi(p)` and the shift `λ (1 − shift(p)) g`.
fn worst_margin<T: Real>(
    d: &Derivatives<T>,
    ul: &ScalarField<T>,
    psi: impl Fn(usize) -> T + Sync,
    shift_weight: impl Fn(usize) -> T + Sync,
    base: &Sym2Field<T>,
    lambda: T,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
    nodes: &[usize],
) -> Result<Deficit<T>> {
    let grid = m.grid();
    let delta = T::lit(W_PD_TOL);
    let per_node: Vec<Deficit<T>> = nodes
        .par_iter()
        .map(|&p| {
            let g = m.metric().mat(p);
            let t = base.mat(p).add(&g.scaled(lambda * shift_weight(p)));
            let node = NodeW::analyse(w_at(d, psi(p), &t, m, p), &g);
            let margin = if node.positive && node.min_eig > delta {
                node.log_det - rhs.value(grid, p, ul.at(p))?
            } else {
                T::neg_infinity()
            };
            Ok(Deficit { node: p, margin })
        })
        .collect::<Result<_>>()?;
    Ok(per_node.into_iter().fold(Deficit { node: nodes.first().copied().unwrap_or(0), margin: T::infinity() }, |a, b| {
        if b.margin < a.margin {
            b
        } else {
            a
        }
    }))
}

/// Outcome of [`select_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection<T> {
    pub lambda: T,
    /// Worst margin over all `k` and interior nodes at the returned `λ`.
    pub worst: Deficit<T>,
    /// Both concavity endpoints (`ψ ≡ 1` and `ψ = 0` on the band) hold.
    pub endpoints_hold: bool,
    /// Endpoints passed at some trial `λ` while a direct `ψ_k` check failed.
    pub concavity_warning: bool,
    pub trials: usize,
}

struct LambdaProbe<'a, T: Real> {
    d: Derivatives<T>,
    ul: &'a ScalarField<T>,
    rhs: &'a RhsFunction<T>,
    base: &'a Sym2Field<T>,
    schedule: &'a PsiSchedule<T>,
    m: &'a MetricPackage<T>,
    band: Vec<usize>,
    concavity_warning: bool,
    trials: usize,
}

impl<'a, T: Real> LambdaProbe<'a, T> {
    fn direct(&self, lambda: T) -> Result<Deficit<T>> {
        let interior = self.m.grid().interior_nodes();
        let mut worst = Deficit { node: interior[0], margin: T::infinity() };
        for psi in self.schedule.psis() {
            let d = worst_margin(&self.d, self.ul, |p| psi.at(p), |p| T::one() - psi.at(p), self.base, lambda, self.rhs, self.m, interior)?;
            if d.margin < worst.margin {
                worst = d;
            }
        }
        Ok(worst)
    }

    /// `ψ = 0` endpoint on the band: `log det(ul_ij + S + λ g) ≥ f`.
    fn zero_endpoint(&self, lambda: T) -> Result<Deficit<T>> {
        if self.band.is_empty() {
            return Ok(Deficit { node: 0, margin: T::infinity() });
        }
        worst_margin(&self.d, self.ul, |_| T::zero(), |_| T::one(), self.base, lambda, self.rhs, self.m, &self.band)
    }

    fn passes(&mut self, lambda: T) -> Result<bool> {
        self.trials += 1;
        let tol = -T::lit(MARGIN_TOL);
        let direct = self.direct(lambda)?.margin >= tol;
        let endpoint = self.zero_endpoint(lambda)?.margin >= tol;
        if endpoint && !direct {
            self.concavity_warning = true;
        }
        Ok(direct)
    }
}

/// Smallest `λ` on `{0} ∪ {2^m}` (refined by bisection to `1e-3`) for which
/// `ul` satisfies the modified subsolution inequality for every `ψ_k`.
pub fn select_lambda<T: Real>(
    ul: &ScalarField<T>,
    rhs: &RhsFunction<T>,
    base: &Sym2Field<T>,
    schedule: &PsiSchedule<T>,
    m: &MetricPackage<T>,
) -> Result<LambdaSelection<T>> {
    let grid = m.grid();
    let d = Derivatives::of(ul, m);
    let interior = grid.interior_nodes();
    // ψ ≡ 1 precondition
    let unit = worst_margin(&d, ul, |_| T::one(), |_| T::zero(), base, T::zero(), rhs, m, interior)?;
    if unit.margin == T::neg_infinity() {
        let g = m.metric().mat(unit.node);
        let node = NodeW::analyse(w_at(&d, T::one(), &base.mat(unit.node), m, unit.node), &g);
        return Err(Error::AdmissibilityViolation { node: unit.node, min_eig: node.min_eig.to_f64_lossy() });
    }
    if unit.margin < -T::lit(MARGIN_TOL) {
        return Err(Error::NotASubsolution { node: unit.node, margin: unit.margin.to_f64_lossy() });
    }
    let mut probe = LambdaProbe {
        d,
        ul,
        rhs,
        base,
        schedule,
        m,
        band: schedule.band_nodes(grid),
        concavity_warning: false,
        trials: 0,
    };
    let lambda = if probe.passes(T::zero())? {
        T::zero()
    } else {
        let mut lo = T::zero();
        let mut hi = T::lit(LAMBDA_UNIT);
        let max = T::lit(LAMBDA_MAX);
        loop {
            if probe.passes(hi)? {
                break;
            }
            if hi >= max {
                let worst = probe.direct(max)?;
                return Err(Error::LambdaNotFound {
                    lambda_max: LAMBDA_MAX,
                    node: worst.node,
                    deficit: worst.margin.to_f64_lossy(),
                });
            }
            lo = hi;
            hi = (hi * T::lit(2.0)).min(max);
        }
        while hi - lo > T::lit(LAMBDA_RESOLUTION) {
            let mid = (lo + hi) * T::lit(0.5);
            if probe.passes(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let worst = probe.direct(lambda)?;
    let endpoints_hold = probe.zero_endpoint(lambda)?.margin >= -T::lit(MARGIN_TOL);
    Ok(LambdaSelection { lambda, worst, endpoints_hold, concavity_warning: probe.concavity_warning, trials: probe.trials })
}
