//! Background metrics and their curvature, computed by finite differences.

use rayon::prelude::*;

use super::diff::{d1, d1_at, gradient, partial_hessian};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym2Field};
use crate::grid::ChartGrid;
use crate::linalg::Mat;
use crate::scalar::Real;

/// Leading-minor threshold for metric positive definiteness.
pub const METRIC_PD_TOL: f64 = 1e-10;

/// A background metric with Christoffel symbols, Riemann, Ricci, scalar and
/// Schouten curvature on a chart grid.
///
/// Christoffel symbols `Γ^k_ij` are stored per node at `[k][i][j]`, the
/// fully lowered Riemann tensor `R_bijk` at `[b][i][j][k]`. The sign
/// convention is the one for which `u_ijk = u_kij + u_a g^ab R_bijk`, so a
/// round sphere has positive Ricci curvature.
#[derive(Debug, Clone)]
pub struct MetricPackage<T> {
    grid: ChartGrid<T>,
    g: Sym2Field<T>,
    g_inv: Sym2Field<T>,
    log_det_g: ScalarField<T>,
    christoffel: Vec<T>,
    riemann: Vec<T>,
    ricci: Sym2Field<T>,
    scalar: ScalarField<T>,
    schouten: Option<Sym2Field<T>>,
    flat: bool,
}

impl<T: Real> MetricPackage<T> {
    /// Computes the curvature package of the metric samples `g`.
    pub fn new(grid: &ChartGrid<T>, g: Sym2Field<T>) -> Result<Self> {
        let n = grid.dim();
        let len = grid.len();
        if g.len() != len || g.dim() != n {
            return Err(Error::SizeMismatch { what: "metric", got: g.len(), expected: len });
        }
        g.check_finite("metric")?;
        let tol = T::lit(METRIC_PD_TOL);
        let mut g_inv_mats = Vec::with_capacity(len);
        let mut log_det = Vec::with_capacity(len);
        for p in 0..len {
            let m = g.mat(p);
            let minors = m.leading_minors();
            if minors[..n].iter().any(|&d| !(d > tol)) {
                return Err(Error::MetricNotPositiveDefinite { node: p });
            }
            let chol = m.cholesky().ok_or(Error::MetricNotPositiveDefinite { node: p })?;
            g_inv_mats.push(chol.inverse());
            log_det.push(chol.log_det());
        }
        let g_inv = Sym2Field::from_mats(n, &g_inv_mats);
        let identity = Mat::identity(n);
        let flat = (0..len).all(|p| g.mat(p) == identity);

        let n2 = n * n;
        let n3 = n2 * n;
        // dg[c][sym(i,j)]: derivative of g_ij along axis c
        let comps: Vec<Vec<T>> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| g.component(i, j).into_values())
            .collect();
        let sym = |i: usize, j: usize| crate::field::sym_index(n, i, j);
        let dg: Vec<Vec<Vec<T>>> = (0..n).map(|c| comps.iter().map(|f| d1(grid, f, c)).collect()).collect();

        let half = T::lit(0.5);
        let christoffel: Vec<T> = (0..len)
            .into_par_iter()
            .flat_map_iter(|p| {
                let ginv = g_inv.mat(p);
                let mut out = vec![T::zero(); n3];
                for k in 0..n {
                    for i in 0..n {
                        for j in i..n {
                            let mut s = T::zero();
                            for l in 0..n {
                                let t = dg[i][sym(j, l)][p] + dg[j][sym(i, l)][p] - dg[l][sym(i, j)][p];
                                s = s + ginv[(k, l)] * t;
                            }
                            out[k * n2 + i * n + j] = half * s;
                            out[k * n2 + j * n + i] = half * s;
                        }
                    }
                }
                out
            })
            .collect();

        // second derivatives of g, so that ∂Γ uses central stencils at every interior node
        let ddg: Vec<Sym2Field<T>> = comps.iter().map(|f| partial_hessian(grid, &ScalarField::new(f.clone()))).collect();

        let n4 = n3 * n;
        let riemann: Vec<T> = (0..len)
            .into_par_iter()
            .flat_map_iter(|p| {
                let gam = &christoffel[p * n3..(p + 1) * n3];
                let gm = g.mat(p);
                let ginv = g_inv.mat(p);
                let idx = |a: usize, b: usize, c: usize| a * n2 + b * n + c;
                let dg_at = |c: usize, i: usize, j: usize| dg[c][sym(i, j)][p];
                let ddg_at = |c: usize, d: usize, i: usize, j: usize| ddg[sym(i, j)].entry(p, c, d);
                // ∂_c g^{al} = −g^{ap} ∂_c g_pq g^{ql}
                let mut dginv = vec![T::zero(); n3];
                for c in 0..n {
                    for a in 0..n {
                        for l in 0..n {
                            let mut v = T::zero();
                            for q in 0..n {
                                for r in 0..n {
                                    v = v - ginv[(a, q)] * dg_at(c, q, r) * ginv[(r, l)];
                                }
                            }
                            dginv[idx(c, a, l)] = v;
                        }
                    }
                }
                // lowered symbols Γ_{l,db} and their derivatives
                let low_gam = |l: usize, d: usize, b: usize| half * (dg_at(d, b, l) + dg_at(b, d, l) - dg_at(l, d, b));
                let dlow_gam =
                    |c: usize, l: usize, d: usize, b: usize| half * (ddg_at(c, d, b, l) + ddg_at(c, b, d, l) - ddg_at(c, l, d, b));
                let mut dgam = vec![T::zero(); n4];
                for c in 0..n {
                    for a in 0..n {
                        for d in 0..n {
                            for b in 0..n {
                                let mut v = T::zero();
                                for l in 0..n {
                                    v = v + dginv[idx(c, a, l)] * low_gam(l, d, b) + ginv[(a, l)] * dlow_gam(c, l, d, b);
                                }
                                dgam[c * n3 + idx(a, d, b)] = v;
                            }
                        }
                    }
                }
                // R^a_{bcd}
                let mut up = vec![T::zero(); n4];
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                let mut v = dgam[c * n3 + idx(a, d, b)] - dgam[d * n3 + idx(a, c, b)];
                                for e in 0..n {
                                    v = v + gam[idx(a, c, e)] * gam[idx(e, d, b)] - gam[idx(a, d, e)] * gam[idx(e, c, b)];
                                }
                                up[a * n3 + b * n2 + c * n + d] = v;
                            }
                        }
                    }
                }
                let mut low = vec![T::zero(); n4];
                for a in 0..n {
                    for rest in 0..n3 {
                        low[a * n3 + rest] = (0..n).map(|e| gm[(a, e)] * up[e * n3 + rest]).sum();
                    }
                }
                low
            })
            .collect();

        let ricci_mats: Vec<Mat<T>> = (0..len)
            .into_par_iter()
            .map(|p| {
                let ginv = g_inv.mat(p);
                let r = &riemann[p * n4..(p + 1) * n4];
                // R_bd = R^a_{bad} = g^{ae} R_{ebad}
                Mat::from_fn(n, |b, d| {
                    let mut s = T::zero();
                    for a in 0..n {
                        for e in 0..n {
                            s = s + ginv[(a, e)] * r[e * n3 + b * n2 + a * n + d];
                        }
                    }
                    s
                })
            })
            .collect();
        let ricci = Sym2Field::from_mats(n, &ricci_mats);
        let scalar = ScalarField::new((0..len).map(|p| g_inv.mat(p).contract(&ricci.mat(p))).collect());
        let schouten = (n >= 3).then(|| {
            let nf = T::from_usize_lossy(n);
            let one = T::one();
            let two = T::lit(2.0);
            Sym2Field::from_fn(grid, |p| {
                let gm = g.mat(p);
                ricci.mat(p).sub(&gm.scaled(scalar.at(p) / (two * (nf - one)))).scaled(one / (nf - two))
            })
        });
        Ok(MetricPackage {
            grid: grid.clone(),
            g,
            g_inv,
            log_det_g: ScalarField::new(log_det),
            christoffel,
            riemann,
            ricci,
            scalar,
            schouten,
            flat,
        })
    }

    /// The Euclidean metric `δ_ij`.
    pub fn flat(grid: &ChartGrid<T>) -> Result<Self> {
        Self::new(grid, Sym2Field::identity(grid))
    }

    /// Samples `g(x)` at every node and builds the package.
    pub fn from_fn(grid: &ChartGrid<T>, g: impl Fn(&[T]) -> Mat<T> + Sync) -> Result<Self> {
        let field = Sym2Field::from_fn(grid, |p| g(&grid.point(p)));
        Self::new(grid, field)
    }

    /// The conformally flat metric `φ(x) δ_ij`.
    pub fn conformally_flat(grid: &ChartGrid<T>, phi: impl Fn(&[T]) -> T + Sync) -> Result<Self> {
        let n = grid.dim();
        Self::from_fn(grid, |x| Mat::identity(n).scaled(phi(x)))
    }

    pub fn grid(&self) -> &ChartGrid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn metric(&self) -> &Sym2Field<T> {
        &self.g
    }

    pub fn inverse(&self) -> &Sym2Field<T> {
        &self.g_inv
    }

    pub fn log_det(&self) -> &ScalarField<T> {
        &self.log_det_g
    }

    /// True when `g` is exactly `δ` at every node.
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    #[inline]
    pub fn christoffel(&self, p: usize, k: usize, i: usize, j: usize) -> T {
        let n = self.dim();
        self.christoffel[p * n * n * n + k * n * n + i * n + j]
    }

    #[inline]
    pub fn christoffel_at(&self, p: usize) -> &[T] {
        let n3 = self.dim().pow(3);
        &self.christoffel[p * n3..(p + 1) * n3]
    }

    /// Lowered Riemann tensor `R_bijk`.
    #[inline]
    pub fn riemann(&self, p: usize, b: usize, i: usize, j: usize, k: usize) -> T {
        let n = self.dim();
        self.riemann[((p * n + b) * n + i) * n * n + j * n + k]
    }

    pub fn ricci(&self) -> &Sym2Field<T> {
        &self.ricci
    }

    pub fn scalar_curvature(&self) -> &ScalarField<T> {
        &self.scalar
    }

    /// `None` in dimension 2.
    pub fn schouten(&self) -> Option<&Sym2Field<T>> {
        self.schouten.as_ref()
    }
}

/// Covariant Hessian `u_ij = u_,ij − Γ^k_ij u_k` at every node.
pub fn covariant_hessian<T: Real>(u: &ScalarField<T>, m: &MetricPackage<T>) -> Sym2Field<T> {
    let grid = m.grid();
    let n = grid.dim();
    let du = gradient(grid, u);
    let hess = partial_hessian(grid, u);
    if m.is_flat() {
        return hess;
    }
    Sym2Field::from_fn(grid, |p| {
        let mut h = hess.mat(p);
        let g = du.at(p);
        for i in 0..n {
            for j in 0..n {
                let c: T = (0..n).map(|k| m.christoffel(p, k, i, j) * g[k]).sum();
                h[(i, j)] = h[(i, j)] - c;
            }
        }
        h
    })
}

/// A rank-3 array per node, stored `[i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank3Field<T> {
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> Rank3Field<T> {
    pub fn at(&self, p: usize, i: usize, j: usize, k: usize) -> T {
        let n = self.dim;
        self.values[((p * n + i) * n + j) * n + k]
    }

    /// Largest entry magnitude over the listed nodes.
    pub fn max_abs_on(&self, nodes: &[usize]) -> T {
        let n3 = self.dim.pow(3);
        nodes
            .iter()
            .flat_map(|&p| self.values[p * n3..(p + 1) * n3].iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Discrete value of `u_ijk − u_kij − u_a g^ab R_bijk`, a self-test of the
/// curvature kernel that vanishes in the continuum.
pub fn commutator_defect<T: Real>(u: &ScalarField<T>, m: &MetricPackage<T>) -> Rank3Field<T> {
    let grid = m.grid();
    let n = grid.dim();
    let hess = covariant_hessian(u, m);
    let du = gradient(grid, u);
    let comps: Vec<Vec<T>> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .map(|(i, j)| hess.component(i, j).into_values())
        .collect();
    let sym = |i: usize, j: usize| crate::field::sym_index(n, i, j);
    let values: Vec<T> = (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|p| {
            let h = hess.mat(p);
            // ∇_k H_ij
            let nabla = |i: usize, j: usize, k: usize| -> T {
                let mut v = d1_at(grid, &comps[sym(i, j)], p, k);
                for l in 0..n {
                    v = v - m.christoffel(p, l, k, i) * h[(l, j)] - m.christoffel(p, l, k, j) * h[(i, l)];
                }
                v
            };
            let ginv = m.inverse().mat(p);
            let g = du.at(p);
            let mut out = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let mut curv = T::zero();
                        for a in 0..n {
                            for b in 0..n {
                                curv = curv + g[a] * ginv[(a, b)] * m.riemann(p, b, i, j, k);
                            }
                        }
                        out.push(nabla(i, j, k) - nabla(k, i, j) - curv);
                    }
                }
            }
            out
        })
        .collect();
    Rank3Field { dim: n, values }
}
