use rayon::prelude::*;

use crate::conformal::{w_at, Derivatives, NodeW, RhsFunction, W_PD_TOL};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym2Field};
use crate::grid::MAX_DIM;
use crate::linalg::CsrMatrix;
use crate::scalar::Real;
use crate::tensor::MetricPackage;

/// Linearization of `log det w[u] − f(x, u)` on interior unknowns.
///
/// Row `p` applies `w^ij [v_ij + ψ(u_i v_j + u_j v_i) − ψ g^kl u_k v_l g_ij] − f_z v`
/// with the same stencils as the residual; boundary values are held fixed.
pub fn assemble_jacobian<T: Real>(
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<CsrMatrix<T>> {
    let d = Derivatives::of(u, m);
    assemble_from(&d, u, psi, t, rhs, m)
}

pub(crate) fn assemble_from<T: Real>(
    d: &Derivatives<T>,
    u: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
) -> Result<CsrMatrix<T>> {
    let grid = m.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let inv_2h = T::one() / (T::lit(2.0) * h);
    let inv_hh = T::one() / (h * h);
    let inv_4hh = T::lit(0.25) * inv_hh;
    let delta = T::lit(W_PD_TOL);
    let rows: Vec<Vec<(usize, T)>> = grid
        .interior_nodes()
        .par_iter()
        .map(|&p| {
            let g = m.metric().mat(p);
            let ginv = m.inverse().mat(p);
            let node = NodeW::analyse(w_at(d, psi.at(p), &t.mat(p), m, p), &g);
            if !(node.positive && node.min_eig > delta) {
                return Err(Error::AdmissibilityViolation { node: p, min_eig: node.min_eig.to_f64_lossy() });
            }
            let a = node.w_inv;
            let ps = psi.at(p);
            let du = d.grad.at(p);
            let tr = a.contract(&g);
            let a_du = a.mul_vec(du);
            let g_du = ginv.mul_vec(du);
            let mut c = [T::zero(); MAX_DIM];
            for k in 0..n {
                let mut ck = T::lit(2.0) * ps * a_du[k] - ps * tr * g_du[k];
                if !m.is_flat() {
                    for i in 0..n {
                        for j in 0..n {
                            ck = ck - a[(i, j)] * m.christoffel(p, k, i, j);
                        }
                    }
                }
                c[k] = ck;
            }
            let mut row: Vec<(usize, T)> = Vec::with_capacity(1 + 2 * n + 2 * n * (n - 1));
            let mut push = |q: usize, v: T| {
                if let Some(col) = grid.unknown_index(q) {
                    row.push((col, v));
                }
            };
            let mut centre = -rhs.dz(grid, p, u.at(p))?;
            for i in 0..n {
                let si = grid.stride(i);
                centre = centre - T::lit(2.0) * a[(i, i)] * inv_hh;
                push(p + si, a[(i, i)] * inv_hh + c[i] * inv_2h);
                push(p - si, a[(i, i)] * inv_hh - c[i] * inv_2h);
                for j in i + 1..n {
                    let sj = grid.stride(j);
                    let v = T::lit(2.0) * a[(i, j)] * inv_4hh;
                    push(p + si + sj, v);
                    push(p - si - sj, v);
                    push(p + si - sj, -v);
                    push(p - si + sj, -v);
                }
            }
            push(p, centre);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(CsrMatrix::from_rows(grid.interior_nodes().len(), rows))
}
