use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schouten_core::{
    assemble_jacobian, build_psi, build_t, f_from_s, homotopy_solve, newton_solve, residual, s_from_u, solve_regularized,
    w_tensor, DirichletProblem, Error, Field, FnRhs, Grid, LinearMethod, Metric, Rhs, SolverConfig, Tensor2,
};

fn r2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn sphere_factor(x: &[f64]) -> f64 {
    ((1.0 + r2(x)) / 2.0).ln()
}

#[test]
fn jacobian_matches_difference_quotients() {
    let g = Grid::cube(3, -0.5, 0.5, 9).unwrap();
    let m = Metric::conformally_flat(&g, |x: &[f64]| 4.0 / (1.0 + r2(x)).powi(2)).unwrap();
    let u = Field::from_fn(&g, |x| 0.3 * sphere_factor(x) + 0.2 * r2(x));
    let psi = build_psi(&g, 2).unwrap();
    let t = build_t(m.schouten().unwrap(), &psi, 0.5, &m);
    let rhs = Rhs::general(FnRhs { f: |x: &[f64], z: f64| 0.1 * x[0] - z * z, f_z: |_: &[f64], z: f64| -2.0 * z });
    let jac = assemble_jacobian(&u, &psi, &t, &rhs, &m).unwrap();
    let f0 = residual(&u, &psi, &t, &rhs, &m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let v: Vec<f64> = g.interior_nodes().iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jv = jac.mul_vec(&v);
        let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&h| {
                let mut up = u.clone();
                for (k, &p) in g.interior_nodes().iter().enumerate() {
                    up.values_mut()[p] += h * v[k];
                }
                let f1 = residual(&up, &psi, &t, &rhs, &m).unwrap();
                f1.iter().zip(&f0).zip(&jv).map(|((a, b), j)| ((a - b) / h - j).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        // first-order truncation: roughly tenfold per step
        assert!(errs[0] / errs[1] > 5.0, "{errs:?}");
    }
}

fn mms_error(nodes: usize) -> f64 {
    let g = Grid::cube(3, -0.5, 0.5, nodes).unwrap();
    let m = Metric::flat(&g).unwrap();
    let exact = Field::from_fn(&g, sphere_factor);
    let rhs = f_from_s(&Field::constant(&g, 0.125), &m).unwrap();
    let p = DirichletProblem::with_schouten(m, rhs, exact.clone()).unwrap();
    let r = solve_regularized(&p, None, 0.0, &SolverConfig::default()).unwrap();
    assert!(r.final_residual() <= 1e-10);
    r.u.max_diff_on(&exact, 0..g.len())
}

#[test]
fn sphere_manufactured_solution_converges_at_second_order() {
    let e: Vec<f64> = [9, 17].iter().map(|&n| mms_error(n)).collect();
    let order = (e[0] / e[1]).log2();
    assert!((1.7..=2.3).contains(&order), "{e:?}");
}

#[test]
fn linear_methods_agree() {
    let g = Grid::cube(2, -1.0, 1.0, 17).unwrap();
    let m = Metric::flat(&g).unwrap();
    let exact = Field::from_fn(&g, sphere_factor);
    let zero = Tensor2::zeros(2, g.len());
    let one = Field::constant(&g, 1.0);
    let w = w_tensor(&exact, &one, &zero, &m);
    let s = Field::new((0..g.len()).map(|p| (w.log_det.at(p) + 4.0 * exact.at(p)).exp()).collect());
    let rhs = f_from_s(&s, &m).unwrap();
    let start = Field::from_fn(&g, |x| sphere_factor(x) + 0.05 * (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
    let run = |method| newton_solve(&start, &one, &zero, &rhs, &m, &SolverConfig { linear_method: method, ..SolverConfig::default() }).unwrap();
    let (lu, gm) = (run(LinearMethod::BandedLu), run(LinearMethod::Gmres));
    assert!(lu.u.max_diff_on(&exact, 0..g.len()) < 1e-9);
    assert!(gm.u.max_diff_on(&exact, 0..g.len()) < 1e-9);
}

#[test]
fn inadmissible_start_is_rejected() {
    let g = Grid::cube(2, -1.0, 1.0, 9).unwrap();
    let m = Metric::flat(&g).unwrap();
    let u = Field::from_fn(&g, |x| -r2(x));
    let zero = Tensor2::zeros(2, g.len());
    let r = newton_solve(&u, &Field::constant(&g, 1.0), &zero, &Rhs::constant(0.0), &m, &SolverConfig::default());
    assert!(matches!(r, Err(Error::AdmissibilityViolation { .. })));
}

#[test]
fn homotopy_reports_every_stage() {
    let g = Grid::cube(2, -1.0, 1.0, 33).unwrap();
    let m = Metric::flat(&g).unwrap();
    let ul = Field::from_fn(&g, |x| 0.25 * r2(x));
    let rhs = Rhs::general(FnRhs { f: |_: &[f64], z: f64| -1.0 - z, f_z: |_: &[f64], _: f64| -1.0 });
    let p = DirichletProblem::new(m, Tensor2::identity(&g), rhs, ul.clone());
    let h = homotopy_solve(&p, &[1, 2, 4], 0.0, &SolverConfig::default()).unwrap();
    assert_eq!(h.reports.iter().map(|r| r.k).collect::<Vec<_>>(), vec![Some(1), Some(2), Some(4)]);
    assert_eq!(h.successive_differences.len(), 2);
    for r in &h.reports {
        assert!(r.final_residual() <= 1e-10);
        assert!(r.margin_history.iter().all(|&v| v > 1e-8));
        assert!(r.ordering.as_ref().unwrap().pass);
        for p in 0..g.len() {
            if !g.is_interior(p) {
                assert_eq!(r.u.at(p), ul.at(p));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discrete_target_makes_u_an_exact_root(a in 0.2f64..1.0, b in -0.3f64..0.3, c in -0.3f64..0.3) {
        let g = Grid::cube(3, -0.5, 0.5, 7).unwrap();
        let m = Metric::flat(&g).unwrap();
        let u = Field::from_fn(&g, |x| a * r2(x) + b * x[0] + c * x[1] * x[2]);
        let one = Field::constant(&g, 1.0);
        let s = s_from_u(&u, &m);
        prop_assume!(s.is_ok());
        let rhs = f_from_s(&s.unwrap(), &m).unwrap();
        let res = residual(&u, &one, m.schouten().unwrap(), &rhs, &m);
        prop_assume!(res.is_ok());
        for v in res.unwrap() {
            prop_assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn residual_ignores_constant_shifts_in_general_form(c in -2.0f64..2.0) {
        // w depends on u only through derivatives
        let g = Grid::cube(2, -0.5, 0.5, 9).unwrap();
        let m = Metric::flat(&g).unwrap();
        let u = Field::from_fn(&g, |x| 0.5 * r2(x) + 0.1 * x[0]);
        let one = Field::constant(&g, 0.7);
        let zero = Tensor2::zeros(2, g.len());
        let a = w_tensor(&u, &one, &zero, &m);
        let b = w_tensor(&u.map(|v| v + c), &one, &zero, &m);
        for p in 0..g.len() {
            prop_assert!(a.w.mat(p).sub(&b.w.mat(p)).max_abs() < 1e-9);
        }
    }
}
