use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schouten_core::barriers::mean_value_operator_with_order;
use schouten_core::{
    default_chi, f_from_s, flat_supersolution, mean_value_operator, ordering_check, verify_chi, verify_subsolution,
    verify_supersolution, w_tensor, Error, Field, FnRhs, Grid, Matrix, Metric, PsiSchedule, Rhs, Tensor2,
};

fn r2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Cubic with small random coefficients in two variables.
fn random_cubic(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> f64 {
    let c: [f64; 10] = std::array::from_fn(|_| rng.gen_range(-0.3..0.3));
    move |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        c[0] + c[1] * a + c[2] * b + c[3] * a * a + c[4] * a * b + c[5] * b * b + c[6] * a * a * a + c[7] * a * a * b + c[8] * a * b * b + c[9] * b * b * b
    }
}

fn ln_det(w: &Matrix) -> Option<f64> {
    let d = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    (w[(0, 0)] > 0.0 && d > 0.0).then(|| d.ln())
}

#[test]
fn mean_value_identity_with_general_tensor_and_rhs() {
    let g = Grid::cube(2, -0.5, 0.5, 5).unwrap();
    let m = Metric::conformally_flat(&g, |x: &[f64]| 1.0 + 0.2 * x[0] * x[0] + 0.1 * x[1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut done = 0;
    while done < 20 {
        let shift = rng.gen_range(0.8..1.6);
        let t = Tensor2::from_fn(&g, |p| {
            let x = g.point(p);
            Matrix::from_fn(2, |i, j| if i == j { shift + 0.3 * x[i] * x[i] } else { 0.1 * x[0] })
        });
        let k: f64 = rng.gen_range(0.0..1.0);
        let psi = Field::from_fn(&g, |x| k * (1.0 - r2(x)));
        let (ul_f, u_f) = (random_cubic(&mut rng), random_cubic(&mut rng));
        let ul = Field::from_fn(&g, &ul_f);
        let u = Field::from_fn(&g, &u_f);
        let f = |x: &[f64], z: f64| (x[0] + z).sin() - 2.0 * z;
        let rhs = Rhs::general(FnRhs { f, f_z: |x: &[f64], z: f64| (x[0] + z).cos() - 2.0 });
        let (wl, wu) = (w_tensor(&ul, &psi, &t, &m), w_tensor(&u, &psi, &t, &m));
        let oracle: Option<Vec<f64>> = g
            .interior_nodes()
            .iter()
            .map(|&p| {
                let x = g.point(p);
                Some(ln_det(&wl.w.mat(p))? - ln_det(&wu.w.mat(p))? - f(&x, ul.at(p)) + f(&x, u.at(p)))
            })
            .collect();
        let Some(oracle) = oracle else { continue };
        done += 1;
        let lhs = mean_value_operator(&ul, &u, &psi, &t, &rhs, &m).unwrap().apply(&ul, &u, &m);
        for (a, b) in lhs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // a finer rule only tightens the match
        let hi = mean_value_operator_with_order(&ul, &u, &psi, &t, &rhs, &m, 32).unwrap().apply(&ul, &u, &m);
        for ((a, b), o) in lhs.iter().zip(&hi).zip(&oracle) {
            assert!((b - o).abs() <= (a - o).abs() + 1e-12, "{a} {b} {o}");
        }
    }
}

#[test]
fn constant_diagonal_case_gives_log_two() {
    let g = Grid::cube(2, -0.5, 0.5, 5).unwrap();
    let m = Metric::flat(&g).unwrap();
    let ul = Field::from_fn(&g, |x| 0.5 * r2(x));
    let zero = Field::constant(&g, 0.0);
    let op = mean_value_operator(&ul, &zero, &zero, &Tensor2::identity(&g), &Rhs::constant(0.0), &m).unwrap();
    for &p in g.interior_nodes() {
        assert!(op.a.mat(p).sub(&Matrix::identity(2).scaled(std::f64::consts::LN_2)).max_abs() < 1e-9);
        assert_eq!(op.d_coeff.at(p), 0.0);
    }
}

#[test]
fn mean_value_rejects_non_admissible_pairs() {
    let g = Grid::cube(2, -0.5, 0.5, 5).unwrap();
    let m = Metric::flat(&g).unwrap();
    let ul = Field::from_fn(&g, |x| -r2(x));
    let zero = Field::constant(&g, 0.0);
    let r = mean_value_operator(&ul, &zero, &zero, &Tensor2::identity(&g), &Rhs::constant(0.0), &m);
    assert!(matches!(r, Err(Error::AdmissibilityViolation { .. })));
}

#[test]
fn lemma_case_end_to_end() {
    let g = Grid::cube(3, -0.5, 0.5, 9).unwrap();
    let m = Metric::flat(&g).unwrap();
    let ul = Field::from_fn(&g, |x| 0.5 * r2(x));
    let rhs = f_from_s(&Field::constant(&g, 0.01), &m).unwrap();
    let schedule = PsiSchedule::new(&g, &[2]).unwrap();
    let pair = flat_supersolution(&ul, &rhs, &schedule, 0.0, &m).unwrap();
    assert!(pair.report.pass && pair.report.ordered);
    let zero = Tensor2::zeros(3, g.len());
    let again = verify_supersolution(&pair.ubar, &ul, &schedule, &zero, 0.0, &rhs, &m).unwrap();
    assert_eq!(again, pair.report);
    let sub = verify_subsolution(&ul, &Field::constant(&g, 1.0), &zero, &rhs, &m).unwrap();
    assert!(sub.pass);
    assert!(ordering_check(&ul, &ul, Some(&pair.ubar)).pass);
    verify_chi(&default_chi(&g), &m).unwrap();
}

#[test]
fn subsolution_margins_follow_the_target() {
    let g = Grid::cube(3, -0.5, 0.5, 9).unwrap();
    let m = Metric::flat(&g).unwrap();
    let ul = Field::from_fn(&g, |x| 0.5 * r2(x));
    let zero = Tensor2::zeros(3, g.len());
    let one = Field::constant(&g, 1.0);
    let c = g.flat_index(&[4, 4, 4]);
    for s in [0.5, 1.0, 2.0] {
        let rhs = f_from_s(&Field::constant(&g, s), &m).unwrap();
        let r = verify_subsolution(&ul, &one, &zero, &rhs, &m).unwrap();
        let k = g.interior_nodes().iter().position(|&p| p == c).unwrap();
        // at the center ∇ul = 0, so w = I and the margin is −log s
        assert!((r.margins[k] + s.ln()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn comparison_coefficients_are_positive_definite(seed in any::<u64>(), k in 0.0f64..1.0) {
        let g = Grid::cube(2, -0.5, 0.5, 5).unwrap();
        let m = Metric::flat(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ul = Field::from_fn(&g, random_cubic(&mut rng));
        let u = Field::from_fn(&g, random_cubic(&mut rng));
        let psi = Field::constant(&g, k);
        let t = Tensor2::constant(&g, &Matrix::identity(2).scaled(2.0));
        let op = mean_value_operator(&ul, &u, &psi, &t, &Rhs::constant(0.0), &m);
        prop_assume!(op.is_ok());
        let op = op.unwrap();
        for &p in g.interior_nodes() {
            let ev = op.a.mat(p).sym_eigenvalues();
            prop_assert!(ev[0] > 0.0);
        }
    }

    #[test]
    fn ordering_is_reflexive_and_shift_sensitive(c in -1.0f64..1.0, eps in 1e-6f64..1.0) {
        let g = Grid::cube(2, -0.5, 0.5, 5).unwrap();
        let u = Field::from_fn(&g, |x| c * r2(x));
        prop_assert!(ordering_check(&u, &u, Some(&u)).pass);
        let lower = u.map(|v| v + eps);
        let r = ordering_check(&lower, &u, None);
        prop_assert!(!r.pass);
        prop_assert_eq!(r.violations, g.len());
    }
}
