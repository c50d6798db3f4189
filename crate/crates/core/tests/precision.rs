use schouten_core::{Field32, Grid32, Metric32};

#[test]
fn single_precision_sphere_curvature() {
    let g = Grid32::cube(3, -0.5, 0.5, 9).unwrap();
    let m = Metric32::conformally_flat(&g, |x: &[f32]| 4.0 / (1.0 + x.iter().map(|v| v * v).sum::<f32>()).powi(2)).unwrap();
    let s = m.schouten().unwrap();
    let err = g.interior_nodes().iter().map(|&p| s.mat(p).sub(&m.metric().mat(p).scaled(0.5)).max_abs()).fold(0.0f32, f32::max);
    assert!(err < 6e-2, "{err}");
    let u = Field32::from_fn(&g, |x| x[0] * x[1]);
    assert!(u.values().iter().all(|v| v.is_finite()));
}
