//! Gauss–Legendre rules on `[0, 1]`.

use crate::scalar::Real;

/// Nodes and weights of the `order`-point Gauss–Legendre rule mapped to
/// `[0, 1]`. Roots are found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_unit<T: Real>(order: usize) -> Vec<(T, T)> {
    assert!(order > 0);
    let n = order;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((T::lit(0.5 * (1.0 - x)), T::lit(0.5 * w)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre_unit::<f64>(16);
        let wsum: f64 = rule.iter().map(|r| r.1).sum();
        assert!((wsum - 1.0).abs() < 1e-14);
        // degree 31 is the exactness limit
        let m: f64 = rule.iter().map(|&(t, w)| w * t.powi(31)).sum();
        assert!((m - 1.0 / 32.0).abs() < 1e-14);
    }

    #[test]
    fn log_two() {
        let rule = gauss_legendre_unit::<f64>(16);
        let v: f64 = rule.iter().map(|&(t, w)| w / (1.0 + t)).sum();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_point_is_midpoint() {
        let rule = gauss_legendre_unit::<f64>(1);
        assert!((rule[0].0 - 0.5).abs() < 1e-15 && (rule[0].1 - 1.0).abs() < 1e-15);
    }
}
