//! Damped Newton iteration for the regularized equation, the homotopy over
//! the cutoff schedule, and the estimate monitors.

mod jacobian;
mod monitors;

use std::time::Instant;

pub use jacobian::assemble_jacobian;
pub use monitors::{gradient_monitor, hessian_monitor, GradientMonitor, HessianMonitor};

use crate::barriers::{default_chi, ordering_check, OrderingReport};
use crate::conformal::{residual_with_tol, w_field_from, Derivatives, RhsFunction};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Sym2Field};
use crate::linalg::{solve, LinearMethod};
use crate::regularization::{build_psi, build_t, PsiSchedule};
use crate::scalar::Real;
use crate::tensor::MetricPackage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub max_backtracks: usize,
    pub delta_pd: f64,
    pub linear_tol: f64,
    pub mu_monitor: f64,
    pub lambda_monitor: f64,
    pub grad_floor: f64,
    pub linear_method: LinearMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            max_iters: 50,
            damping: 0.5,
            max_backtracks: 30,
            delta_pd: 1e-8,
            linear_tol: 1e-12,
            mu_monitor: 10.0,
            lambda_monitor: 1.0,
            grad_floor: 1e-14,
            linear_method: LinearMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("delta_pd", self.delta_pd),
            ("linear_tol", self.linear_tol),
            ("grad_floor", self.grad_floor),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig { field });
            }
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig { field: "damping" });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig { field: "max_iters" });
        }
        if !self.mu_monitor.is_finite() || !self.lambda_monitor.is_finite() {
            return Err(Error::InvalidConfig { field: "monitor" });
        }
        Ok(())
    }
}

/// Monitor values at a converged solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors<T> {
    pub gradient: GradientMonitor<T>,
    pub hessian: HessianMonitor<T>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub u: ScalarField<T>,
    pub iterations: usize,
    /// Residual max-norm of the initial guess and of every accepted iterate.
    pub residual_history: Vec<f64>,
    /// Smallest eigenvalue of `w` over interior nodes, per entry of
    /// `residual_history`.
    pub margin_history: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub linear_residuals: Vec<f64>,
    /// Smallest eigenvalue of `w` at every node of the final iterate.
    pub min_eig: ScalarField<T>,
    /// Final residual at every node, zero on the boundary.
    pub residual: ScalarField<T>,
    pub monitors: Option<Monitors<T>>,
    pub ordering: Option<OrderingReport<T>>,
    pub k: Option<u32>,
    pub lambda: f64,
    pub elapsed_secs: f64,
}

impl<T: Real> SolveReport<T> {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().expect("history starts with the initial residual")
    }
}

fn max_norm<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, v| a.max(v.abs()))
}

/// Damped Newton from `u0`; boundary values of `u0` are the Dirichlet data.
///
/// A step is accepted when every interior node keeps `w` above `delta_pd`
/// and the residual max-norm decreases.
pub fn newton_solve<T: Real>(
    u0: &ScalarField<T>,
    psi: &ScalarField<T>,
    t: &Sym2Field<T>,
    rhs: &RhsFunction<T>,
    m: &MetricPackage<T>,
    config: &SolverConfig,
) -> Result<SolveReport<T>> {
    config.validate()?;
    let start = Instant::now();
    let grid = m.grid();
    u0.check_len(grid, "initial guess")?;
    u0.check_finite("initial guess")?;
    let delta = T::lit(config.delta_pd);
    let interior = grid.interior_nodes();
    let mut u = u0.clone();
    let (mut r, mut margin) = residual_with_tol(&u, psi, t, rhs, m, delta)?;
    let mut rnorm = max_norm(&r);
    let mut report = SolveReport {
        u: u.clone(),
        iterations: 0,
        residual_history: vec![rnorm.to_f64_lossy()],
        margin_history: vec![margin.to_f64_lossy()],
        step_lengths: Vec::new(),
        linear_iterations: Vec::new(),
        linear_residuals: Vec::new(),
        min_eig: ScalarField::constant(grid, T::zero()),
        residual: ScalarField::constant(grid, T::zero()),
        monitors: None,
        ordering: None,
        k: None,
        lambda: 0.0,
        elapsed_secs: 0.0,
    };
    let tol = T::lit(config.newton_tol);
    let mut iteration = 0;
    while rnorm > tol {
        if iteration == config.max_iters {
            return Err(Error::MaxItersExceeded { iters: iteration, residual: rnorm.to_f64_lossy() });
        }
        iteration += 1;
        let d = Derivatives::of(&u, m);
        let jac = jacobian::assemble_from(&d, &u, psi, t, rhs, m)?;
        let b: Vec<T> = r.iter().map(|&v| -v).collect();
        let (step, info) = solve(&jac, &b, T::lit(config.linear_tol), config.linear_method)?;
        let mut alpha = T::one();
        let mut accepted = None;
        let mut lost_at = None;
        for _ in 0..=config.max_backtracks {
            let mut trial = u.clone();
            for (k, &p) in interior.iter().enumerate() {
                trial.values_mut()[p] = u.at(p) + alpha * step[k];
            }
            match residual_with_tol(&trial, psi, t, rhs, m, delta) {
                Ok((rt, mt)) => {
                    let nt = max_norm(&rt);
                    if nt < rnorm {
                        accepted = Some((trial, rt, mt, nt));
                        break;
                    }
                }
                Err(Error::AdmissibilityViolation { node, .. }) => lost_at = Some(node),
                Err(e) => return Err(e),
            }
            alpha = alpha * T::lit(config.damping);
        }
        let Some((trial, rt, mt, nt)) = accepted else {
            return Err(match lost_at {
                Some(node) => Error::AdmissibilityLost { iteration, node },
                None => Error::Stagnated { iteration, residual: rnorm.to_f64_lossy() },
            });
        };
        u = trial;
        r = rt;
        margin = mt;
        rnorm = nt;
        report.residual_history.push(rnorm.to_f64_lossy());
        report.margin_history.push(margin.to_f64_lossy());
        report.step_lengths.push(alpha.to_f64_lossy());
        report.linear_iterations.push(info.iterations);
        report.linear_residuals.push(info.relative_residual);
    }
    let w = w_field_from(&Derivatives::of(&u, m), psi, t, m);
    let mut res = vec![T::zero(); grid.len()];
    for (k, &p) in interior.iter().enumerate() {
        res[p] = r[k];
    }
    report.iterations = iteration;
    report.min_eig = w.min_eig;
    report.residual = ScalarField::new(res);
    report.u = u;
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Data of a Dirichlet problem with barriers.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    pub metric: MetricPackage<T>,
    /// `S`, or a replacement tensor where `S` is unavailable.
    pub base: Sym2Field<T>,
    pub rhs: RhsFunction<T>,
    /// Subsolution; its boundary values are the Dirichlet data.
    pub ul: ScalarField<T>,
    pub ubar: Option<ScalarField<T>>,
    pub chi: ScalarField<T>,
    /// Starting point in place of `ul`; boundary values are replaced by `ul`.
    pub initial_guess: Option<ScalarField<T>>,
}

impl<T: Real> Problem<T> {
    pub fn new(metric: MetricPackage<T>, base: Sym2Field<T>, rhs: RhsFunction<T>, ul: ScalarField<T>) -> Self {
        let chi = default_chi(metric.grid());
        Problem { metric, base, rhs, ul, ubar: None, chi, initial_guess: None }
    }

    /// Uses the Schouten tensor of the metric as `S`.
    pub fn with_schouten(metric: MetricPackage<T>, rhs: RhsFunction<T>, ul: ScalarField<T>) -> Result<Self> {
        let base = metric.schouten().ok_or(Error::MissingSchouten)?.clone();
        Ok(Self::new(metric, base, rhs, ul))
    }

    /// `ψ_k`, or `ψ ≡ 1` for `None`.
    pub fn psi(&self, k: Option<u32>) -> Result<ScalarField<T>> {
        match k {
            Some(k) => build_psi(self.metric.grid(), k),
            None => Ok(ScalarField::constant(self.metric.grid(), T::one())),
        }
    }

    fn start(&self) -> ScalarField<T> {
        let grid = self.metric.grid();
        match &self.initial_guess {
            Some(g) => ScalarField::new((0..grid.len()).map(|p| if grid.is_interior(p) { g.at(p) } else { self.ul.at(p) }).collect()),
            None => self.ul.clone(),
        }
    }

    fn finish(&self, mut report: SolveReport<T>, k: Option<u32>, lambda: T, psi: &ScalarField<T>, t: &Sym2Field<T>, config: &SolverConfig) -> Result<SolveReport<T>> {
        let m = &self.metric;
        report.k = k;
        report.lambda = lambda.to_f64_lossy();
        report.ordering = Some(ordering_check(&self.ul, &report.u, self.ubar.as_ref()));
        let gradient = gradient_monitor(&report.u, T::lit(config.mu_monitor), T::lit(config.grad_floor), m);
        let hessian = hessian_monitor(&report.u, T::lit(config.lambda_monitor), &self.chi, psi, t, m, None)?;
        report.monitors = Some(Monitors { gradient, hessian });
        Ok(report)
    }

    fn check_inputs(&self) -> Result<()> {
        let grid = self.metric.grid();
        self.ul.check_len(grid, "subsolution")?;
        self.ul.check_finite("subsolution")?;
        self.chi.check_len(grid, "chi")?;
        if let Some(b) = &self.ubar {
            b.check_len(grid, "supersolution")?;
        }
        if let Some(g) = &self.initial_guess {
            g.check_len(grid, "initial guess")?;
        }
        if self.base.len() != grid.len() || self.base.dim() != grid.dim() {
            return Err(Error::SizeMismatch { what: "base tensor", got: self.base.len(), expected: grid.len() });
        }
        Ok(())
    }
}

/// Solves with `ψ_k` (or `ψ ≡ 1`) and `T = S + λ(1−ψ)g`, starting from the
/// subsolution or the problem's initial guess.
pub fn solve_regularized<T: Real>(problem: &Problem<T>, k: Option<u32>, lambda: T, config: &SolverConfig) -> Result<SolveReport<T>> {
    problem.check_inputs()?;
    let psi = problem.psi(k)?;
    let t = build_t(&problem.base, &psi, lambda, &problem.metric);
    let report = newton_solve(&problem.start(), &psi, &t, &problem.rhs, &problem.metric, config)?;
    problem.finish(report, k, lambda, &psi, &t, config)
}

/// Per-`k` reports and the interior Cauchy summary.
#[derive(Debug, Clone)]
pub struct HomotopyReport<T> {
    pub reports: Vec<SolveReport<T>>,
    /// The region `{d > 2/k_min}`.
    pub interior: Vec<usize>,
    pub interior_threshold: f64,
    /// `‖u_{k_{j+1}} − u_{k_j}‖∞` on the region.
    pub successive_differences: Vec<f64>,
    /// Hessian monitor maximum on the region, per `k`.
    pub interior_hessian: Vec<f64>,
    /// Largest eigenvalue of `w` on the region, per `k`.
    pub interior_max_eig: Vec<f64>,
    pub gradient_monitor: Vec<f64>,
    /// Solves that fell back to the subsolution because the previous
    /// solution was not admissible for the next cutoff.
    pub cold_starts: Vec<u32>,
}

impl<T> HomotopyReport<T> {
    pub fn differences_decreasing(&self) -> bool {
        self.successive_differences.windows(2).all(|w| w[1] < w[0])
    }

    /// `(max − min) / max |·|` of the interior Hessian monitor.
    pub fn hessian_variation(&self) -> f64 {
        let hi = self.interior_hessian.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.interior_hessian.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = self.interior_hessian.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            0.0
        } else {
            (hi - lo) / scale
        }
    }
}

/// Solves for each `k` in turn, warm-starting from the previous solution.
pub fn homotopy_solve<T: Real>(problem: &Problem<T>, ks: &[u32], lambda: T, config: &SolverConfig) -> Result<HomotopyReport<T>> {
    problem.check_inputs()?;
    let m = &problem.metric;
    let grid = m.grid();
    if ks.is_empty() {
        return Err(Error::KListNotIncreasing);
    }
    let schedule = PsiSchedule::new(grid, ks)?;
    let threshold = T::lit(2.0) / T::from_u32(ks[0]).expect("k fits");
    let interior: Vec<usize> = grid.interior_nodes().iter().copied().filter(|&p| grid.boundary_distance(p) > threshold).collect();
    let mut out = HomotopyReport {
        reports: Vec::new(),
        interior_threshold: threshold.to_f64_lossy(),
        interior,
        successive_differences: Vec::new(),
        interior_hessian: Vec::new(),
        interior_max_eig: Vec::new(),
        gradient_monitor: Vec::new(),
        cold_starts: Vec::new(),
    };
    let mut previous: Option<ScalarField<T>> = None;
    for (k, psi) in schedule.iter() {
        let t = build_t(&problem.base, psi, lambda, m);
        let start = match &previous {
            Some(u) if residual_with_tol(u, psi, &t, &problem.rhs, m, T::lit(config.delta_pd)).is_ok() => u.clone(),
            Some(_) => {
                out.cold_starts.push(k);
                problem.start()
            }
            None => problem.start(),
        };
        let report = newton_solve(&start, psi, &t, &problem.rhs, m, config)?;
        let report = problem.finish(report, Some(k), lambda, psi, &t, config)?;
        if let Some(prev) = &previous {
            out.successive_differences.push(report.u.max_diff_on(prev, out.interior.iter().copied()).to_f64_lossy());
        }
        if !out.interior.is_empty() {
            let h = hessian_monitor(&report.u, T::lit(config.lambda_monitor), &problem.chi, psi, &t, m, Some(&out.interior))?;
            out.interior_hessian.push(h.max.to_f64_lossy());
            out.interior_max_eig.push(h.max_eig.to_f64_lossy());
        }
        out.gradient_monitor.push(report.monitors.expect("set by finish").gradient.max.to_f64_lossy());
        previous = Some(report.u.clone());
        out.reports.push(report);
    }
    Ok(out)
}
