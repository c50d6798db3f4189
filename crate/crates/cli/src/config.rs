//! Run configuration: JSON schema, defaults, and construction of the
//! numerical problem.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use schouten_core::expr::{parse, Expr, VarSet};
use schouten_core::{
    f_from_s, s_from_u, ChartGrid, Error as CoreError, ExprRhs, Field, Grid, LinearMethod, Mat, Metric, MetricPackage,
    Rhs, RhsFunction, ScalarField, SolverConfig, Sym2Field, Tensor2, MAX_DIM,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Bounds {
    /// The same interval on every axis.
    Uniform([f64; 2]),
    PerAxis(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

/// A symmetric tensor field given by expressions in `x1..xn`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TensorSpec {
    /// `"flat"` (identity) or `"zero"`.
    Named(String),
    /// `φ(x) δ_ij`.
    Conformal {
        conformal: String,
    },
    /// Row-major `n × n` entries; the upper triangle is used.
    Entries {
        entries: Vec<Vec<String>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum RhsSpec {
    /// `f = log s + log det g − 2 n z`.
    #[serde(rename = "s")]
    Target {
        s: String,
    },
    #[serde(rename = "f")]
    General {
        f: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_z: Option<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum LambdaSpec {
    Auto(String),
    Value(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LinearMethodSpec {
    Auto,
    BandedLu,
    Gmres,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub newton_tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub max_backtracks: usize,
    pub delta_pd: f64,
    pub linear_tol: f64,
    pub mu_monitor: f64,
    pub lambda_monitor: f64,
    pub grad_floor: f64,
    pub linear_method: LinearMethodSpec,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSpec {
            newton_tol: d.newton_tol,
            max_iters: d.max_iters,
            damping: d.damping,
            max_backtracks: d.max_backtracks,
            delta_pd: d.delta_pd,
            linear_tol: d.linear_tol,
            mu_monitor: d.mu_monitor,
            lambda_monitor: d.lambda_monitor,
            grad_floor: d.grad_floor,
            linear_method: LinearMethodSpec::Auto,
        }
    }
}

impl SolverSpec {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            newton_tol: self.newton_tol,
            max_iters: self.max_iters,
            damping: self.damping,
            max_backtracks: self.max_backtracks,
            delta_pd: self.delta_pd,
            linear_tol: self.linear_tol,
            mu_monitor: self.mu_monitor,
            lambda_monitor: self.lambda_monitor,
            grad_floor: self.grad_floor,
            linear_method: match self.linear_method {
                LinearMethodSpec::Auto => LinearMethod::Auto,
                LinearMethodSpec::BandedLu => LinearMethod::BandedLu,
                LinearMethodSpec::Gmres => LinearMethod::Gmres,
            },
        }
    }
}

fn default_lambda() -> LambdaSpec {
    LambdaSpec::Auto("auto".into())
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_metric() -> TensorSpec {
    TensorSpec::Named("flat".into())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    pub bounds: Bounds,
    pub resolution: Resolution,
    #[serde(default = "default_metric")]
    pub metric: TensorSpec,
    /// Used in place of the Schouten tensor; required when `dimension = 2`.
    #[serde(default)]
    pub replacement_tensor: Option<TensorSpec>,
    pub rhs: RhsSpec,
    /// Replace `s` by the target for which `exact_solution` solves the
    /// discrete equation.
    #[serde(default)]
    pub discrete_target: bool,
    pub subsolution: String,
    /// `"auto-flat"` or an expression.
    #[serde(default)]
    pub supersolution: Option<String>,
    #[serde(default)]
    pub chi: Option<String>,
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub k_list: Vec<u32>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub initial_guess: Option<String>,
    #[serde(default)]
    pub exact_solution: Option<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

/// Reads and validates a config file.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Validation(format!("config not found: {}", path.display()))
        } else {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        }
    })?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn expr(text: &str, vars: VarSet, what: &str) -> Result<Expr, CliError> {
    parse(text, vars).map_err(|e| invalid(format!("{what}: {e} in `{text}`")))
}

impl RunConfig {
    /// Structural checks and expression parsing, before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let n = self.dimension;
        if !(2..=MAX_DIM).contains(&n) {
            return Err(invalid(format!("dimension must be between 2 and {MAX_DIM}, got {n}")));
        }
        if let Bounds::PerAxis(b) = &self.bounds {
            if b.len() != n {
                return Err(invalid(format!("bounds: expected {n} intervals, got {}", b.len())));
            }
        }
        if let Resolution::PerAxis(r) = &self.resolution {
            if r.len() != n {
                return Err(invalid(format!("resolution: expected {n} entries, got {}", r.len())));
            }
        }
        self.check_tensor(&self.metric, "metric", &["flat"])?;
        match &self.replacement_tensor {
            Some(t) => self.check_tensor(t, "replacement_tensor", &["zero", "flat"])?,
            None if n == 2 => return Err(invalid("replacement_tensor is required in dimension 2")),
            None => {}
        }
        let coords = VarSet::coords(n);
        match &self.rhs {
            RhsSpec::Target { s } => {
                expr(s, coords, "rhs.s")?;
            }
            RhsSpec::General { f, f_z } => {
                expr(f, VarSet::with_z(n), "rhs.f")?;
                if let Some(fz) = f_z {
                    expr(fz, VarSet::with_z(n), "rhs.f_z")?;
                }
                if self.discrete_target {
                    return Err(invalid("discrete_target requires rhs mode \"s\""));
                }
            }
        }
        if self.discrete_target && self.exact_solution.is_none() {
            return Err(invalid("discrete_target requires exact_solution"));
        }
        expr(&self.subsolution, coords, "subsolution")?;
        if let Some(s) = &self.supersolution {
            if s != "auto-flat" {
                expr(s, coords, "supersolution")?;
            }
        }
        for (what, e) in [("chi", &self.chi), ("initial_guess", &self.initial_guess), ("exact_solution", &self.exact_solution)] {
            if let Some(e) = e {
                expr(e, coords, what)?;
            }
        }
        match &self.lambda {
            LambdaSpec::Auto(s) if s == "auto" => {}
            LambdaSpec::Auto(s) => return Err(invalid(format!("lambda must be \"auto\" or a number, got \"{s}\""))),
            LambdaSpec::Value(v) if !(*v >= 0.0 && v.is_finite()) => return Err(invalid(format!("lambda must be >= 0, got {v}"))),
            LambdaSpec::Value(_) => {}
        }
        check_k_list(&self.k_list)?;
        self.solver.to_config().validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    fn check_tensor(&self, t: &TensorSpec, what: &str, names: &[&str]) -> Result<(), CliError> {
        let n = self.dimension;
        match t {
            TensorSpec::Named(s) if names.contains(&s.as_str()) => Ok(()),
            TensorSpec::Named(s) => Err(invalid(format!("{what}: unknown value \"{s}\""))),
            TensorSpec::Conformal { conformal } => expr(conformal, VarSet::coords(n), what).map(|_| ()),
            TensorSpec::Entries { entries } => {
                if entries.len() != n || entries.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("{what}: entries must be {n} x {n}")));
                }
                for row in entries {
                    for e in row {
                        expr(e, VarSet::coords(n), what)?;
                    }
                }
                Ok(())
            }
        }
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let n = self.dimension;
        let bounds: Vec<(f64, f64)> = match &self.bounds {
            Bounds::Uniform([lo, hi]) => vec![(*lo, *hi); n],
            Bounds::PerAxis(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
        };
        let counts = match &self.resolution {
            Resolution::Uniform(c) => vec![*c],
            Resolution::PerAxis(c) => c.clone(),
        };
        Ok(ChartGrid::new(&bounds, &counts)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.to_config()
    }

    /// `lambda` when given as a number.
    pub fn fixed_lambda(&self) -> Option<f64> {
        match self.lambda {
            LambdaSpec::Value(v) => Some(v),
            LambdaSpec::Auto(_) => None,
        }
    }

    /// Overwrites the grid resolution by `counts` nodes per axis.
    pub fn with_resolution(&self, counts: Vec<usize>) -> RunConfig {
        RunConfig { resolution: Resolution::PerAxis(counts), ..self.clone() }
    }
}

pub fn check_k_list(ks: &[u32]) -> Result<(), CliError> {
    if ks.contains(&0) {
        return Err(invalid("k_list entries must be positive"));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("k_list must be strictly increasing"));
    }
    Ok(())
}

fn sample(grid: &Grid, e: &Expr, what: &'static str) -> Result<Field, CliError> {
    let f = ScalarField::try_from_fn(grid, |p, x| e.eval(x, None).map_err(|source| CoreError::Eval { node: p, source }))?;
    f.check_finite(what)?;
    Ok(f)
}

fn tensor_field(grid: &Grid, spec: &TensorSpec) -> Result<Tensor2, CliError> {
    let n = grid.dim();
    let coords = VarSet::coords(n);
    Ok(match spec {
        TensorSpec::Named(s) if s == "zero" => Sym2Field::zeros(n, grid.len()),
        TensorSpec::Named(_) => Sym2Field::identity(grid),
        TensorSpec::Conformal { conformal } => {
            let phi = sample(grid, &expr(conformal, coords, "tensor")?, "conformal factor")?;
            Sym2Field::from_fn(grid, |p| Mat::identity(n).scaled(phi.at(p)))
        }
        TensorSpec::Entries { entries } => {
            let mut comps = vec![vec![None; n]; n];
            for i in 0..n {
                for j in i..n {
                    comps[i][j] = Some(sample(grid, &expr(&entries[i][j], coords, "tensor")?, "tensor entry")?);
                }
            }
            Sym2Field::from_fn(grid, |p| {
                Mat::from_fn(n, |i, j| {
                    let (a, b) = if i <= j { (i, j) } else { (j, i) };
                    comps[a][b].as_ref().expect("upper triangle sampled").at(p)
                })
            })
        }
    })
}

/// Everything a subcommand needs, sampled on the grid.
pub struct Built {
    pub grid: Grid,
    pub metric: Metric,
    pub base: Tensor2,
    pub rhs: Rhs,
    pub ul: Field,
    /// An explicit supersolution expression, sampled.
    pub ubar: Option<Field>,
    pub auto_flat: bool,
    pub chi: Field,
    pub initial_guess: Option<Field>,
    pub exact: Option<Field>,
}

/// The configured metric sampled on `grid`.
pub fn metric_on(cfg: &RunConfig, grid: &Grid) -> Result<Metric, CliError> {
    Ok(match &cfg.metric {
        TensorSpec::Named(_) => MetricPackage::flat(grid)?,
        other => MetricPackage::new(grid, tensor_field(grid, other)?)?,
    })
}

pub fn build(cfg: &RunConfig) -> Result<Built, CliError> {
    let grid = cfg.grid()?;
    let n = grid.dim();
    let coords = VarSet::coords(n);
    let metric = metric_on(cfg, &grid)?;
    let base = match &cfg.replacement_tensor {
        Some(t) => tensor_field(&grid, t)?,
        None => metric.schouten().ok_or(CoreError::MissingSchouten)?.clone(),
    };
    let ul = sample(&grid, &expr(&cfg.subsolution, coords, "subsolution")?, "subsolution")?;
    let exact = cfg.exact_solution.as_ref().map(|e| sample(&grid, &expr(e, coords, "exact_solution")?, "exact solution")).transpose()?;
    let rhs = match &cfg.rhs {
        RhsSpec::Target { s } => {
            let target = if cfg.discrete_target {
                s_from_u(exact.as_ref().expect("validated"), &metric)?
            } else {
                sample(&grid, &expr(s, coords, "rhs.s")?, "target s")?
            };
            f_from_s(&target, &metric)?
        }
        RhsSpec::General { f, f_z } => {
            let vars = VarSet::with_z(n);
            let f = expr(f, vars, "rhs.f")?;
            let f_z = f_z.as_ref().map(|e| expr(e, vars, "rhs.f_z")).transpose()?;
            RhsFunction::General(Arc::new(ExprRhs { f, f_z }))
        }
    };
    let (ubar, auto_flat) = match cfg.supersolution.as_deref() {
        None => (None, false),
        Some("auto-flat") => (None, true),
        Some(e) => (Some(sample(&grid, &expr(e, coords, "supersolution")?, "supersolution")?), false),
    };
    let chi = match &cfg.chi {
        Some(e) => sample(&grid, &expr(e, coords, "chi")?, "chi")?,
        None => schouten_core::default_chi(&grid),
    };
    let initial_guess =
        cfg.initial_guess.as_ref().map(|e| sample(&grid, &expr(e, coords, "initial_guess")?, "initial guess")).transpose()?;
    Ok(Built { grid, metric, base, rhs, ul, ubar, auto_flat, chi, initial_guess, exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_cfg(v: serde_json::Value) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "dimension": 3,
            "bounds": [-0.5, 0.5],
            "resolution": 9,
            "rhs": { "mode": "s", "s": "1" },
            "subsolution": "0.5 * (x1^2 + x2^2 + x3^2)"
        })
    }

    #[test]
    fn defaults_are_filled_in() {
        let cfg = parse_cfg(minimal()).unwrap();
        assert_eq!(cfg.metric, TensorSpec::Named("flat".into()));
        assert_eq!(cfg.lambda, LambdaSpec::Auto("auto".into()));
        assert!(cfg.k_list.is_empty());
        assert_eq!(cfg.solver, SolverSpec::default());
        assert_eq!(cfg.solver_config(), SolverConfig::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.grid().unwrap().counts(), &[9, 9, 9]);
    }

    #[test]
    fn per_axis_bounds_and_resolution() {
        let mut v = minimal();
        v["bounds"] = serde_json::json!([[-1, 1], [0, 1], [0, 0.5]]);
        v["resolution"] = serde_json::json!([17, 9, 5]);
        let g = parse_cfg(v).unwrap().grid().unwrap();
        assert_eq!(g.counts(), &[17, 9, 5]);
        assert_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn rejections() {
        let cases: Vec<(&str, serde_json::Value)> = vec![
            ("dimension", serde_json::json!(5)),
            ("lambda", serde_json::json!("fast")),
            ("lambda", serde_json::json!(-1.0)),
            ("k_list", serde_json::json!([0, 2])),
            ("solver", serde_json::json!({ "tolerance": 1e-3 })),
            ("metric", serde_json::json!("round")),
            ("metric", serde_json::json!({ "entries": [["1", "0"], ["0", "1"]] })),
            ("chi", serde_json::json!("x4")),
            ("discrete_target", serde_json::json!(true)),
        ];
        for (key, value) in cases {
            let mut v = minimal();
            v[key] = value.clone();
            assert!(parse_cfg(v).is_err(), "{key} = {value}");
        }
    }

    #[test]
    fn expressions_sample_onto_the_grid() {
        let mut v = minimal();
        v["metric"] = serde_json::json!({ "conformal": "4 / (1 + x1^2 + x2^2 + x3^2)^2" });
        v["chi"] = serde_json::json!("2 * (x1^2 + x2^2 + x3^2)");
        let b = build(&parse_cfg(v).unwrap()).unwrap();
        let c = b.grid.flat_index(&[4, 4, 4]);
        assert_eq!(b.metric.metric().entry(c, 0, 0), 4.0);
        assert_eq!(b.chi.at(c), 0.0);
        assert!(b.metric.schouten().is_some());
        assert!((b.ul.at(b.grid.flat_index(&[8, 8, 8])) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn discrete_target_uses_the_exact_solution() {
        let mut v = minimal();
        v["discrete_target"] = serde_json::json!(true);
        v["exact_solution"] = serde_json::json!("log((1 + x1^2 + x2^2 + x3^2) / 2)");
        let b = build(&parse_cfg(v).unwrap()).unwrap();
        let exact = b.exact.as_ref().unwrap();
        let one = Field::constant(&b.grid, 1.0);
        let r = schouten_core::residual(exact, &one, &b.base, &b.rhs, &b.metric).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }
}
