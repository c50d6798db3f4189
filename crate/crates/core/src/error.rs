use thiserror::Error;

use crate::expr::{EvalError, ParseError};

/// Errors raised by the geometry kernel, the barrier checks and the solver.
///
/// Node indices are flat grid indices (first axis fastest); see
/// [`ChartGrid::multi_index`](crate::grid::ChartGrid::multi_index).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be between 2 and {max}, got {dim}")]
    UnsupportedDimension { dim: usize, max: usize },
    #[error("axis {axis}: need at least 5 nodes, got {nodes}")]
    ResolutionTooSmall { axis: usize, nodes: usize },
    #[error("axis {axis}: degenerate bounds [{lo}, {hi}]")]
    DegenerateBounds { axis: usize, lo: f64, hi: f64 },
    #[error("axis {axis}: spacing {h} differs from axis 0 spacing {h0}")]
    NonUniformSpacing { axis: usize, h: f64, h0: f64 },
    #[error("size mismatch: {what} has {got} entries, expected {expected}")]
    SizeMismatch { what: &'static str, got: usize, expected: usize },
    #[error("non-finite value in {what} at node {node}")]
    NonFinite { what: &'static str, node: usize },
    #[error("metric is not positive definite at node {node}")]
    MetricNotPositiveDefinite { node: usize },
    #[error("the Schouten tensor is not elliptic in dimension 2; supply a replacement tensor")]
    MissingSchouten,
    #[error("not admissible at node {node}: minimum eigenvalue {min_eig:e}")]
    AdmissibilityViolation { node: usize, min_eig: f64 },
    #[error("target function must be positive, node {node} has {value:e}")]
    NonPositiveTarget { node: usize, value: f64 },
    #[error("psi band for k={k} is unresolved: h={h} exceeds 1/(4k)")]
    BandUnresolved { k: u32, h: f64 },
    #[error("k list must be strictly increasing (and non-empty for a homotopy)")]
    KListNotIncreasing,
    #[error("subsolution fails at node {node}: margin {margin:e}")]
    NotASubsolution { node: usize, margin: f64 },
    #[error("no lambda <= {lambda_max} satisfies the modified subsolution inequality; worst node {node}, deficit {deficit:e}")]
    LambdaNotFound { lambda_max: f64, node: usize, deficit: f64 },
    #[error("supersolution construction requires a flat background metric")]
    NotFlat,
    #[error("supersolution hypothesis violated at node {node}: {reason}")]
    LemmaHypothesis { node: usize, reason: &'static str },
    #[error("epsilon fell below 2^-20 without a supersolution; obstruction at node {node}")]
    EpsilonUnderflow { node: usize },
    #[error("supersolution lies below the subsolution at node {node}")]
    BarrierOrder { node: usize },
    #[error("initial guess differs from boundary data at node {node}")]
    BoundaryMismatch { node: usize },
    #[error("newton did not converge in {iters} iterations, residual {residual:e}")]
    MaxItersExceeded { iters: usize, residual: f64 },
    #[error("iteration {iteration}: no step length keeps admissibility (node {node})")]
    AdmissibilityLost { iteration: usize, node: usize },
    #[error("iteration {iteration}: backtracking found no residual decrease from {residual:e}")]
    Stagnated { iteration: usize, residual: f64 },
    #[error("linear solve failed: relative residual {residual:e} after {iterations} iterations")]
    LinearSolveFailure { residual: f64, iterations: usize },
    #[error("solver setting `{field}` is out of range")]
    InvalidConfig { field: &'static str },
    #[error("convexity function fails chi_ij >= g_ij at node {node}")]
    ChiNotConvex { node: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("expression evaluation at node {node}: {source}")]
    Eval { node: usize, source: EvalError },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
