//! Finite-difference solver for Dirichlet problems of the log-determinant
//! equation satisfied by conformal deformations of the Schouten tensor,
//! with the boundary-band regularization, barrier checks and estimate
//! monitors.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix `f64`.

pub mod barriers;
pub mod conformal;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod quadrature;
pub mod regularization;
pub mod scalar;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub use barriers::{
    default_chi, flat_supersolution, mean_value_operator, ordering_check, verify_chi, verify_subsolution,
    verify_supersolution, BarrierPair, ComparisonOperator, OrderingReport, SubsolutionReport, SupersolutionReport,
};
pub use conformal::{
    admissible, f_from_s, residual, s_from_u, schouten_conformal, w_tensor, ExprRhs, FnRhs, GeneralRhs, RhsFunction,
    WField, W_PD_TOL,
};
pub use field::{CovectorField, ScalarField, Sym2Field};
pub use grid::{ChartGrid, NodeClass, MAX_DIM};
pub use linalg::{CsrMatrix, LinearMethod, Mat};
pub use regularization::{build_psi, build_t, select_lambda, LambdaSelection, PsiSchedule};
pub use solver::{
    assemble_jacobian, gradient_monitor, hessian_monitor, homotopy_solve, newton_solve, solve_regularized,
    HomotopyReport, Problem, SolveReport, SolverConfig,
};
pub use tensor::{commutator_defect, covariant_hessian, MetricPackage};

pub type Grid = ChartGrid<f64>;
pub type Metric = MetricPackage<f64>;
pub type Field = ScalarField<f64>;
pub type Covector = CovectorField<f64>;
pub type Tensor2 = Sym2Field<f64>;
pub type Matrix = Mat<f64>;
pub type Rhs = RhsFunction<f64>;
pub type Report = SolveReport<f64>;
pub type DirichletProblem = Problem<f64>;

pub type Grid32 = ChartGrid<f32>;
pub type Metric32 = MetricPackage<f32>;
pub type Field32 = ScalarField<f32>;
