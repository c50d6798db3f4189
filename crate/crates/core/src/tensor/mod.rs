//! Fields on chart grids: finite-difference calculus and background curvature.

mod diff;
mod metric;

pub use diff::{d1, d1_at, d2, d2_at, gradient, partial_hessian};
pub use metric::{commutator_defect, covariant_hessian, MetricPackage, Rank3Field, METRIC_PD_TOL};
