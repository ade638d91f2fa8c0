use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric is singular at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("metric is not symmetric: g[{i}][{j}] and g[{j}][{i}] differ at {point:?}")]
    AsymmetricMetric { i: usize, j: usize, point: Vec<f64> },
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular coefficients: ac − b² = 0 (a = {a}, b = {b}, c = {c})")]
    SingularCoefficients { a: f64, b: f64, c: f64 },
    #[error("chart map Jacobian is singular at {point:?}")]
    SingularJacobian { point: Vec<f64> },
    #[error("field `{0}` is not fiber preserving; closed-form lift calculus requires it")]
    NotFiberPreserving(String),
    #[error("flow left the chart domain at t = {t}: x = {x:?}")]
    FlowLeftDomain { t: f64, x: Vec<f64> },
    #[error("flow produced non-finite values at t = {t}")]
    NonFiniteFlow { t: f64 },
    #[error("unsupported tensor type: {0}")]
    UnsupportedTensor(String),
    #[error("closed form and flow oracle disagree for `{field}`: defect {defect:.3e} exceeds {tol:e}")]
    CrossCheck { field: String, defect: f64, tol: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
