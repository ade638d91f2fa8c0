//! Numerical geometry of lift metrics on the tangent bundle of a Riemannian
//! manifold.
//!
//! The crate evaluates the metric `g̃ = a·g₁ + b·g₂ + c·g₃` on `TM` in the
//! adapted frame of the Levi-Civita non-linear connection, computes Lie
//! derivatives of `g̃` along lifted vector fields in closed form and through an
//! independent flow-pullback oracle, and classifies the fields as Killing,
//! homothetic, conformal or non-conformal.

pub mod conformal;
pub mod error;
pub mod expr;
pub mod flow_oracle;
pub mod lie_calculus;
pub mod lift_fields;
pub mod linalg;
pub mod manifold;
pub mod scalar;
pub mod suites;
pub mod tangent_bundle;

pub use error::{Error, Result};
pub use lift_fields::{AffineFiberField, BaseField, LiftField, LiftKind};
pub use manifold::ManifoldSpec;
pub use tangent_bundle::{LiftMetricCoeffs, TMPoint};
