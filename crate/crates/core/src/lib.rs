//! Numerical construction and classification of rotationally symmetric translating
//! solitons for curvature flows with admissible speed functions.
//!
//! The numerical core is generic over the scalar type (`T: Real`); the aliases below fix
//! it to `f64`, which is what the speed catalog, the classifier and the CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` is meant to catch NaN too

pub mod classify;
pub mod constraint;
pub mod error;
pub mod expr;
pub mod level_sets;
pub mod limits;
pub mod ode;
pub mod profile;
pub mod real;
pub mod roots;
pub mod speed;
pub mod symmetric;
pub mod translator;

pub use classify::{classify, classify_with, cross_validate, Classification, Verdict};
pub use constraint::ConstraintContext;
pub use error::{Error, Result};
pub use expr::SpeedExpr;
pub use profile::{analyze, check_convexity, fit_asymptotics, recover_u, BowlProfile};
pub use real::Real;
pub use speed::{compute_invariants, verify_admissibility, Builtin, SpeedInvariants};
pub use translator::{IntegrationConfig, ProfileSolution, Status, Translator};

pub type SpeedFunction = speed::SpeedFunction<f64>;
pub type BarrierCurve = level_sets::BarrierCurve<f64>;
pub type DenseStep = ode::DenseStep<f64>;
