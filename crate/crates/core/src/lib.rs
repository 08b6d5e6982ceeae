//! Optimal in-kind redistribution with private-market participation constraints.
//!
//! The planner chooses a nondecreasing quality schedule `q(θ)` and transfers
//! `t(θ)` for a good that is also sold competitively at unit cost `c`. Every
//! consumer must do at least as well as in the private market and payments
//! cannot be negative. Closed-form optima come from ironing a screening
//! transform in quantile space; an interior-point oracle on the discretized
//! problem cross-checks them.
//!
//! All numerical routines are generic over [`Scalar`]; the `*F64` aliases fix
//! the scalar to `f64`.

pub mod analysis;
pub mod env;
pub mod ironing;
pub mod mech;
pub mod oracle;
pub mod quad;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type EnvironmentF64 = env::Environment<f64>;
pub type MechanismF64 = mech::Mechanism<f64>;
pub type ScreeningTransformF64 = ironing::ScreeningTransform<f64>;
pub type IroningResultF64 = ironing::IroningResult<f64>;
pub type SolverDiagnosticsF64 = solver::SolverDiagnostics<f64>;
pub type FeasibilityReportF64 = mech::FeasibilityReport<f64>;
pub type WelfareBreakdownF64 = mech::WelfareBreakdown<f64>;
pub type OracleSolutionF64 = oracle::OracleSolution<f64>;
pub type SweepResultF64 = analysis::SweepResult<f64>;
