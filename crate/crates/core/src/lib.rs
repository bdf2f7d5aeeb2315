//! Distributionally robust safe-corridor trajectory optimization.
//!
//! Minimum-snap Bezier trajectories through box corridors whose faces are
//! uncertain, with Wasserstein ambiguity around elliptical references.

pub mod bezier;
pub mod cases;
pub mod corridor;
pub mod elliptical;
pub mod qp;
mod quadrature;
pub mod robustness;
pub mod tightening;

pub use bezier::{BezierSegment, PiecewiseBezier};
pub use corridor::{BoxRegion, InitialPath, SafeCorridor, TimeAllocation};
pub use elliptical::{EllipticalRef, Family};
pub use qp::{plan, Plan, PlanError, PlanMode, QpProblem, QpSolution, SnapSpec, SolverSettings, Status};
pub use robustness::{BenchmarkConfig, BenchmarkReport, Method, PerturbationSpec, ViolationMode};
pub use tightening::{AmbiguitySpec, Scatter, TightenedCorridor, UniformAmbiguity};
