//! Finite element laboratory for the frictional antiplane shear problem.
//!
//! The crate solves the slip-dependent friction quasivariational inequality
//! on structured 1D/2D meshes, computes the discrete constants that govern
//! its contraction, builds approximating sequences for the well-posedness
//! checks, and optimizes boundary tractions for a tracking cost.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod constants;
pub mod control;
pub mod error;
pub mod fem;
pub mod field;
pub mod linalg;
pub mod mesh;
pub mod qvi;
pub mod tykhonov;

pub use control::{minimize_j, run_oc_sequence, ControlProblem, ControlSpec, CostWeights, MultistartConfig, OcIndex};
pub use error::{Error, Result};
pub use fem::FemSpace;
pub use field::{CoefficientField, FrictionBound, ScalarField, TractionField};
pub use mesh::{build_mesh, BoundaryTag, Mesh, MeshSpec, Side};
pub use qvi::{solve_qvi, ProblemData, SolveReport, SolverConfig, TykhonovIndex};
pub use tykhonov::{
    generate_sequence, run_convergence, ConvergenceReport, Decay, HarnessConfig, Schedule, ScheduleKind, Verdict,
};
