//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use antiplane_core::{
    build_mesh, BoundaryTag, CoefficientField, ControlProblem, ControlSpec, CostWeights, FemSpace, FrictionBound,
    MeshSpec, ProblemData, ScalarField, SolverConfig, TractionField,
};

/// Unit interval with contact at `x = 1`, `μ = 1`, `f₀ = 3`, `g = 0.5 + L|r|`.
pub fn interval_problem(cells: usize, lipschitz: f64) -> ProblemData {
    let space =
        Arc::new(FemSpace::new(build_mesh(&MeshSpec::unit_interval(cells, BoundaryTag::Gamma3)).unwrap()).unwrap());
    ProblemData::new(
        space,
        CoefficientField::Uniform(1.0),
        CoefficientField::Uniform(3.0),
        TractionField::zero(),
        FrictionBound::affine(0.5, lipschitz),
    )
    .unwrap()
}

/// Unit square clamped on the left, contact on top, `n × n` cells.
pub fn square_problem(n: usize) -> ProblemData {
    use BoundaryTag::*;
    let spec = MeshSpec::rectangle(1.0, 1.0, n, n, [Gamma1, Gamma2, Gamma2, Gamma3]);
    let space = Arc::new(FemSpace::new(build_mesh(&spec).unwrap()).unwrap());
    ProblemData::new(
        space,
        CoefficientField::Uniform(1.0),
        CoefficientField::Uniform(1.0),
        TractionField::Uniform(0.2),
        FrictionBound::affine(0.3, 0.2),
    )
    .unwrap()
}

/// Frictionless control on the unit interval with target `φ = x`.
pub fn linear_control(cells: usize, a2: f64) -> ControlProblem {
    let space =
        Arc::new(FemSpace::new(build_mesh(&MeshSpec::unit_interval(cells, BoundaryTag::Gamma2)).unwrap()).unwrap());
    let p = ProblemData::new(
        space.clone(),
        CoefficientField::Uniform(1.0),
        CoefficientField::Uniform(0.0),
        TractionField::zero(),
        FrictionBound::constant(0.0),
    )
    .unwrap();
    let phi = ScalarField::interpolate_in_v(space.mesh(), |x| x[0]);
    let w = CostWeights::new(space.mesh(), 1.0, a2, phi).unwrap();
    ControlProblem::new(
        p,
        ControlSpec::contiguous(space.mesh(), 1).unwrap(),
        w,
        SolverConfig::default(),
    )
    .unwrap()
}
