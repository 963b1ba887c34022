use std::sync::Arc;

use antiplane_core::control::{cost, ControlProblem};
use antiplane_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use BoundaryTag::*;

/// Unit square clamped on the left and bottom, two traction patches on the
/// right edge and friction on the top edge.
fn patch_problem(g: FrictionBound) -> ControlProblem {
    let spec = MeshSpec::rectangle(1.0, 1.0, 12, 12, [Gamma1, Gamma2, Gamma1, Gamma3]);
    let space = Arc::new(FemSpace::new(build_mesh(&spec).unwrap()).unwrap());
    let problem = ProblemData::new(
        space.clone(),
        CoefficientField::Uniform(1.0),
        CoefficientField::Uniform(1.0),
        TractionField::zero(),
        g,
    )
    .unwrap();
    let phi = ScalarField::interpolate_in_v(space.mesh(), |x| 0.6 * x[0] * (1.0 + x[1]));
    let weights = CostWeights::new(space.mesh(), 1.0, 0.05, phi).unwrap();
    let controls = ControlSpec::contiguous(space.mesh(), 2).unwrap();
    ControlProblem::new(problem, controls, weights, SolverConfig::default()).unwrap()
}

fn grid_argmin(cp: &ControlProblem, lo: [f64; 2], hi: [f64; 2], points: usize) -> ([f64; 2], f64) {
    let mut best = ([0.0; 2], f64::INFINITY);
    for i in 0..points {
        for k in 0..points {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (points - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * k as f64 / (points - 1) as f64,
            ];
            let j = cp.reduced_cost(&x).unwrap();
            if j < best.1 {
                best = (x, j);
            }
        }
    }
    best
}

#[test]
fn simplex_optimum_agrees_with_grid_scan() {
    let cp = patch_problem(FrictionBound::constant(0.3));
    let (pair, j, report) = minimize_j(&cp, &MultistartConfig::new(1)).unwrap();
    let (lo, hi) = ([-0.5, 0.0], [1.5, 2.0]);
    let cell = (hi[0] - lo[0]) / 40.0;
    let (grid_x, grid_j) = grid_argmin(&cp, lo, hi, 41);
    for d in 0..2 {
        assert!((grid_x[d] - pair.f2[d]).abs() <= cell, "{grid_x:?} vs {:?}", pair.f2);
    }
    assert!(j <= grid_j + 1e-12);
    assert!(report.violation <= 1e-8);
    assert!(report.spread < 1e-6);
}

#[test]
fn frictionless_reduced_cost_is_strictly_convex_on_random_segments() {
    let cp = patch_problem(FrictionBound::constant(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c);
    for _ in 0..100 {
        let a = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let b = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let second = cp.reduced_cost(&a).unwrap() + cp.reduced_cost(&b).unwrap() - 2.0 * cp.reduced_cost(&m).unwrap();
        assert!(second > 0.0, "{a:?} {b:?}: {second}");
    }
}

#[test]
fn reduced_cost_is_coercive_with_friction() {
    let cp = patch_problem(FrictionBound::affine(0.3, 0.2));
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    for _ in 0..30 {
        let x = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        let (j, u) = cp.evaluate(&x).unwrap();
        assert!(j >= cp.weights().a2 * cp.spec().norm_sq(&x) - 1e-12);
        assert_eq!(j, cost(cp.space(), &u, cp.spec(), &x, cp.weights()));
    }
}
