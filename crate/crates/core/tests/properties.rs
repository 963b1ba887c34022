use std::sync::Arc;

use antiplane_core::constants::discrete_constants;
use antiplane_core::qvi::{complementarity, membership_violation, standard_directions};
use antiplane_core::{
    build_mesh, solve_qvi, BoundaryTag, CoefficientField, FemSpace, FrictionBound, MeshSpec, ProblemData, ScalarField,
    SolverConfig, TractionField, TykhonovIndex,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use BoundaryTag::*;

fn space_1d(n: usize) -> Arc<FemSpace> {
    Arc::new(FemSpace::new(build_mesh(&MeshSpec::unit_interval(n, Gamma3)).unwrap()).unwrap())
}

fn space_2d(n: usize) -> Arc<FemSpace> {
    let spec = MeshSpec::rectangle(1.0, 1.0, n, n, [Gamma1, Gamma2, Gamma3, Gamma2]);
    Arc::new(FemSpace::new(build_mesh(&spec).unwrap()).unwrap())
}

fn random_field(space: &FemSpace, rng: &mut ChaCha8Rng) -> ScalarField {
    let free: Vec<f64> = (0..space.num_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    space.extend(&free)
}

fn problem(space: Arc<FemSpace>, mu: f64, f0: f64, f2: f64, g: FrictionBound) -> ProblemData {
    ProblemData::new(
        space,
        CoefficientField::Uniform(mu),
        CoefficientField::Uniform(f0),
        TractionField::Uniform(f2),
        g,
    )
    .unwrap()
}

#[test]
fn constants_bound_random_fields_and_are_attained() {
    for space in [space_1d(64), space_2d(8)] {
        let c = discrete_constants(&space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
        for _ in 0..100 {
            let v = random_field(&space, &mut rng);
            assert!(space.norm(&v) <= c.c0 * space.gradient_norm(&v) * (1.0 + 1e-12));
            assert!(space.gamma3_norm(&v) <= c.c3 * space.norm(&v) * (1.0 + 1e-12));
        }
        let p = &c.poincare_field;
        assert!(space.norm(p) / (c.c0 * space.gradient_norm(p)) >= 0.999);
        let t = c.trace_field.as_ref().unwrap();
        assert!(space.gamma3_norm(t) / (c.c3 * space.norm(t)) >= 0.999);
    }
}

#[test]
fn solutions_obey_the_a_priori_bound() {
    // v = 0 in the inequality gives (μ*/c₀²)‖u‖² ≤ ‖f‖_{V*} ‖u‖
    let mut rng = ChaCha8Rng::seed_from_u64(0xab);
    for space in [space_1d(48), space_2d(6)] {
        let c0 = discrete_constants(&space).unwrap().c0;
        for _ in 0..10 {
            let mu = rng.gen_range(0.5..3.0);
            let p = problem(
                space.clone(),
                mu,
                rng.gen_range(-8.0..8.0),
                rng.gen_range(-2.0..2.0),
                FrictionBound::affine(rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.3)),
            );
            let (u, _) = solve_qvi(&p, &SolverConfig::default()).unwrap();
            let bound = c0 * c0 / mu * space.dual_norm(&p.load().unwrap());
            assert!(space.norm(&u) <= bound * (1.0 + 1e-9), "{} > {bound}", space.norm(&u));
        }
    }
}

#[test]
fn observed_ratios_respect_the_contraction_factor() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a);
    for space in [space_1d(64), space_2d(8)] {
        for _ in 0..6 {
            let lg = rng.gen_range(0.05..0.6);
            let p = problem(
                space.clone(),
                1.0,
                rng.gen_range(1.0..10.0),
                0.5,
                FrictionBound::affine(0.2, lg),
            );
            let (_, report) = solve_qvi(&p, &SolverConfig::default()).unwrap();
            assert!(report.contraction);
            assert!(
                report.ratios_within_bound,
                "k = {} ratios {:?}",
                report.contraction_factor, report.ratios
            );
        }
    }
}

#[test]
fn converged_solutions_satisfy_the_friction_law_and_the_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x14);
    for space in [space_1d(64), space_2d(8)] {
        for case in 0..6 {
            let p = problem(
                space.clone(),
                rng.gen_range(0.5..2.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-1.0..1.0),
                FrictionBound::affine(rng.gen_range(0.1..1.0), rng.gen_range(0.0..0.3)),
            );
            let (u, _) = solve_qvi(&p, &SolverConfig::default()).unwrap();
            let c = complementarity(&p, &u).unwrap();
            assert!(c.bound_excess <= 1e-8, "case {case}: {c:?}");
            assert!(c.slip_defect <= 1e-8, "case {case}: {c:?}");
            let dirs = standard_directions(&space, &u, case, 100);
            assert!(membership_violation(&p, &u, &TykhonovIndex::exact(&p), &dirs).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let p = problem(space_2d(8), 1.0, 5.0, 0.5, FrictionBound::affine(0.3, 0.4));
    let (a, _) = solve_qvi(&p, &SolverConfig::default()).unwrap();
    let (b, _) = solve_qvi(&p, &SolverConfig::default()).unwrap();
    assert!(a
        .values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stiffness_is_coercive(seed in any::<u64>(), mu_lo in 0.2f64..2.0, spread in 0.0f64..3.0) {
        let space = space_2d(6);
        let mu = CoefficientField::from_fn(space.mesh(), |p| mu_lo + spread * p[0] * p[1]);
        let p = ProblemData::new(space.clone(), mu, CoefficientField::Uniform(0.0), TractionField::zero(), FrictionBound::constant(0.0)).unwrap();
        let c0 = discrete_constants(&space).unwrap().c0;
        let v = random_field(&space, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = p.stiffness().unwrap().quad_form(v.values());
        let n = space.norm(&v);
        prop_assert!(a >= p.mu_star() / (c0 * c0) * n * n * (1.0 - 1e-12));
    }

    #[test]
    fn friction_functional_satisfies_the_four_point_estimate(seed in any::<u64>(), lg in 0.0f64..2.0, a in 0.0f64..2.0) {
        let space = space_2d(6);
        let c3 = discrete_constants(&space).unwrap().c3;
        let g = FrictionBound::affine(a, lg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [e1, e2, v1, v2] = [0; 4].map(|_| random_field(&space, &mut rng));
        let lhs = space.eval_j(&g, &e1, &v2) - space.eval_j(&g, &e1, &v1) + space.eval_j(&g, &e2, &v1) - space.eval_j(&g, &e2, &v2);
        let rhs = lg * c3 * c3 * space.distance(&e1, &e2) * space.distance(&v1, &v2);
        prop_assert!(lhs.abs() <= rhs * (1.0 + 1e-12) + 1e-14);
    }
}
