//! Closed-form references: the one-dimensional three-regime solution and
//! the frictionless linear solve.
//!
//! The 1D problem is `-μ u'' = f₀` on `(0, 1)`, `u(0) = 0`, with
//! `|u'(1)| ≤ g` and `u'(1) = -g sign(u(1))` when `u(1) ≠ 0`. The bound acts
//! on the derivative, so the matching weak problem has the traction bound
//! `μ g` at `x = 1`; see [`traction_bound`].

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::fem::{assemble_load, assemble_stiffness};
use crate::field::{CoefficientField, ScalarField, TractionField};
use crate::linalg::BandCholesky;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `f₀ < -2μg`: `u(1) < 0`, `u'(1) = g`.
    SlipNegativeFlux,
    /// `|f₀| ≤ 2μg`: `u(1) = 0`.
    Stick,
    /// `f₀ > 2μg`: `u(1) > 0`, `u'(1) = -g`.
    SlipPositiveFlux,
}

fn check(mu: f64, g: f64) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::InvalidData(format!("mu must be positive, got {mu}")));
    }
    if !(g > 0.0) {
        return Err(Error::InvalidData(format!("g must be positive, got {g}")));
    }
    Ok(())
}

/// Ties `f₀ = ±2μg` are classified as [`Regime::Stick`]; the branches agree there.
pub fn regime_of(mu: f64, f0: f64, g: f64) -> Result<Regime> {
    check(mu, g)?;
    let threshold = 2.0 * mu * g;
    Ok(if f0 < -threshold {
        Regime::SlipNegativeFlux
    } else if f0 > threshold {
        Regime::SlipPositiveFlux
    } else {
        Regime::Stick
    })
}

/// Linear coefficient `c` of `u(x) = -(f₀/2μ) x² + c x` on each branch.
fn linear_coefficient(regime: Regime, mu: f64, f0: f64, g: f64) -> f64 {
    match regime {
        Regime::SlipNegativeFlux => f0 / mu + g,
        Regime::Stick => f0 / (2.0 * mu),
        Regime::SlipPositiveFlux => f0 / mu - g,
    }
}

pub fn analytic_1d(mu: f64, f0: f64, g: f64, x: f64) -> Result<f64> {
    let regime = regime_of(mu, f0, g)?;
    Ok(branch_value(regime, mu, f0, g, x))
}

pub fn analytic_1d_derivative(mu: f64, f0: f64, g: f64, x: f64) -> Result<f64> {
    let regime = regime_of(mu, f0, g)?;
    Ok(-f0 / mu * x + linear_coefficient(regime, mu, f0, g))
}

/// Evaluates one branch regardless of whether its condition holds.
pub fn branch_value(regime: Regime, mu: f64, f0: f64, g: f64, x: f64) -> f64 {
    -f0 / (2.0 * mu) * x * x + linear_coefficient(regime, mu, f0, g) * x
}

/// Friction bound of the weak problem whose solution is [`analytic_1d`]:
/// the traction `μ u'(1)` is bounded by `μ g`.
pub fn traction_bound(mu: f64, g: f64) -> f64 {
    mu * g
}

/// Direct solve of `K u = F` on V_h; the reference whenever friction is absent.
pub fn linear_solve(
    space: &FemSpace,
    mu: &CoefficientField,
    f0: &CoefficientField,
    f2: &TractionField,
) -> Result<ScalarField> {
    let mesh = space.mesh();
    let k = assemble_stiffness(mesh, mu)?.principal_submatrix(space.free_nodes());
    let f = space.restrict(&assemble_load(mesh, f0, f2)?);
    let u = BandCholesky::factor(&k)?.solve(&f);
    Ok(space.extend(&u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, BoundaryTag, MeshSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_load_gives_zero() {
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(analytic_1d(1.0, 0.0, 1.0, x).unwrap(), 0.0);
        }
        assert_eq!(regime_of(1.0, 0.0, 1.0).unwrap(), Regime::Stick);
    }

    #[test]
    fn positive_slip_example() {
        assert_relative_eq!(analytic_1d(1.0, 3.0, 1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(analytic_1d_derivative(1.0, 3.0, 1.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn stick_example() {
        assert_relative_eq!(analytic_1d(1.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(analytic_1d_derivative(1.0, 1.0, 1.0, 1.0).unwrap().abs(), 0.5);
    }

    #[test]
    fn threshold_is_stick_and_branches_agree() {
        assert_eq!(regime_of(1.0, 2.0, 1.0).unwrap(), Regime::Stick);
        for k in 0..=10 {
            let x = k as f64 / 10.0;
            let a = branch_value(Regime::Stick, 1.0, 2.0, 1.0, x);
            let b = branch_value(Regime::SlipPositiveFlux, 1.0, 2.0, 1.0, x);
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn negative_slip_example() {
        assert_eq!(regime_of(2.0, -3.0, 0.5).unwrap(), Regime::SlipNegativeFlux);
        assert_relative_eq!(analytic_1d(2.0, -3.0, 0.5, 1.0).unwrap(), -0.25);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(analytic_1d(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(analytic_1d(1.0, 1.0, 0.0, 0.5).is_err());
        assert!(regime_of(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn linear_solve_reproduces_linear_solution() {
        let mesh = build_mesh(&MeshSpec::unit_interval(16, BoundaryTag::Gamma2)).unwrap();
        let space = FemSpace::new(mesh).unwrap();
        let u = linear_solve(
            &space,
            &CoefficientField::Uniform(1.0),
            &CoefficientField::Uniform(0.0),
            &TractionField::Uniform(0.7),
        )
        .unwrap();
        for (p, v) in space.mesh().nodes().iter().zip(u.values()) {
            assert_relative_eq!(*v, 0.7 * p[0], epsilon = 1e-13);
        }
        let zero = linear_solve(
            &space,
            &CoefficientField::Uniform(1.0),
            &CoefficientField::Uniform(0.0),
            &TractionField::zero(),
        )
        .unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn boundary_conditions_hold(mu in 0.1f64..5.0, f0 in -20.0f64..20.0, g in 0.05f64..3.0) {
            prop_assert_eq!(analytic_1d(mu, f0, g, 0.0).unwrap(), 0.0);
            let u1 = analytic_1d(mu, f0, g, 1.0).unwrap();
            let du1 = analytic_1d_derivative(mu, f0, g, 1.0).unwrap();
            prop_assert!(du1.abs() <= g * (1.0 + 1e-12));
            if u1.abs() > 1e-12 {
                prop_assert!((du1 + g * u1.signum()).abs() <= 1e-12 * (1.0 + g));
            }
            // -μu'' = f₀
            let h = 1e-3;
            let second = (analytic_1d(mu, f0, g, 0.5 + h).unwrap() - 2.0 * analytic_1d(mu, f0, g, 0.5).unwrap()
                + analytic_1d(mu, f0, g, 0.5 - h).unwrap()) / (h * h);
            prop_assert!((-mu * second - f0).abs() <= 1e-5 * (1.0 + f0.abs()));
        }

        #[test]
        fn continuous_at_thresholds(mu in 0.1f64..5.0, g in 0.05f64..3.0, x in 0.0f64..1.0) {
            let t = 2.0 * mu * g;
            let d1 = branch_value(Regime::Stick, mu, t, g, x) - branch_value(Regime::SlipPositiveFlux, mu, t, g, x);
            let d2 = branch_value(Regime::Stick, mu, -t, g, x) - branch_value(Regime::SlipNegativeFlux, mu, -t, g, x);
            prop_assert!(d1.abs() <= 1e-12 && d2.abs() <= 1e-12);
        }

        #[test]
        fn finite_difference_sensitivity_is_bounded(mu in 0.5f64..3.0, f0 in -10.0f64..10.0, g in 0.2f64..2.0, x in 0.0f64..1.0) {
            // on mu in [0.5, 3], |f0| <= 10, g in [0.2, 2]: |du/dmu| <= 15/mu², |du/df0| <= 1.5/mu, |du/dg| <= 1
            let h = 1e-6;
            let u = analytic_1d(mu, f0, g, x).unwrap();
            let dmu = (analytic_1d(mu + h, f0, g, x).unwrap() - u) / h;
            let df0 = (analytic_1d(mu, f0 + h, g, x).unwrap() - u) / h;
            let dg = (analytic_1d(mu, f0, g + h, x).unwrap() - u) / h;
            prop_assert!(dmu.abs() <= 15.0 / (mu * mu) + 1e-3);
            prop_assert!(df0.abs() <= 1.5 / mu + 1e-3);
            prop_assert!(dg.abs() <= 1.0 + 1e-3);
        }
    }
}
