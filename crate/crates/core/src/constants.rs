//! Discrete Friedrichs–Poincaré and trace constants of V_h and the
//! smallness condition `L_g c₀² c₃² < μ*`.
//!
//! Both constants are square roots of the largest eigenvalue of a symmetric
//! generalized eigenproblem on the free degrees of freedom, found by power
//! iteration with Cholesky inner solves:
//!
//! * `c₀² = λ_max` of `(M + S) v = λ S v`,
//! * `c₃² = λ_max` of `B v = λ (M + S) v`, with `B` the lumped Γ₃ mass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::field::ScalarField;
use crate::linalg::{BandCholesky, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIterationConfig {
    pub seed: u64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            rel_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Constants of one discrete space, with the maximizing fields.
#[derive(Clone, Debug)]
pub struct DiscreteConstants {
    pub c0: f64,
    pub c3: f64,
    pub poincare_field: ScalarField,
    pub trace_field: Option<ScalarField>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantsReport {
    pub c0: f64,
    pub c3: f64,
    /// Contraction factor `k = L_g c₀² c₃² / μ*`.
    pub k: f64,
    pub ok: bool,
}

/// `k = L_g c₀² c₃² / μ*` and whether `k < 1`.
pub fn smallness_margin(lipschitz: f64, c0: f64, c3: f64, mu_star: f64) -> (f64, bool) {
    let k = lipschitz * c0 * c0 * c3 * c3 / mu_star;
    (k, k < 1.0)
}

pub fn poincare_constant(space: &FemSpace, config: &PowerIterationConfig) -> Result<(f64, ScalarField)> {
    let s = space.laplace().principal_submatrix(space.free_nodes());
    let chol = BandCholesky::factor(&s)?;
    let gram = space.gram_free();
    let (lambda, x) = power_iteration(space.num_free(), config, |x| chol.solve(&gram.mul_vec(x)), gram, &s)?;
    Ok((lambda.sqrt(), space.extend(&x)))
}

/// Returns `(0, None)` when Γ₃ is empty.
pub fn trace_constant(space: &FemSpace, config: &PowerIterationConfig) -> Result<(f64, Option<ScalarField>)> {
    if space.gamma3().is_empty() {
        return Ok((0.0, None));
    }
    let n = space.num_free();
    let triplets: Vec<_> = space
        .gamma3()
        .iter()
        .map(|&(node, w)| {
            let d = space.dof_of_node(node).unwrap();
            (d, d, w)
        })
        .collect();
    let b = CsrMatrix::from_triplets(n, n, &triplets);
    let chol = BandCholesky::factor(space.gram_free())?;
    let (lambda, x) = power_iteration(n, config, |x| chol.solve(&b.mul_vec(x)), &b, space.gram_free())?;
    Ok((lambda.sqrt(), Some(space.extend(&x))))
}

/// Power iteration for `A v = λ B v` through `apply = B⁻¹A`; returns the
/// Rayleigh quotient `xᵀAx / xᵀBx` and the normalized iterate.
fn power_iteration(
    n: usize,
    config: &PowerIterationConfig,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    a: &CsrMatrix,
    b: &CsrMatrix,
) -> Result<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let rayleigh = |x: &[f64]| a.quad_form(x) / b.quad_form(x);
    let mut lambda = rayleigh(&x);
    let mut change = f64::INFINITY;
    for _ in 0..config.max_iter {
        let mut y = apply(&x);
        let scale = b.quad_form(&y).sqrt();
        if !(scale > 0.0) {
            return Ok((0.0, y));
        }
        y.iter_mut().for_each(|v| *v /= scale);
        let next = rayleigh(&y);
        change = (next - lambda).abs() / next.abs().max(f64::MIN_POSITIVE);
        x = y;
        lambda = next;
        if change < config.rel_tol {
            return Ok((lambda, x));
        }
    }
    Err(Error::EigenNotConverged {
        iterations: config.max_iter,
        residual: change,
    })
}

/// Cached constants of a space, computed on first use with the default configuration.
pub fn discrete_constants(space: &FemSpace) -> Result<&DiscreteConstants> {
    if let Some(c) = space.constants_cell().get() {
        return Ok(c);
    }
    let config = PowerIterationConfig::default();
    let (c0, poincare_field) = poincare_constant(space, &config)?;
    let (c3, trace_field) = trace_constant(space, &config)?;
    let _ = space.constants_cell().set(DiscreteConstants {
        c0,
        c3,
        poincare_field,
        trace_field,
    });
    Ok(space.constants_cell().get().unwrap())
}

pub fn constants_report(space: &FemSpace, lipschitz: f64, mu_star: f64) -> Result<ConstantsReport> {
    let c = discrete_constants(space)?;
    let (k, ok) = smallness_margin(lipschitz, c.c0, c.c3, mu_star);
    Ok(ConstantsReport {
        c0: c.c0,
        c3: c.c3,
        k,
        ok,
    })
}
