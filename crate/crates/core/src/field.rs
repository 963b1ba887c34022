//! Discrete fields and problem data living on a [`Mesh`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Point};

/// Nodal coefficients of a piecewise linear field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self(mesh.nodes().iter().map(|&p| f(p)).collect())
    }

    /// Nodal interpolant of `f` with Γ₁ values forced to zero.
    pub fn interpolate_in_v(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self(
            (0..mesh.num_nodes())
                .map(|i| if mesh.is_clamped(i) { 0.0 } else { f(mesh.node(i)) })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Largest nodal magnitude on Γ₁; zero for elements of V.
    pub fn clamped_defect(&self, mesh: &Mesh) -> f64 {
        mesh.nodes_with_tag(BoundaryTag::Gamma1)
            .map(|i| self.0[i].abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.0.iter().zip(&other.0).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Element-wise constant data (μ, f₀), sampled at element midpoints.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientField {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl CoefficientField {
    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self::PerElement((0..mesh.num_elements()).map(|e| f(mesh.element_midpoint(e))).collect())
    }

    pub fn value(&self, element: usize) -> f64 {
        match self {
            Self::Uniform(c) => *c,
            Self::PerElement(v) => v[element],
        }
    }

    pub fn check_len(&self, mesh: &Mesh) -> Result<()> {
        match self {
            Self::PerElement(v) if v.len() != mesh.num_elements() => Err(Error::InvalidData(format!(
                "coefficient field has {} values for {} elements",
                v.len(),
                mesh.num_elements()
            ))),
            _ => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Self::Uniform(c) => *c,
            Self::PerElement(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// `self + s * other`, element by element.
    pub fn add_scaled(&self, s: f64, other: &CoefficientField, mesh: &Mesh) -> Self {
        match (self, other) {
            (Self::Uniform(a), Self::Uniform(b)) => Self::Uniform(a + s * b),
            _ => Self::PerElement(
                (0..mesh.num_elements())
                    .map(|e| self.value(e) + s * other.value(e))
                    .collect(),
            ),
        }
    }

    /// Discrete `L∞` distance.
    pub fn sup_distance(&self, other: &CoefficientField, mesh: &Mesh) -> f64 {
        (0..mesh.num_elements())
            .map(|e| (self.value(e) - other.value(e)).abs())
            .fold(0.0, f64::max)
    }
}

/// Traction density f₂ on Γ₂, constant per Γ₂ facet in [`Mesh::facets_with_tag`] order.
#[derive(Clone, Debug, PartialEq)]
pub enum TractionField {
    Uniform(f64),
    PerFacet(Vec<f64>),
}

impl TractionField {
    pub fn zero() -> Self {
        Self::Uniform(0.0)
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self::PerFacet(
            mesh.facets_with_tag(BoundaryTag::Gamma2)
                .map(|facet| f(mesh.facet_midpoint(facet)))
                .collect(),
        )
    }

    pub fn value(&self, gamma2_facet: usize) -> f64 {
        match self {
            Self::Uniform(c) => *c,
            Self::PerFacet(v) => v[gamma2_facet],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Uniform(c) => *c == 0.0,
            Self::PerFacet(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    pub fn add_scaled(&self, s: f64, other: &TractionField, mesh: &Mesh) -> Self {
        match (self, other) {
            (Self::Uniform(a), Self::Uniform(b)) => Self::Uniform(a + s * b),
            _ => {
                let n = mesh.facets_with_tag(BoundaryTag::Gamma2).count();
                Self::PerFacet((0..n).map(|k| self.value(k) + s * other.value(k)).collect())
            }
        }
    }
}

type BoundRule = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// Slip-dependent friction bound `g(x, r)` together with its declared Lipschitz constant in `r`.
#[derive(Clone)]
pub struct FrictionBound {
    rule: Arc<BoundRule>,
    lipschitz: f64,
    label: String,
}

impl fmt::Debug for FrictionBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrictionBound")
            .field("label", &self.label)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl FrictionBound {
    pub fn from_fn(
        lipschitz: f64,
        label: impl Into<String>,
        rule: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            rule: Arc::new(rule),
            lipschitz,
            label: label.into(),
        }
    }

    pub fn constant(g0: f64) -> Self {
        Self::from_fn(0.0, format!("constant {g0}"), move |_, _| g0)
    }

    /// `g(x, r) = a + b |r|`.
    pub fn affine(a: f64, b: f64) -> Self {
        Self::from_fn(b.abs(), format!("affine {a} {b}"), move |_, r| a + b * r.abs())
    }

    /// `g + delta (a + b |r|)`, the friction perturbation used by the sequence harness.
    pub fn perturbed(&self, delta: f64, a: f64, b: f64) -> Self {
        let base = self.rule.clone();
        Self::from_fn(
            self.lipschitz + (delta * b).abs(),
            format!("{} + {delta}({a} + {b}|r|)", self.label),
            move |x, r| base(x, r) + delta * (a + b * r.abs()),
        )
    }

    pub fn eval(&self, x: Point, r: f64) -> f64 {
        (self.rule)(x, r)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Spot-checks nonnegativity and the declared Lipschitz bound at the
    /// given boundary points with `samples` random slip pairs each.
    pub fn check<R: Rng>(&self, points: &[Point], samples: usize, rng: &mut R) -> Result<()> {
        for &x in points {
            for _ in 0..samples {
                let r1: f64 = rng.gen_range(-10.0..10.0);
                let r2: f64 = rng.gen_range(-10.0..10.0);
                let (g1, g2) = (self.eval(x, r1), self.eval(x, r2));
                if g1 < 0.0 || !g1.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "g({x:?}, {r1}) = {g1} is not a nonnegative number"
                    )));
                }
                if (g1 - g2).abs() > self.lipschitz * (r1 - r2).abs() * (1.0 + 1e-12) + 1e-14 {
                    return Err(Error::InvalidData(format!(
                        "g violates the declared Lipschitz constant {} between r = {r1} and r = {r2}",
                        self.lipschitz
                    )));
                }
            }
        }
        Ok(())
    }
}
