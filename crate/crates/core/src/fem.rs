//! Piecewise linear finite element assembly: the bilinear form a, the load
//! functional f, the friction functional j and the norm of V.

use std::sync::OnceLock;

use crate::constants::DiscreteConstants;
use crate::error::{Error, Result};
use crate::field::{CoefficientField, FrictionBound, ScalarField, TractionField};
use crate::linalg::{BandCholesky, CsrMatrix};
use crate::mesh::{BoundaryTag, Element, Mesh, Point};

/// Element gradients of the P1 basis: `(measure, grads)` with one gradient per local node.
fn element_gradients(mesh: &Mesh, e: usize) -> (f64, Vec<[f64; 2]>) {
    let m = mesh.element_measure(e);
    match *mesh.elements().get(e).unwrap() {
        Element::Segment([a, b]) => {
            let h = mesh.node(b)[0] - mesh.node(a)[0];
            (m, vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]])
        }
        Element::Triangle([a, b, c]) => {
            let (p, q, r) = (mesh.node(a), mesh.node(b), mesh.node(c));
            let twice = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
            let grad = |s: Point, t: Point| [(s[1] - t[1]) / twice, (t[0] - s[0]) / twice];
            (m, vec![grad(q, r), grad(r, p), grad(p, q)])
        }
    }
}

/// Stiffness matrix of `a(v, w) = ∫ μ ∇v·∇w` on all mesh nodes.
///
/// Rejects coefficients that are not bounded below by a positive constant.
pub fn assemble_stiffness(mesh: &Mesh, mu: &CoefficientField) -> Result<CsrMatrix> {
    mu.check_len(mesh)?;
    let mu_star = mu.min();
    if !(mu_star > 0.0) || !mu_star.is_finite() {
        return Err(Error::InvalidData(format!(
            "Lame coefficient must satisfy mu >= mu* > 0, got min {mu_star}"
        )));
    }
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (e, element) in mesh.elements().iter().enumerate() {
        let (measure, grads) = element_gradients(mesh, e);
        let coef = mu.value(e) * measure;
        let nodes = element.nodes();
        for (i, &ni) in nodes.iter().enumerate() {
            for (j, &nj) in nodes.iter().enumerate() {
                let g = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                triplets.push((ni, nj, coef * g));
            }
        }
    }
    let n = mesh.num_nodes();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Consistent L²(D) mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for (e, element) in mesh.elements().iter().enumerate() {
        let m = mesh.element_measure(e);
        let nodes = element.nodes();
        // 1D: h/6 (1 + δij); 2D: A/12 (1 + δij)
        let base = if nodes.len() == 2 { m / 6.0 } else { m / 12.0 };
        for (i, &ni) in nodes.iter().enumerate() {
            for (j, &nj) in nodes.iter().enumerate() {
                triplets.push((ni, nj, if i == j { 2.0 * base } else { base }));
            }
        }
    }
    let n = mesh.num_nodes();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Nodal array `F` with `Fᵀv = ∫ f₀ v dx + ∫_{Γ₂} f₂ v da`.
pub fn assemble_load(mesh: &Mesh, f0: &CoefficientField, f2: &TractionField) -> Result<Vec<f64>> {
    f0.check_len(mesh)?;
    let mut load = vec![0.0; mesh.num_nodes()];
    for (e, element) in mesh.elements().iter().enumerate() {
        let nodes = element.nodes();
        let share = f0.value(e) * mesh.element_measure(e) / nodes.len() as f64;
        for &n in nodes {
            load[n] += share;
        }
    }
    let gamma2: Vec<_> = mesh.facets_with_tag(BoundaryTag::Gamma2).collect();
    if let TractionField::PerFacet(v) = f2 {
        if v.len() != gamma2.len() {
            return Err(Error::InvalidData(format!(
                "traction field has {} values for {} Gamma2 facets",
                v.len(),
                gamma2.len()
            )));
        }
    }
    if gamma2.is_empty() && !f2.is_zero() {
        log::warn!("traction f2 given but Gamma2 is empty; surface term dropped");
    }
    for (k, facet) in gamma2.iter().enumerate() {
        let nodes = facet.facet.nodes();
        let share = f2.value(k) * facet.measure / nodes.len() as f64;
        for &n in nodes {
            load[n] += share;
        }
    }
    Ok(load)
}

/// Lumped Γ₃ quadrature of `j(η, v) = ∫_{Γ₃} g(|η|) |v| da`.
pub fn eval_j(mesh: &Mesh, g: &FrictionBound, eta: &ScalarField, v: &ScalarField) -> f64 {
    eval_j_weighted(mesh, &mesh.gamma3_weights(), g, eta, v)
}

fn eval_j_weighted(
    mesh: &Mesh,
    weights: &[(usize, f64)],
    g: &FrictionBound,
    eta: &ScalarField,
    v: &ScalarField,
) -> f64 {
    weights
        .iter()
        .map(|&(i, w)| w * g.eval(mesh.node(i), eta.values()[i].abs()) * v.values()[i].abs())
        .sum()
}

/// `‖v‖_V = (∫ v² + |∇v|²)^{1/2}`.
pub fn v_norm(mesh: &Mesh, v: &ScalarField) -> f64 {
    let h1 = assemble_mass(mesh).add(&assemble_stiffness(mesh, &CoefficientField::Uniform(1.0)).unwrap());
    h1.quad_form(v.values()).max(0.0).sqrt()
}

/// A mesh together with the operators every solver needs: the free degrees
/// of freedom (nodes off Γ₁), mass, unit stiffness and the V Gram matrix.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Mesh,
    free: Vec<usize>,
    dof_of_node: Vec<Option<usize>>,
    mass: CsrMatrix,
    laplace: CsrMatrix,
    gram: CsrMatrix,
    gram_free: CsrMatrix,
    gram_chol: BandCholesky,
    gamma3: Vec<(usize, f64)>,
    gamma2_measures: Vec<f64>,
    constants: OnceLock<DiscreteConstants>,
}

impl FemSpace {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let free: Vec<usize> = (0..mesh.num_nodes()).filter(|&i| !mesh.is_clamped(i)).collect();
        let mut dof_of_node = vec![None; mesh.num_nodes()];
        for (d, &n) in free.iter().enumerate() {
            dof_of_node[n] = Some(d);
        }
        let mass = assemble_mass(&mesh);
        let laplace = assemble_stiffness(&mesh, &CoefficientField::Uniform(1.0))?;
        let gram = mass.add(&laplace);
        let gram_free = gram.principal_submatrix(&free);
        let gram_chol = BandCholesky::factor(&gram_free)?;
        let gamma3 = mesh.gamma3_weights();
        let gamma2_measures = mesh.facets_with_tag(BoundaryTag::Gamma2).map(|f| f.measure).collect();
        Ok(Self {
            mesh,
            free,
            dof_of_node,
            mass,
            laplace,
            gram,
            gram_free,
            gram_chol,
            gamma3,
            gamma2_measures,
            constants: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// Free node indices in increasing order; position = dof index.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn laplace(&self) -> &CsrMatrix {
        &self.laplace
    }

    /// Gram matrix of the V inner product on all nodes.
    pub fn gram(&self) -> &CsrMatrix {
        &self.gram
    }

    pub fn gram_free(&self) -> &CsrMatrix {
        &self.gram_free
    }

    /// `(node, weight)` of the lumped Γ₃ quadrature.
    pub fn gamma3(&self) -> &[(usize, f64)] {
        &self.gamma3
    }

    pub fn gamma2_measures(&self) -> &[f64] {
        &self.gamma2_measures
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&n| full[n]).collect()
    }

    pub fn extend(&self, free_values: &[f64]) -> ScalarField {
        let mut v = vec![0.0; self.num_nodes()];
        for (d, &n) in self.free.iter().enumerate() {
            v[n] = free_values[d];
        }
        ScalarField::new(v)
    }

    pub fn norm(&self, v: &ScalarField) -> f64 {
        self.gram.quad_form(v.values()).max(0.0).sqrt()
    }

    pub fn distance(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        self.norm(&a.sub(b))
    }

    pub fn l2_norm(&self, v: &ScalarField) -> f64 {
        self.mass.quad_form(v.values()).max(0.0).sqrt()
    }

    pub fn gradient_norm(&self, v: &ScalarField) -> f64 {
        self.laplace.quad_form(v.values()).max(0.0).sqrt()
    }

    /// Lumped `‖v‖_{L²(Γ₃)}`, consistent with the quadrature of j.
    pub fn gamma3_norm(&self, v: &ScalarField) -> f64 {
        self.gamma3
            .iter()
            .map(|&(i, w)| w * v.values()[i] * v.values()[i])
            .sum::<f64>()
            .sqrt()
    }

    /// Dual norm `sup_v Fᵀv / ‖v‖_V` of a nodal functional over V_h.
    pub fn dual_norm(&self, functional: &[f64]) -> f64 {
        let f = self.restrict(functional);
        let riesz = self.gram_chol.solve(&f);
        crate::linalg::dot(&f, &riesz).max(0.0).sqrt()
    }

    pub fn eval_j(&self, g: &FrictionBound, eta: &ScalarField, v: &ScalarField) -> f64 {
        eval_j_weighted(&self.mesh, &self.gamma3, g, eta, v)
    }

    pub(crate) fn constants_cell(&self) -> &OnceLock<DiscreteConstants> {
        &self.constants
    }
}
