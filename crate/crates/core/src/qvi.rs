//! Solver for the slip-dependent friction quasivariational inequality
//!
//! ```text
//! a(u, v - u) + j(u, v) - j(u, u) >= (f, v - u)   for all v in V
//! ```
//!
//! The outer loop freezes the slip argument of `j` and iterates
//! `η ↦ u(η)`, where `u(η)` minimizes the convex nonsmooth energy
//! `½ vᵀKv - Fᵀv + Σ_Γ₃ wᵢ g(xᵢ, |ηᵢ|) |vᵢ|`. The map is a contraction with
//! factor `k = L_g c₀² c₃² / μ*` when `k < 1`.
//!
//! The inner minimization eliminates the smooth (non-contact) unknowns
//! exactly with a Cholesky factorization and runs cyclic coordinate descent
//! with exact soft-thresholding on the remaining Γ₃ unknowns.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::constants_report;
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, FemSpace};
use crate::field::{CoefficientField, FrictionBound, ScalarField, TractionField};
use crate::linalg::{dot, BandCholesky, CsrMatrix};
use crate::mesh::Mesh;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Outer stop: `‖η_{m+1} - η_m‖_V` below this.
    pub outer_tol: f64,
    /// Inner stop: largest coordinate update below this.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Run even when `k >= 1`.
    pub allow_noncontraction: bool,
    /// Observed ratios may exceed `k` by this much.
    pub ratio_slack: f64,
    /// Seed for the random directions of the final membership check; `None` skips the check.
    pub membership_seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-10,
            inner_tol: 1e-12,
            max_outer: 200,
            max_inner: 50_000,
            allow_noncontraction: false,
            ratio_slack: 0.05,
            membership_seed: None,
        }
    }
}

/// One instance of the contact problem: `(μ, f₀, f₂, g)` on a discrete space.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub space: Arc<FemSpace>,
    pub mu: CoefficientField,
    pub f0: CoefficientField,
    pub f2: TractionField,
    pub g: FrictionBound,
}

impl ProblemData {
    pub fn new(
        space: Arc<FemSpace>,
        mu: CoefficientField,
        f0: CoefficientField,
        f2: TractionField,
        g: FrictionBound,
    ) -> Result<Self> {
        mu.check_len(space.mesh())?;
        f0.check_len(space.mesh())?;
        if !(mu.min() > 0.0) {
            return Err(Error::InvalidData(format!("mu* = {} must be positive", mu.min())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9);
        let points: Vec<_> = space.gamma3().iter().map(|&(n, _)| space.mesh().node(n)).collect();
        g.check(&points, 8, &mut rng)?;
        Ok(Self { space, mu, f0, f2, g })
    }

    pub fn mesh(&self) -> &Mesh {
        self.space.mesh()
    }

    pub fn mu_star(&self) -> f64 {
        self.mu.min()
    }

    pub fn stiffness(&self) -> Result<CsrMatrix> {
        assemble_stiffness(self.mesh(), &self.mu)
    }

    pub fn load(&self) -> Result<Vec<f64>> {
        assemble_load(self.mesh(), &self.f0, &self.f2)
    }

    /// `k = L_g c₀² c₃² / μ*`; zero without Γ₃ or for slip-independent bounds.
    pub fn contraction_factor(&self) -> Result<f64> {
        contraction_factor(&self.space, &self.g, self.mu_star())
    }

    pub fn with_mu(&self, mu: CoefficientField) -> Result<Self> {
        Self::new(self.space.clone(), mu, self.f0.clone(), self.f2.clone(), self.g.clone())
    }

    pub fn with_f0(&self, f0: CoefficientField) -> Self {
        Self { f0, ..self.clone() }
    }

    pub fn with_f2(&self, f2: TractionField) -> Self {
        Self { f2, ..self.clone() }
    }

    pub fn with_g(&self, g: FrictionBound) -> Self {
        Self { g, ..self.clone() }
    }
}

fn contraction_factor(space: &FemSpace, g: &FrictionBound, mu_star: f64) -> Result<f64> {
    if g.lipschitz() == 0.0 || space.gamma3().is_empty() {
        return Ok(0.0);
    }
    Ok(constants_report(space, g.lipschitz(), mu_star)?.k)
}

/// Index `θ = (ε, f̃₀, f̃₂, g̃)` of an approximating set Ω(θ).
#[derive(Clone, Debug)]
pub struct TykhonovIndex {
    pub eps: f64,
    pub f0: CoefficientField,
    pub f2: TractionField,
    pub g: FrictionBound,
}

impl TykhonovIndex {
    /// `θ = (0, f₀, f₂, g)`: Ω(θ) is the solution set of the problem itself.
    pub fn exact(problem: &ProblemData) -> Self {
        Self {
            eps: 0.0,
            f0: problem.f0.clone(),
            f2: problem.f2.clone(),
            g: problem.g.clone(),
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub outer_iterations: usize,
    /// `‖u_{m} - u_{m-1}‖_V` per outer iteration (`u_0 = 0`).
    pub increments: Vec<f64>,
    /// Ratios of consecutive increments, from iteration 2 on.
    pub ratios: Vec<f64>,
    pub inner_sweeps: Vec<usize>,
    pub contraction_factor: f64,
    /// `k < 1`.
    pub contraction: bool,
    /// Every observed ratio is at most `k + ratio_slack`.
    pub ratios_within_bound: bool,
    pub membership_violation: Option<f64>,
}

/// Minimizer of `½ vᵀKv - Fᵀv + Σ cᵢ|v_{pᵢ}|` over the free dofs, with the
/// contact dofs `pᵢ` fixed at construction and the weights `cᵢ ≥ 0` per solve.
#[derive(Clone, Debug)]
pub struct TrescaSolver {
    n: usize,
    smooth: Vec<usize>,
    contact: Vec<usize>,
    chol: Option<BandCholesky>,
    // rows of K restricted to (contact, smooth)
    coupling_rows: Vec<Vec<(usize, f64)>>,
    // columns K_ss⁻¹ K_sc, one per contact dof
    lifted: Vec<Vec<f64>>,
    schur: Vec<f64>,
    tol: f64,
    max_sweeps: usize,
}

#[derive(Clone, Debug)]
pub struct TrescaOutcome {
    pub solution: Vec<f64>,
    pub sweeps: usize,
    /// Energy of the recovered field after each sweep.
    pub energies: Vec<f64>,
}

impl TrescaSolver {
    pub fn new(k_free: &CsrMatrix, contact: &[usize], tol: f64, max_sweeps: usize) -> Result<Self> {
        let n = k_free.nrows();
        let mut is_contact = vec![false; n];
        for &c in contact {
            is_contact[c] = true;
        }
        let smooth: Vec<usize> = (0..n).filter(|&i| !is_contact[i]).collect();
        let mut smooth_pos = vec![usize::MAX; n];
        for (p, &s) in smooth.iter().enumerate() {
            smooth_pos[s] = p;
        }
        let chol = if smooth.is_empty() {
            None
        } else {
            Some(BandCholesky::factor(&k_free.principal_submatrix(&smooth))?)
        };
        let coupling_rows: Vec<Vec<(usize, f64)>> = contact
            .iter()
            .map(|&c| {
                k_free
                    .row(c)
                    .filter(|&(j, _)| !is_contact[j])
                    .map(|(j, v)| (smooth_pos[j], v))
                    .collect()
            })
            .collect();
        let m = contact.len();
        let lifted: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut col = vec![0.0; smooth.len()];
                // K symmetric: column K_sc[:, j] equals the coupling row of contact j
                for &(p, v) in &coupling_rows[j] {
                    col[p] = v;
                }
                if let Some(chol) = &chol {
                    chol.solve_in_place(&mut col);
                }
                col
            })
            .collect();
        let mut schur = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let correction: f64 = coupling_rows[i].iter().map(|&(p, v)| v * lifted[j][p]).sum();
                schur[i * m + j] = k_free.get(contact[i], contact[j]) - correction;
            }
            if !(schur[i * m + i] > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    pivot: contact[i],
                    value: schur[i * m + i],
                });
            }
        }
        Ok(Self {
            n,
            smooth,
            contact: contact.to_vec(),
            chol,
            coupling_rows,
            lifted,
            schur,
            tol,
            max_sweeps,
        })
    }

    pub fn contact_dofs(&self) -> &[usize] {
        &self.contact
    }

    /// `weights[i]` multiplies `|v|` at `contact_dofs()[i]`; `warm` is an optional
    /// starting point for the contact unknowns.
    pub fn solve(&self, load: &[f64], weights: &[f64], warm: Option<&[f64]>) -> Result<TrescaOutcome> {
        assert_eq!(load.len(), self.n);
        assert_eq!(weights.len(), self.contact.len());
        let mut y: Vec<f64> = self.smooth.iter().map(|&s| load[s]).collect();
        if let Some(chol) = &self.chol {
            chol.solve_in_place(&mut y);
        }
        let m = self.contact.len();
        let b: Vec<f64> = (0..m)
            .map(|i| load[self.contact[i]] - self.coupling_rows[i].iter().map(|&(p, v)| v * y[p]).sum::<f64>())
            .collect();
        // min over the smooth block of the full energy at z = 0
        let offset = -0.5 * self.smooth.iter().zip(&y).map(|(&s, yi)| load[s] * yi).sum::<f64>();
        let mut z = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; m]);
        let energy = |z: &[f64]| {
            let mut e = offset;
            for i in 0..m {
                let row = &self.schur[i * m..(i + 1) * m];
                e += 0.5 * z[i] * dot(row, z) - b[i] * z[i] + weights[i] * z[i].abs();
            }
            e
        };
        let mut energies = Vec::new();
        let mut sweeps = 0;
        if m > 0 {
            let mut last = energy(&z);
            loop {
                if sweeps == self.max_sweeps {
                    return Err(Error::InnerNotConverged {
                        sweeps,
                        last_update: f64::NAN,
                    });
                }
                sweeps += 1;
                let mut max_update: f64 = 0.0;
                for i in 0..m {
                    let row = &self.schur[i * m..(i + 1) * m];
                    let diag = row[i];
                    let r = b[i] - dot(row, &z) + diag * z[i];
                    let next = soft_threshold(r, weights[i]) / diag;
                    max_update = max_update.max((next - z[i]).abs());
                    z[i] = next;
                }
                let e = energy(&z);
                debug_assert!(
                    e <= last + 1e-12 * (1.0 + last.abs()),
                    "energy increased: {last} -> {e}"
                );
                energies.push(e);
                last = e;
                if max_update < self.tol {
                    break;
                }
                if sweeps == self.max_sweeps {
                    return Err(Error::InnerNotConverged {
                        sweeps,
                        last_update: max_update,
                    });
                }
            }
        }
        for (j, col) in self.lifted.iter().enumerate() {
            if z[j] != 0.0 {
                crate::linalg::axpy(-z[j], col, &mut y);
            }
        }
        let mut solution = vec![0.0; self.n];
        for (p, &s) in self.smooth.iter().enumerate() {
            solution[s] = y[p];
        }
        for (i, &c) in self.contact.iter().enumerate() {
            solution[c] = z[i];
        }
        Ok(TrescaOutcome {
            solution,
            sweeps,
            energies,
        })
    }
}

/// Exact minimizer numerator of `½ d x² - r x + c|x|`: the solution is `soft(r, c) / d`.
fn soft_threshold(r: f64, c: f64) -> f64 {
    if r > c {
        r - c
    } else if r < -c {
        r + c
    } else {
        0.0
    }
}

/// Energy `½ vᵀKv - Fᵀv + Σ cᵢ|v_{pᵢ}|` on free dofs.
pub fn tresca_energy(k_free: &CsrMatrix, load: &[f64], bounds: &[(usize, f64)], v: &[f64]) -> f64 {
    0.5 * k_free.quad_form(v) - dot(load, v) + bounds.iter().map(|&(p, c)| c * v[p].abs()).sum::<f64>()
}

/// One-shot Tresca solve on the free dofs; `bounds` holds `(dof, wᵢGᵢ)` pairs.
pub fn solve_tresca(
    k_free: &CsrMatrix,
    load: &[f64],
    bounds: &[(usize, f64)],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let contact: Vec<usize> = bounds.iter().map(|&(p, _)| p).collect();
    let weights: Vec<f64> = bounds.iter().map(|&(_, c)| c).collect();
    let solver = TrescaSolver::new(k_free, &contact, config.inner_tol, config.max_inner)?;
    Ok(solver.solve(load, &weights, None)?.solution)
}

/// Fixed-point solver for one stiffness operator, reusable across loads and friction bounds.
#[derive(Clone, Debug)]
pub struct QviSolver {
    space: Arc<FemSpace>,
    stiffness: CsrMatrix,
    mu_star: f64,
    tresca: TrescaSolver,
    // (node, weight) per contact dof, aligned with tresca.contact_dofs()
    contact_nodes: Vec<(usize, f64)>,
    config: SolverConfig,
}

impl QviSolver {
    pub fn new(space: Arc<FemSpace>, mu: &CoefficientField, config: SolverConfig) -> Result<Self> {
        let stiffness = assemble_stiffness(space.mesh(), mu)?;
        let k_free = stiffness.principal_submatrix(space.free_nodes());
        let contact_nodes = space.gamma3().to_vec();
        let contact: Vec<usize> = contact_nodes
            .iter()
            .map(|&(n, _)| space.dof_of_node(n).expect("contact node is free"))
            .collect();
        let tresca = TrescaSolver::new(&k_free, &contact, config.inner_tol, config.max_inner)?;
        Ok(Self {
            space,
            stiffness,
            mu_star: mu.min(),
            tresca,
            contact_nodes,
            config,
        })
    }

    pub fn for_problem(problem: &ProblemData, config: SolverConfig) -> Result<Self> {
        Self::new(problem.space.clone(), &problem.mu, config)
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Solves with the nodal load `load` (all nodes) and friction bound `g`.
    pub fn solve(&self, load: &[f64], g: &FrictionBound) -> Result<(ScalarField, SolveReport)> {
        let space = &self.space;
        let k = contraction_factor(space, g, self.mu_star)?;
        if k >= 1.0 {
            if !self.config.allow_noncontraction {
                return Err(Error::SmallnessViolated { k });
            }
            log::warn!("contraction factor k = {k:.4} >= 1; fixed-point convergence is not guaranteed");
        }
        let load_free = space.restrict(load);
        let mut eta = ScalarField::zeros(space.num_nodes());
        let mut warm: Option<Vec<f64>> = None;
        let mut report = SolveReport {
            contraction_factor: k,
            contraction: k < 1.0,
            ..Default::default()
        };
        let mesh = space.mesh();
        for m in 1..=self.config.max_outer {
            let weights: Vec<f64> = self
                .contact_nodes
                .iter()
                .map(|&(n, w)| w * g.eval(mesh.node(n), eta.values()[n].abs()))
                .collect();
            let outcome = self.tresca.solve(&load_free, &weights, warm.as_deref())?;
            warm = Some(
                self.tresca
                    .contact_dofs()
                    .iter()
                    .map(|&c| outcome.solution[c])
                    .collect(),
            );
            let u = space.extend(&outcome.solution);
            let increment = space.distance(&u, &eta);
            if let Some(&prev) = report.increments.last() {
                report.ratios.push(increment / prev);
            }
            report.increments.push(increment);
            report.inner_sweeps.push(outcome.sweeps);
            report.outer_iterations = m;
            eta = u;
            if increment < self.config.outer_tol {
                report.ratios_within_bound = report.ratios.iter().all(|&r| r <= k + self.config.ratio_slack);
                if k < 1.0 && !report.ratios_within_bound {
                    log::warn!("observed contraction ratio above k + slack");
                }
                if let Some(seed) = self.config.membership_seed {
                    let theta = MembershipData { eps: 0.0, load, g };
                    let dirs = standard_directions(space, &eta, seed, 100);
                    report.membership_violation = Some(self.violation(&eta, &theta, &dirs));
                }
                return Ok((eta, report));
            }
        }
        Err(Error::OuterNotConverged {
            iterations: self.config.max_outer,
            last_increment: report.increments.last().copied().unwrap_or(f64::NAN),
        })
    }

    fn violation(&self, u: &ScalarField, theta: &MembershipData<'_>, directions: &[Direction]) -> f64 {
        violation_with(&self.space, &self.stiffness, u, theta, directions)
    }
}

/// Solves the problem from `η₀ = 0`.
pub fn solve_qvi(problem: &ProblemData, config: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    let solver = QviSolver::for_problem(problem, config.clone())?;
    solver.solve(&problem.load()?, &problem.g)
}

/// Test field for the inequality, as a displacement `d = v - u`.
#[derive(Clone, Debug)]
pub enum Direction {
    /// `d = scale · eᵢ` at a free node.
    Basis {
        node: usize,
        scale: f64,
    },
    Field(ScalarField),
}

/// `±eᵢ` at every free node, `seeded` random fields, and `v = 0`, `v = 2u`.
pub fn standard_directions(space: &FemSpace, u: &ScalarField, seed: u64, random: usize) -> Vec<Direction> {
    let mut dirs = Vec::with_capacity(2 * space.num_free() + random + 2);
    for &node in space.free_nodes() {
        dirs.push(Direction::Basis { node, scale: 1.0 });
        dirs.push(Direction::Basis { node, scale: -1.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let free: Vec<f64> = (0..space.num_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        dirs.push(Direction::Field(space.extend(&free)));
    }
    dirs.push(Direction::Field(u.scaled(-1.0)));
    dirs.push(Direction::Field(u.clone()));
    dirs
}

struct MembershipData<'a> {
    eps: f64,
    load: &'a [f64],
    g: &'a FrictionBound,
}

fn violation_with(
    space: &FemSpace,
    stiffness: &CsrMatrix,
    u: &ScalarField,
    theta: &MembershipData<'_>,
    directions: &[Direction],
) -> f64 {
    let mesh = space.mesh();
    let ku = stiffness.mul_vec(u.values());
    let residual: Vec<f64> = theta.load.iter().zip(&ku).map(|(f, k)| f - k).collect();
    let contact: BTreeMap<usize, f64> = space
        .gamma3()
        .iter()
        .map(|&(n, w)| (n, w * theta.g.eval(mesh.node(n), u.values()[n].abs())))
        .collect();
    let u_norm = space.norm(u);
    let uv = u.values();
    let mut worst: f64 = 0.0;
    for d in directions {
        let value = match d {
            Direction::Basis { node, scale } => {
                let lin = residual[*node] * scale;
                let dj = contact
                    .get(node)
                    .map_or(0.0, |c| c * ((uv[*node] + scale).abs() - uv[*node].abs()));
                let d_norm = scale.abs() * space.gram().get(*node, *node).sqrt();
                lin - dj - theta.eps * u_norm * d_norm
            }
            Direction::Field(d) => {
                let dv = d.values();
                let lin = dot(&residual, dv);
                let dj: f64 = contact
                    .iter()
                    .map(|(&n, c)| c * ((uv[n] + dv[n]).abs() - uv[n].abs()))
                    .sum();
                lin - dj - theta.eps * u_norm * space.norm(d)
            }
        };
        worst = worst.max(value);
    }
    worst
}

/// Largest positive part of `(F̃, v-u) - a(u, v-u) - j̃(u, v) + j̃(u, u) - ε‖u‖‖v-u‖`
/// over `directions`, with `a` taken from `problem` and the rest from `theta`.
pub fn membership_violation(
    problem: &ProblemData,
    u: &ScalarField,
    theta: &TykhonovIndex,
    directions: &[Direction],
) -> Result<f64> {
    let stiffness = problem.stiffness()?;
    let load = assemble_load(problem.mesh(), &theta.f0, &theta.f2)?;
    let data = MembershipData {
        eps: theta.eps,
        load: &load,
        g: &theta.g,
    };
    Ok(violation_with(&problem.space, &stiffness, u, &data, directions))
}

/// Γ₃ contact state recovered from a discrete solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactState {
    pub node: usize,
    /// Boundary traction `μ ∂_ν u ≈ (Ku - F)ᵢ / wᵢ`.
    pub traction: f64,
    /// Friction bound `Gᵢ = g(xᵢ, |uᵢ|)`.
    pub bound: f64,
    pub displacement: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complementarity {
    /// `max (|λᵢ| - Gᵢ)`.
    pub bound_excess: f64,
    /// `max (λᵢ uᵢ + Gᵢ |uᵢ|)`.
    pub slip_defect: f64,
}

pub fn contact_states(problem: &ProblemData, u: &ScalarField) -> Result<Vec<ContactState>> {
    let ku = problem.stiffness()?.mul_vec(u.values());
    let load = problem.load()?;
    let mesh = problem.mesh();
    Ok(problem
        .space
        .gamma3()
        .iter()
        .map(|&(n, w)| {
            let displacement = u.values()[n];
            ContactState {
                node: n,
                traction: (ku[n] - load[n]) / w,
                bound: problem.g.eval(mesh.node(n), displacement.abs()),
                displacement,
            }
        })
        .collect())
}

/// Discrete friction law on Γ₃: `|λ| ≤ G` and `λu = -G|u|`.
pub fn complementarity(problem: &ProblemData, u: &ScalarField) -> Result<Complementarity> {
    let states = contact_states(problem, u)?;
    Ok(states.iter().fold(
        Complementarity {
            bound_excess: f64::NEG_INFINITY,
            slip_defect: f64::NEG_INFINITY,
        },
        |acc, s| Complementarity {
            bound_excess: acc.bound_excess.max(s.traction.abs() - s.bound),
            slip_defect: acc
                .slip_defect
                .max(s.traction * s.displacement + s.bound * s.displacement.abs()),
        },
    ))
}
