//! Approximating sequences for the contact problem and their convergence.
//!
//! A schedule perturbs one piece of data with a scale `s_n`, solves the
//! perturbed problem for `u_n`, certifies that `u_n` lies in its
//! approximating set `Ω(θ_n)` and measures `e_n = ‖u_n - u‖_V`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{CoefficientField, FrictionBound, ScalarField, TractionField};
use crate::mesh::Point;
use crate::qvi::{
    membership_violation, standard_directions, ProblemData, QviSolver, SolveReport, SolverConfig, TykhonovIndex,
};

/// Scale law `n ↦ s_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    Zero,
    /// `s_n = n^{-p}`.
    Power(f64),
    /// `s_n = rⁿ`.
    Geometric(f64),
    /// `s_n = (-1)ⁿ`; does not vanish.
    Alternating,
}

impl Decay {
    pub fn scale(&self, n: usize) -> f64 {
        match *self {
            Decay::Zero => 0.0,
            Decay::Power(p) => (n as f64).powf(-p),
            Decay::Geometric(r) => r.powi(n as i32),
            Decay::Alternating => {
                if n.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn vanishes(&self) -> bool {
        match *self {
            Decay::Zero => true,
            Decay::Power(p) => p > 0.0,
            Decay::Geometric(r) => r.abs() < 1.0,
            Decay::Alternating => false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScheduleKind {
    /// `ε_n = |s_n|` with unchanged data.
    EpsDecay,
    /// `f₀ₙ = f₀ + s_n · amplitude`.
    LoadPerturb(CoefficientField),
    /// `f₂ₙ = f₂ + s_n · amplitude`.
    TractionPerturb(TractionField),
    /// `gₙ = g + s_n (a + b|r|)`, so `α_n = |s_n a|`, `β_n = |s_n b|`.
    FrictionPerturb { a: f64, b: f64 },
    /// `μₙ = μ + s_n · amplitude`, certified with `ε_n = ‖μₙ - μ‖_∞`.
    LamePerturb(CoefficientField),
    /// `f₀ₙ = target + s_n · amplitude`, converging to `target` instead of `f₀`.
    AdversarialLoad {
        target: CoefficientField,
        amplitude: CoefficientField,
    },
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub decay: Decay,
    pub len: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, decay: Decay, len: usize) -> Self {
        Self { kind, decay, len }
    }

    /// The data converge to the data of the unperturbed problem.
    pub fn is_conforming(&self) -> bool {
        self.decay.vanishes() && !matches!(self.kind, ScheduleKind::AdversarialLoad { .. })
    }
}

#[derive(Clone, Debug)]
pub struct HarnessConfig {
    pub solver: SolverConfig,
    /// Seed of the random membership directions.
    pub seed: u64,
    pub random_directions: usize,
    pub membership_tol: f64,
}

impl HarnessConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            solver: SolverConfig::default(),
            seed,
            random_directions: 100,
            membership_tol: 1e-8,
        }
    }

    /// `max(1e-6, 10 · outer tolerance)`.
    pub fn pass_threshold(&self) -> f64 {
        1e-6f64.max(10.0 * self.solver.outer_tol)
    }
}

#[derive(Clone, Debug)]
pub struct SequenceEntry {
    pub n: usize,
    pub scale: f64,
    pub theta: TykhonovIndex,
    /// Friction envelope `(α_n, β_n)`.
    pub envelope: (f64, f64),
    pub u: ScalarField,
    pub violation: f64,
    pub report: SolveReport,
}

/// Builds `θ_n`, solves the perturbed problem with `ε = 0` and certifies
/// `u_n ∈ Ω(θ_n)`. Entries run in parallel and are returned in order of `n`.
pub fn generate_sequence(
    problem: &ProblemData,
    schedule: &Schedule,
    config: &HarnessConfig,
) -> Result<Vec<SequenceEntry>> {
    let mesh = problem.mesh();
    if let ScheduleKind::LoadPerturb(a) | ScheduleKind::LamePerturb(a) = &schedule.kind {
        a.check_len(mesh)?;
    }
    if let ScheduleKind::AdversarialLoad { target, amplitude } = &schedule.kind {
        target.check_len(mesh)?;
        amplitude.check_len(mesh)?;
    }
    let shared = match schedule.kind {
        ScheduleKind::LamePerturb(_) => None,
        _ => Some(QviSolver::for_problem(problem, config.solver.clone())?),
    };
    let results: Vec<Result<SequenceEntry>> = (1..=schedule.len)
        .into_par_iter()
        .map(|n| sequence_entry(problem, schedule, config, shared.as_ref(), n).map_err(|e| wrap(n, e)))
        .collect();
    results.into_iter().collect()
}

fn wrap(n: usize, e: Error) -> Error {
    match e {
        Error::NotApproximating { .. } | Error::SequenceEntry { .. } => e,
        other => Error::SequenceEntry {
            n,
            source: Box::new(other),
        },
    }
}

fn sequence_entry(
    problem: &ProblemData,
    schedule: &Schedule,
    config: &HarnessConfig,
    shared: Option<&QviSolver>,
    n: usize,
) -> Result<SequenceEntry> {
    let mesh = problem.mesh();
    let s = schedule.decay.scale(n);
    let mut theta = TykhonovIndex::exact(problem);
    let mut envelope = (0.0, 0.0);
    let mut mu_n = None;
    match &schedule.kind {
        ScheduleKind::EpsDecay => theta.eps = s.abs(),
        ScheduleKind::LoadPerturb(a) => theta.f0 = problem.f0.add_scaled(s, a, mesh),
        ScheduleKind::TractionPerturb(a) => theta.f2 = problem.f2.add_scaled(s, a, mesh),
        ScheduleKind::FrictionPerturb { a, b } => {
            theta.g = problem.g.perturbed(s, *a, *b);
            envelope = ((s * a).abs(), (s * b).abs());
        }
        ScheduleKind::LamePerturb(a) => {
            let mu = problem.mu.add_scaled(s, a, mesh);
            theta.eps = mu.sup_distance(&problem.mu, mesh);
            mu_n = Some(mu);
        }
        ScheduleKind::AdversarialLoad { target, amplitude } => theta.f0 = target.add_scaled(s, amplitude, mesh),
    }
    let perturbed = ProblemData {
        space: problem.space.clone(),
        mu: mu_n.clone().unwrap_or_else(|| problem.mu.clone()),
        f0: theta.f0.clone(),
        f2: theta.f2.clone(),
        g: theta.g.clone(),
    };
    let load = perturbed.load()?;
    let (u, report) = match (shared, mu_n) {
        (Some(solver), None) => solver.solve(&load, &perturbed.g)?,
        (_, Some(mu)) => {
            if !(mu.min() > 0.0) {
                return Err(Error::InvalidData(format!("mu_n has minimum {} <= 0", mu.min())));
            }
            QviSolver::new(problem.space.clone(), &mu, config.solver.clone())?.solve(&load, &perturbed.g)?
        }
        (None, None) => unreachable!("a shared solver exists for every schedule that keeps mu"),
    };
    let directions = standard_directions(&problem.space, &u, config.seed ^ n as u64, config.random_directions);
    let violation = membership_violation(problem, &u, &theta, &directions)?;
    if violation > config.membership_tol {
        return Err(Error::NotApproximating { n, violation });
    }
    Ok(SequenceEntry {
        n,
        scale: s,
        theta,
        envelope,
        u,
        violation,
        report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Convergent,
    NonConvergent,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Convergent => "CONVERGENT",
            Verdict::NonConvergent => "NON-CONVERGENT",
        })
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "convergent" => Ok(Verdict::Convergent),
            "non-convergent" | "nonconvergent" => Ok(Verdict::NonConvergent),
            other => Err(Error::InvalidData(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub ns: Vec<usize>,
    pub eps: Vec<f64>,
    pub scales: Vec<f64>,
    /// `e_n = ‖u_n - u‖_V`.
    pub errors: Vec<f64>,
    pub violations: Vec<f64>,
    /// Least-squares slope of `log e_n` against `log n` over `n ∈ [N/2, N]`.
    pub slope: Option<f64>,
    /// Relative spread `(max - min) / max` of `e_n / |s_n|` over the tail.
    pub ratio_spread: Option<f64>,
    /// `‖ū - u‖_V` when the schedule has a different limit `ū`.
    pub limit_gap: Option<f64>,
    /// `‖u_n - ū‖_V` per entry when the schedule has a different limit.
    pub limit_errors: Option<Vec<f64>>,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub fn last_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(0.0)
    }
}

/// OLS slope of `(ln x, ln y)` over the points with `y` above `floor`.
pub fn loglog_slope(xs: &[f64], ys: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|&(&x, &y)| x > 0.0 && y > floor)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Index range of the tail `n ∈ [N/2, N]` for `ns = 1..=N`.
fn tail(len: usize) -> std::ops::Range<usize> {
    (len / 2).saturating_sub(1)..len
}

/// CONVERGENT when `e_N` is below `threshold`, or when the tail is
/// nonincreasing up to a 10% jitter and `e_N ≤ 0.75 e_{N/2}`.
pub fn verdict(errors: &[f64], threshold: f64) -> Verdict {
    let Some(&last) = errors.last() else {
        return Verdict::Convergent;
    };
    if last <= threshold {
        return Verdict::Convergent;
    }
    let t = &errors[tail(errors.len())];
    let monotone = t.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    if monotone && t.len() >= 2 && last <= 0.75 * t[0] {
        Verdict::Convergent
    } else {
        Verdict::NonConvergent
    }
}

/// Solves the unperturbed problem once, generates the sequence and measures it.
pub fn run_convergence(
    problem: &ProblemData,
    schedule: &Schedule,
    config: &HarnessConfig,
) -> Result<ConvergenceReport> {
    let solver = QviSolver::for_problem(problem, config.solver.clone())?;
    let (u, _) = solver.solve(&problem.load()?, &problem.g)?;
    let entries = generate_sequence(problem, schedule, config)?;
    let space = &problem.space;
    let errors: Vec<f64> = entries.iter().map(|e| space.distance(&e.u, &u)).collect();

    let limit = match &schedule.kind {
        ScheduleKind::AdversarialLoad { target, .. } => {
            let load = problem.with_f0(target.clone()).load()?;
            Some(solver.solve(&load, &problem.g)?.0)
        }
        _ => None,
    };
    let limit_gap = limit.as_ref().map(|ubar| space.distance(ubar, &u));
    let limit_errors = limit
        .as_ref()
        .map(|ubar| entries.iter().map(|e| space.distance(&e.u, ubar)).collect());

    let ns: Vec<usize> = entries.iter().map(|e| e.n).collect();
    let scales: Vec<f64> = entries.iter().map(|e| e.scale).collect();
    let range = tail(ns.len());
    let tail_n: Vec<f64> = ns[range.clone()].iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&tail_n, &errors[range.clone()], 1e-14);
    let ratios: Vec<f64> = range
        .clone()
        .filter(|&i| scales[i] != 0.0 && errors[i] > 1e-14)
        .map(|i| errors[i] / scales[i].abs())
        .collect();
    let ratio_spread = (ratios.len() >= 2).then(|| {
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / max
    });
    let threshold = config.pass_threshold();
    Ok(ConvergenceReport {
        eps: entries.iter().map(|e| e.theta.eps).collect(),
        violations: entries.iter().map(|e| e.violation).collect(),
        verdict: verdict(&errors, threshold),
        ns,
        scales,
        errors,
        slope,
        ratio_spread,
        limit_gap,
        limit_errors,
        threshold,
    })
}

/// Sequence with Lamé coefficients `μₙ = μ + s_n · amplitude`, each entry
/// certified in `Ω(‖μₙ - μ‖_∞, f₀, f₂, g)` of the unperturbed problem.
pub fn lame_perturb_sequence(
    problem: &ProblemData,
    amplitude: CoefficientField,
    decay: Decay,
    len: usize,
    config: &HarnessConfig,
) -> Result<ConvergenceReport> {
    run_convergence(
        problem,
        &Schedule::new(ScheduleKind::LamePerturb(amplitude), decay, len),
        config,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrictionEnvelope {
    pub alpha: f64,
    pub beta: f64,
    /// Largest excess of `|gₙ - g|` over the least-squares line before `α` was raised.
    pub max_residual: f64,
}

/// Affine envelope `|gₙ(x, r) - g(x, r)| ≤ α + β|r|` on `points × [0, r_max]`.
///
/// Fits `α, β ≥ 0` by least squares, then raises `α` by the largest
/// positive residual so that the envelope dominates every sample.
pub fn verify_c4(
    g_n: &FrictionBound,
    g: &FrictionBound,
    points: &[Point],
    r_max: f64,
    samples: usize,
) -> FrictionEnvelope {
    let samples = samples.max(2);
    let data: Vec<(f64, f64)> = points
        .iter()
        .flat_map(|&x| {
            (0..samples).map(move |k| {
                let r = r_max * k as f64 / (samples - 1) as f64;
                (r, (g_n.eval(x, r) - g.eval(x, r)).abs())
            })
        })
        .collect();
    if data.is_empty() {
        return FrictionEnvelope {
            alpha: 0.0,
            beta: 0.0,
            max_residual: 0.0,
        };
    }
    let m = data.len() as f64;
    let mr = data.iter().map(|d| d.0).sum::<f64>() / m;
    let md = data.iter().map(|d| d.1).sum::<f64>() / m;
    let srr: f64 = data.iter().map(|d| (d.0 - mr).powi(2)).sum();
    let srd: f64 = data.iter().map(|d| (d.0 - mr) * (d.1 - md)).sum();
    let mut beta = if srr > 0.0 { (srd / srr).max(0.0) } else { 0.0 };
    let mut alpha = md - beta * mr;
    if alpha < 0.0 {
        alpha = 0.0;
        let rr: f64 = data.iter().map(|d| d.0 * d.0).sum();
        beta = if rr > 0.0 {
            (data.iter().map(|d| d.0 * d.1).sum::<f64>() / rr).max(0.0)
        } else {
            0.0
        };
    }
    let max_residual = data.iter().map(|&(r, d)| d - (alpha + beta * r)).fold(0.0, f64::max);
    FrictionEnvelope {
        alpha: alpha + max_residual,
        beta,
        max_residual,
    }
}

/// Whether `|gₙ - g| ≤ α + β|r|` holds on `points × [0, r_max]` up to `tol`.
#[allow(clippy::too_many_arguments)]
pub fn envelope_holds(
    g_n: &FrictionBound,
    g: &FrictionBound,
    alpha: f64,
    beta: f64,
    points: &[Point],
    r_max: f64,
    samples: usize,
    tol: f64,
) -> bool {
    let samples = samples.max(2);
    points.iter().all(|&x| {
        (0..samples).all(|k| {
            let r = r_max * k as f64 / (samples - 1) as f64;
            (g_n.eval(x, r) - g.eval(x, r)).abs() <= alpha + beta * r + tol
        })
    })
}

/// Γ₃ node coordinates of a problem, the natural sample points for [`verify_c4`].
pub fn gamma3_points(problem: &ProblemData) -> Vec<Point> {
    problem
        .space
        .gamma3()
        .iter()
        .map(|&(n, _)| problem.mesh().node(n))
        .collect()
}
