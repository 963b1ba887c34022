use std::path::{Path, PathBuf};
use std::sync::Arc;

use antiplane_core::analytic::{analytic_1d, regime_of, traction_bound};
use antiplane_core::constants::constants_report;
use antiplane_core::control::{OcConvergenceReport, OcSchedule, OcScheduleKind};
use antiplane_core::qvi::{complementarity, contact_states, QviSolver};
use antiplane_core::{
    build_mesh, minimize_j, run_convergence, run_oc_sequence, BoundaryTag, CoefficientField, ControlProblem,
    ControlSpec, CostWeights, FemSpace, HarnessConfig, Mesh, MeshSpec, MultistartConfig, ProblemData, ScalarField,
    Schedule, ScheduleKind, SolverConfig, TractionField, Verdict,
};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, OcScheduleName, Poly, ScheduleName};
use crate::output::{loglog_svg, num, opt, OutputDir, Series, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Discrete Poincaré and trace constants and the smallness margin.
    Constants,
    /// One solve of the contact problem.
    Solve,
    /// FEM against the closed-form 1D solution.
    #[value(name = "validate-1d")]
    Validate1d,
    /// Approximating sequence and its convergence.
    Tykhonov,
    /// Optimal boundary traction.
    Control,
    /// Sequence of perturbed control problems.
    #[value(name = "oc-sequence")]
    OcSequence,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] antiplane_core::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    /// Verdicts and checks matched expectations.
    pub success: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, RunError> {
    let mut dir = OutputDir::create(out)?;
    let (success, summary) = match cmd {
        Command::Constants => constants(cfg, &mut dir)?,
        Command::Solve => solve(cfg, &mut dir)?,
        Command::Validate1d => validate_1d(cfg, &mut dir)?,
        Command::Tykhonov => tykhonov(cfg, &mut dir)?,
        Command::Control => control(cfg, &mut dir)?,
        Command::OcSequence => oc_sequence(cfg, &mut dir)?,
    };
    Ok(Outcome {
        success,
        summary,
        files: dir.written().to_vec(),
    })
}

fn coefficient(mesh: &Mesh, p: &Poly) -> CoefficientField {
    match p.as_constant() {
        Some(c) => CoefficientField::Uniform(c),
        None => CoefficientField::from_fn(mesh, |x| p.eval(x)),
    }
}

fn traction(mesh: &Mesh, p: &Poly) -> TractionField {
    match p.as_constant() {
        Some(c) => TractionField::Uniform(c),
        None => TractionField::from_fn(mesh, |x| p.eval(x)),
    }
}

fn space(spec: &MeshSpec) -> Result<Arc<FemSpace>, RunError> {
    Ok(Arc::new(FemSpace::new(build_mesh(spec)?)?))
}

fn problem(cfg: &ExperimentConfig) -> Result<ProblemData, RunError> {
    let p = cfg.problem()?;
    let space = space(&cfg.mesh()?.spec)?;
    let mesh = space.mesh();
    let (mu, f0, f2) = (
        coefficient(mesh, &p.mu),
        coefficient(mesh, &p.f0),
        traction(mesh, &p.f2),
    );
    Ok(ProblemData::new(space, mu, f0, f2, p.g.bound())?)
}

fn constants(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let space = space(&cfg.mesh()?.spec)?;
    let (lipschitz, mu_star) = match &cfg.problem {
        Some(_) => {
            let p = problem(cfg)?;
            (p.g.lipschitz(), p.mu_star())
        }
        None => (0.0, 1.0),
    };
    let r = constants_report(&space, lipschitz, mu_star)?;
    let mut t = Table::new(&[
        "dimension",
        "nodes",
        "free_dofs",
        "c0",
        "c3",
        "lipschitz",
        "mu_star",
        "k",
        "smallness",
    ]);
    t.row(vec![
        space.mesh().dimension().to_string(),
        space.num_nodes().to_string(),
        space.num_free().to_string(),
        num(r.c0),
        num(r.c3),
        num(lipschitz),
        num(mu_star),
        num(r.k),
        r.ok.to_string(),
    ]);
    dir.write_csv("constants.csv", &t)?;
    Ok((true, format!("c0 = {:.6}, c3 = {:.6}, k = {:.6}", r.c0, r.c3, r.k)))
}

fn solve(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let p = problem(cfg)?;
    let config = SolverConfig {
        membership_seed: cfg.seed,
        ..cfg.solver.clone()
    };
    let solver = QviSolver::for_problem(&p, config)?;
    let (u, report) = solver.solve(&p.load()?, &p.g)?;
    let mesh = p.mesh();

    let mut t = Table::new(&["node", "x", "y", "u"]);
    for (i, (x, v)) in mesh.nodes().iter().zip(u.values()).enumerate() {
        t.row(vec![i.to_string(), num(x[0]), num(x[1]), num(*v)]);
    }
    dir.write_csv("solution.csv", &t)?;

    let mut t = Table::new(&["iteration", "increment", "ratio", "inner_sweeps"]);
    for (m, inc) in report.increments.iter().enumerate() {
        let ratio = m.checked_sub(1).and_then(|k| report.ratios.get(k).copied());
        t.row(vec![
            (m + 1).to_string(),
            num(*inc),
            opt(ratio),
            report.inner_sweeps[m].to_string(),
        ]);
    }
    dir.write_csv("iterations.csv", &t)?;

    let mut t = Table::new(&["node", "x", "y", "displacement", "traction", "bound"]);
    for s in contact_states(&p, &u)? {
        let x = mesh.node(s.node);
        t.row(vec![
            s.node.to_string(),
            num(x[0]),
            num(x[1]),
            num(s.displacement),
            num(s.traction),
            num(s.bound),
        ]);
    }
    dir.write_csv("contact.csv", &t)?;

    let c = complementarity(&p, &u)?;
    let mut t = Table::new(&[
        "outer_iterations",
        "contraction_factor",
        "ratios_within_bound",
        "membership_violation",
        "bound_excess",
        "slip_defect",
    ]);
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    t.row(vec![
        report.outer_iterations.to_string(),
        num(report.contraction_factor),
        report.ratios_within_bound.to_string(),
        opt(report.membership_violation),
        opt(finite(c.bound_excess)),
        opt(finite(c.slip_defect)),
    ]);
    dir.write_csv("solve_summary.csv", &t)?;

    let ok = report.membership_violation.is_none_or(|v| v <= 1e-8) && c.bound_excess <= 1e-8 && c.slip_defect <= 1e-8;
    Ok((
        ok,
        format!(
            "{} outer iterations, k = {:.6}, max |u| = {:.6e}",
            report.outer_iterations,
            report.contraction_factor,
            u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
        ),
    ))
}

fn validate_1d(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let v = &cfg.validate;
    let space = space(&MeshSpec::unit_interval(v.cells, BoundaryTag::Gamma3))?;
    let mut summary = Table::new(&["case", "mu", "f0", "g", "regime", "max_error", "tolerance", "pass"]);
    let mut all = true;
    let mut worst: f64 = 0.0;
    for (k, &(mu, f0, g)) in v.cases.iter().enumerate() {
        let regime = regime_of(mu, f0, g)?;
        let p = ProblemData::new(
            space.clone(),
            CoefficientField::Uniform(mu),
            CoefficientField::Uniform(f0),
            TractionField::zero(),
            antiplane_core::FrictionBound::constant(traction_bound(mu, g)),
        )?;
        let (u, _) = antiplane_core::solve_qvi(&p, &cfg.solver)?;
        let mut t = Table::new(&["x", "u_fem", "u_analytic", "abs_error"]);
        let mut max_err: f64 = 0.0;
        for (x, uh) in p.mesh().nodes().iter().zip(u.values()) {
            let exact = analytic_1d(mu, f0, g, x[0])?;
            let err = (uh - exact).abs();
            max_err = max_err.max(err);
            t.row(vec![num(x[0]), num(*uh), num(exact), num(err)]);
        }
        dir.write_csv(&format!("validate_case_{k}.csv"), &t)?;
        let pass = max_err <= v.tolerance;
        all &= pass;
        worst = worst.max(max_err);
        summary.row(vec![
            k.to_string(),
            num(mu),
            num(f0),
            num(g),
            format!("{regime:?}"),
            num(max_err),
            num(v.tolerance),
            pass.to_string(),
        ]);
    }
    dir.write_csv("validate_1d.csv", &summary)?;
    Ok((all, format!("{} cases, worst nodal error {worst:.3e}", v.cases.len())))
}

fn tykhonov(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let s = cfg.schedule()?;
    let seed = cfg.seed()?;
    let p = problem(cfg)?;
    let mesh = p.mesh();
    let kind = match s.kind {
        ScheduleName::Eps => ScheduleKind::EpsDecay,
        ScheduleName::Load => ScheduleKind::LoadPerturb(coefficient(mesh, &s.amplitude)),
        ScheduleName::Traction => ScheduleKind::TractionPerturb(traction(mesh, &s.amplitude)),
        ScheduleName::Friction => ScheduleKind::FrictionPerturb { a: s.a, b: s.b },
        ScheduleName::Lame => ScheduleKind::LamePerturb(coefficient(mesh, &s.amplitude)),
        ScheduleName::Adversarial => ScheduleKind::AdversarialLoad {
            target: coefficient(mesh, s.target.as_ref().expect("checked while parsing")),
            amplitude: coefficient(mesh, &s.amplitude),
        },
    };
    let harness = HarnessConfig {
        solver: cfg.solver.clone(),
        seed,
        random_directions: s.random_directions,
        membership_tol: 1e-8,
    };
    let r = run_convergence(&p, &Schedule::new(kind, s.decay, s.length), &harness)?;

    let mut t = Table::new(&["n", "eps", "scale", "error", "violation"]);
    for i in 0..r.ns.len() {
        t.row(vec![
            r.ns[i].to_string(),
            num(r.eps[i]),
            num(r.scales[i]),
            num(r.errors[i]),
            num(r.violations[i]),
        ]);
    }
    dir.write_csv("tykhonov.csv", &t)?;

    let last_limit = r.limit_errors.as_ref().and_then(|e| e.last().copied());
    let mut t = Table::new(&[
        "length",
        "slope",
        "ratio_spread",
        "last_error",
        "threshold",
        "limit_gap",
        "last_limit_error",
        "verdict",
        "expected",
    ]);
    t.row(vec![
        r.ns.len().to_string(),
        opt(r.slope),
        opt(r.ratio_spread),
        num(r.last_error()),
        num(r.threshold),
        opt(r.limit_gap),
        opt(last_limit),
        r.verdict.to_string(),
        s.expect.to_string(),
    ]);
    dir.write_csv("tykhonov_summary.csv", &t)?;

    let mut series = vec![Series {
        label: "e_n = ||u_n - u||_V",
        points: r.ns.iter().zip(&r.errors).map(|(&n, &e)| (n as f64, e)).collect(),
    }];
    if let Some(le) = &r.limit_errors {
        series.push(Series {
            label: "||u_n - u_limit||_V",
            points: r.ns.iter().zip(le).map(|(&n, &e)| (n as f64, e)).collect(),
        });
    }
    let svg = loglog_svg("Approximating sequence", "n", "error in V", &series);
    dir.write("tykhonov.svg", svg.as_bytes())?;

    Ok((
        r.verdict == s.expect,
        format!(
            "verdict {} (expected {}), slope {}, e_N = {:.3e}",
            r.verdict,
            s.expect,
            r.slope.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            r.last_error()
        ),
    ))
}

fn control_problem(cfg: &ExperimentConfig) -> Result<(ControlProblem, MultistartConfig), RunError> {
    let c = cfg.control()?;
    let seed = cfg.seed()?;
    let p = problem(cfg)?;
    let mesh = p.mesh();
    let mut spec = ControlSpec::contiguous(mesh, c.patches)?;
    if let (Some(lo), Some(hi)) = (&c.lower, &c.upper) {
        spec = spec.with_box(lo.clone(), hi.clone())?;
    }
    let phi = ScalarField::interpolate_in_v(mesh, |x| c.phi.eval(x));
    let weights = CostWeights::new(mesh, c.a0, c.a2, phi)?;
    let cp = ControlProblem::new(p, spec, weights, cfg.solver.clone())?;
    let mut ms = MultistartConfig::new(seed);
    ms.starts = c.starts;
    ms.start_box = c.start_box;
    ms.simplex.max_iter = c.max_iter;
    ms.simplex.f_tol = c.f_tol;
    ms.simplex.x_tol = c.x_tol;
    ms.simplex.initial_step = c.initial_step;
    Ok((cp, ms))
}

fn oc_schedule(cfg: &ExperimentConfig, cp: &ControlProblem) -> Result<OcSchedule, RunError> {
    let s = cfg.oc_schedule()?;
    let mesh = cp.problem().mesh();
    let kind = match s.kind {
        OcScheduleName::Target => OcScheduleKind::TargetPerturb(ScalarField::interpolate_in_v(mesh, |x| s.psi.eval(x))),
        OcScheduleName::Load => OcScheduleKind::LoadPerturb(coefficient(mesh, &s.amplitude)),
        OcScheduleName::Friction => OcScheduleKind::FrictionPerturb { a: s.a, b: s.b },
    };
    Ok(OcSchedule {
        kind,
        decay: s.decay,
        len: s.length,
    })
}

fn control(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let (cp, ms) = control_problem(cfg)?;
    // validate the optional sequence section before the expensive part
    let schedule = cfg.oc_schedule.as_ref().map(|_| oc_schedule(cfg, &cp)).transpose()?;
    let (pair, j, report) = minimize_j(&cp, &ms)?;

    let mut t = Table::new(&["start", "iteration", "J"]);
    for s in &report.starts {
        for (i, v) in s.outcome.trace.iter().enumerate() {
            t.row(vec![s.start.to_string(), (i + 1).to_string(), num(*v)]);
        }
    }
    dir.write_csv("trace.csv", &t)?;

    let mut t = Table::new(&["patch", "value"]);
    for (k, v) in pair.f2.iter().enumerate() {
        t.row(vec![k.to_string(), num(*v)]);
    }
    dir.write_csv("controls.csv", &t)?;

    let mut t = Table::new(&["J", "best_start", "spread", "violation", "catalog_size"]);
    t.row(vec![
        num(j),
        report.best_start.to_string(),
        num(report.spread),
        num(report.violation),
        report.catalog.len().to_string(),
    ]);
    dir.write_csv("control_summary.csv", &t)?;

    let mut ok = true;
    if let Some(schedule) = schedule {
        let r = run_oc_sequence(&cp, &schedule, &ms)?;
        ok = write_oc(dir, &r, cfg.oc_schedule()?.expect)?;
    }
    Ok((ok, format!("J* = {j:.10}, f2* = {:?}", pair.f2)))
}

fn write_oc(dir: &mut OutputDir, r: &OcConvergenceReport, expect: Verdict) -> Result<bool, RunError> {
    let mut t = Table::new(&["n", "scale", "control_error", "state_error", "value_error", "J"]);
    for (i, e) in r.entries.iter().enumerate() {
        t.row(vec![
            e.n.to_string(),
            num(e.scale),
            num(r.control_errors[i]),
            num(r.state_errors[i]),
            num(r.value_errors[i]),
            num(e.value),
        ]);
    }
    dir.write_csv("oc_convergence.csv", &t)?;
    let ns: Vec<f64> = r.entries.iter().map(|e| e.n as f64).collect();
    let svg = loglog_svg(
        "Perturbed control problems",
        "n",
        "deviation",
        &[
            Series {
                label: "|J*_n - J*|",
                points: ns.iter().copied().zip(r.value_errors.iter().copied()).collect(),
            },
            Series {
                label: "||f2*_n - f2*||",
                points: ns.iter().copied().zip(r.control_errors.iter().copied()).collect(),
            },
        ],
    );
    dir.write("oc_convergence.svg", svg.as_bytes())?;
    let mut t = Table::new(&[
        "J_star",
        "value_slope",
        "control_slope",
        "last_control_error",
        "verdict",
        "expected",
    ]);
    t.row(vec![
        num(r.reference.1),
        opt(r.value_slope),
        opt(r.control_slope),
        opt(r.control_errors.last().copied()),
        r.verdict.to_string(),
        expect.to_string(),
    ]);
    dir.write_csv("oc_summary.csv", &t)?;
    Ok(r.verdict == expect)
}

fn oc_sequence(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<(bool, String), RunError> {
    let (cp, ms) = control_problem(cfg)?;
    let schedule = oc_schedule(cfg, &cp)?;
    let r = run_oc_sequence(&cp, &schedule, &ms)?;
    let expect = cfg.oc_schedule()?.expect;
    let ok = write_oc(dir, &r, expect)?;
    Ok((
        ok,
        format!(
            "verdict {} (expected {expect}), value slope {}",
            r.verdict,
            r.value_slope.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        ),
    ))
}
