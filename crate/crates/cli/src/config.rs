//! Line-based experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! mesh:
//!   dimension = 1
//!   cells = 256
//! problem:
//!   mu = 1
//!   f0 = poly 3 0 -1     # 3 - x²
//!   g = affine 0.5 0.2   # 0.5 + 0.2 |r|
//! ```
//!
//! A line ending in `:` opens a section; every other line is `key = value`.
//! Unknown sections and keys, duplicates and malformed values are errors
//! that carry the line number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use antiplane_core::mesh::Point;
use antiplane_core::{BoundaryTag, Decay, FrictionBound, MeshSpec, SolverConfig, Verdict};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in section `{section}`")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{found}`")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        found: String,
    },
    #[error("missing {0}")]
    Missing(String),
}

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "mesh",
        &[
            "dimension",
            "cells",
            "nx",
            "ny",
            "length",
            "lx",
            "ly",
            "left",
            "right",
            "bottom",
            "top",
        ],
    ),
    ("problem", &["mu", "f0", "f2", "g"]),
    (
        "solver",
        &[
            "outer_tol",
            "inner_tol",
            "max_outer",
            "max_inner",
            "allow_noncontraction",
            "ratio_slack",
        ],
    ),
    ("run", &["seed", "out"]),
    ("validate", &["cells", "tolerance", "cases"]),
    (
        "schedule",
        &[
            "kind",
            "decay",
            "length",
            "amplitude",
            "target",
            "a",
            "b",
            "expect",
            "random_directions",
        ],
    ),
    (
        "control",
        &[
            "patches",
            "a0",
            "a2",
            "phi",
            "starts",
            "lower",
            "upper",
            "start_low",
            "start_high",
            "max_iter",
            "f_tol",
            "x_tol",
            "initial_step",
        ],
    ),
    (
        "oc_schedule",
        &["kind", "decay", "length", "psi", "amplitude", "a", "b", "expect"],
    ),
];

/// Polynomial in the first coordinate, degree at most 3: `poly c0 c1 c2 c3`
/// or a bare number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly(pub [f64; 4]);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly([c, 0.0, 0.0, 0.0])
    }

    pub fn eval(&self, p: Point) -> f64 {
        let x = p[0];
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn as_constant(&self) -> Option<f64> {
        (self.0[1..].iter().all(|&c| c == 0.0)).then_some(self.0[0])
    }
}

impl FromStr for Poly {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut words = s.split_whitespace();
        match words.next() {
            Some("poly") => {
                let coefs: Vec<f64> = words.map(parse_f64).collect::<Result<_, _>>()?;
                if coefs.is_empty() || coefs.len() > 4 {
                    return Err("poly takes 1 to 4 coefficients".into());
                }
                let mut c = [0.0; 4];
                c[..coefs.len()].copy_from_slice(&coefs);
                Ok(Poly(c))
            }
            Some(w) if words.next().is_none() => Ok(Poly::constant(parse_f64(w)?)),
            _ => Err("expected a number or `poly c0 [c1 [c2 [c3]]]`".into()),
        }
    }
}

/// `constant g0`, `affine a b` (meaning `a + b|r|`) or a bare number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrictionExpr {
    Constant(f64),
    Affine(f64, f64),
}

impl FrictionExpr {
    pub fn bound(&self) -> FrictionBound {
        match *self {
            FrictionExpr::Constant(g) => FrictionBound::constant(g),
            FrictionExpr::Affine(a, b) => FrictionBound::affine(a, b),
        }
    }

    /// Value at zero slip.
    pub fn base(&self) -> f64 {
        match *self {
            FrictionExpr::Constant(g) | FrictionExpr::Affine(g, _) => g,
        }
    }
}

impl FromStr for FrictionExpr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["constant", g] => Ok(FrictionExpr::Constant(parse_f64(g)?)),
            ["affine", a, b] => Ok(FrictionExpr::Affine(parse_f64(a)?, parse_f64(b)?)),
            [g] => Ok(FrictionExpr::Constant(parse_f64(g)?)),
            _ => Err("expected a number, `constant g0` or `affine a b`".into()),
        }
    }
}

/// Decay law: `zero`, `harmonic`, `power p`, `geometric r` or `alternating`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayExpr(pub Decay);

impl FromStr for DecayExpr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        Ok(DecayExpr(match words.as_slice() {
            ["zero"] => Decay::Zero,
            ["harmonic"] => Decay::Power(1.0),
            ["power", p] => Decay::Power(parse_f64(p)?),
            ["geometric", r] => Decay::Geometric(parse_f64(r)?),
            ["alternating"] => Decay::Alternating,
            _ => return Err("expected zero, harmonic, `power p`, `geometric r` or alternating".into()),
        }))
    }
}

/// Whitespace-separated numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Numbers(pub Vec<f64>);

impl FromStr for Numbers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(Numbers(s.split_whitespace().map(parse_f64).collect::<Result<_, _>>()?))
    }
}

/// `mu f0 g` triples separated by commas.
#[derive(Clone, Debug, PartialEq)]
pub struct Cases(pub Vec<(f64, f64, f64)>);

impl FromStr for Cases {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|case| {
                let v: Numbers = case.parse()?;
                match v.0.as_slice() {
                    [mu, f0, g] => Ok((*mu, *f0, *g)),
                    _ => Err(format!("case `{}` is not a `mu f0 g` triple", case.trim())),
                }
            })
            .collect::<Result<_, _>>()
            .map(Cases)
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshConfig {
    pub spec: MeshSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub mu: Poly,
    pub f0: Poly,
    pub f2: Poly,
    pub g: FrictionExpr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    pub cells: usize,
    pub tolerance: f64,
    pub cases: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleName {
    Eps,
    Load,
    Traction,
    Friction,
    Lame,
    Adversarial,
}

impl FromStr for ScheduleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "eps" => ScheduleName::Eps,
            "load" => ScheduleName::Load,
            "traction" => ScheduleName::Traction,
            "friction" => ScheduleName::Friction,
            "lame" => ScheduleName::Lame,
            "adversarial" => ScheduleName::Adversarial,
            _ => return Err("expected eps, load, traction, friction, lame or adversarial".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleName,
    pub decay: Decay,
    pub length: usize,
    pub amplitude: Poly,
    pub target: Option<Poly>,
    pub a: f64,
    pub b: f64,
    pub expect: Verdict,
    pub random_directions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig {
    pub patches: usize,
    pub a0: f64,
    pub a2: f64,
    pub phi: Poly,
    pub starts: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub start_box: (f64, f64),
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub initial_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcScheduleName {
    Target,
    Load,
    Friction,
}

impl FromStr for OcScheduleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "target" => OcScheduleName::Target,
            "load" => OcScheduleName::Load,
            "friction" => OcScheduleName::Friction,
            _ => return Err("expected target, load or friction".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcScheduleConfig {
    pub kind: OcScheduleName,
    pub decay: Decay,
    pub length: usize,
    pub psi: Poly,
    pub amplitude: Poly,
    pub a: f64,
    pub b: f64,
    pub expect: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mesh: Option<MeshConfig>,
    pub problem: Option<ProblemConfig>,
    pub solver: SolverConfig,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub validate: ValidateConfig,
    pub schedule: Option<ScheduleConfig>,
    pub control: Option<ControlConfig>,
    pub oc_schedule: Option<OcScheduleConfig>,
}

impl ExperimentConfig {
    pub fn mesh(&self) -> Result<&MeshConfig, ConfigError> {
        self.mesh
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("section `mesh`".into()))
    }

    pub fn problem(&self) -> Result<&ProblemConfig, ConfigError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("section `problem`".into()))
    }

    pub fn schedule(&self) -> Result<&ScheduleConfig, ConfigError> {
        self.schedule
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("section `schedule`".into()))
    }

    pub fn control(&self) -> Result<&ControlConfig, ConfigError> {
        self.control
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("section `control`".into()))
    }

    pub fn oc_schedule(&self) -> Result<&OcScheduleConfig, ConfigError> {
        self.oc_schedule
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("section `oc_schedule`".into()))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.seed
            .ok_or_else(|| ConfigError::Missing("seed (`run: seed = ...` or --seed) for a randomized routine".into()))
    }
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn get<T: FromStr>(&self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|_| ConfigError::Type {
                line: *line,
                key: key.into(),
                expected,
                found: raw.clone(),
            }),
        }
    }

    fn require<T>(&self, key: &str, value: Option<T>) -> Result<T, ConfigError> {
        value
            .ok_or_else(|| ConfigError::Missing(format!("key `{key}` in section `{}` (line {})", self.name, self.line)))
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.line, |e| e.0)
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_suffix(':') {
            let name = name.trim().to_string();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::UnknownSection { line, name });
            }
            if sections.contains_key(&name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("section `{name}` opened twice"),
                });
            }
            sections.insert(
                name.clone(),
                Section {
                    name: name.clone(),
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `section:` or `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let Some(section) = current.as_ref() else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` outside of any section"),
            });
        };
        let allowed = SECTIONS.iter().find(|(s, _)| s == section).unwrap().1;
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                line,
                section: section.clone(),
                key,
            });
        }
        let entries = &mut sections.get_mut(section).unwrap().entries;
        if entries.contains_key(&key) {
            return Err(ConfigError::Duplicate { line, key });
        }
        entries.insert(key, (line, value));
    }

    let solver = match sections.get("solver") {
        Some(s) => solver_config(s)?,
        None => SolverConfig::default(),
    };
    let (seed, out) = match sections.get("run") {
        Some(s) => (
            s.get::<u64>("seed", "an unsigned integer")?,
            s.get::<PathBuf>("out", "a path")?,
        ),
        None => (None, None),
    };
    Ok(ExperimentConfig {
        mesh: sections.get("mesh").map(mesh_config).transpose()?,
        problem: sections.get("problem").map(problem_config).transpose()?,
        solver,
        seed,
        out,
        validate: match sections.get("validate") {
            Some(s) => validate_config(s)?,
            None => ValidateConfig::default(),
        },
        schedule: sections.get("schedule").map(schedule_config).transpose()?,
        control: sections.get("control").map(control_config).transpose()?,
        oc_schedule: sections.get("oc_schedule").map(oc_schedule_config).transpose()?,
    })
}

fn tag(s: &Section, key: &str, default: BoundaryTag) -> Result<BoundaryTag, ConfigError> {
    Ok(s.get::<BoundaryTag>(key, "gamma1, gamma2 or gamma3")?
        .unwrap_or(default))
}

fn mesh_config(s: &Section) -> Result<MeshConfig, ConfigError> {
    use BoundaryTag::*;
    let dimension = s.get::<usize>("dimension", "1 or 2")?.unwrap_or(1);
    let lx = match (s.get::<f64>("length", "a number")?, s.get::<f64>("lx", "a number")?) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Syntax {
                line: s.line_of("lx"),
                message: "give either `length` or `lx`".into(),
            })
        }
        (a, b) => a.or(b).unwrap_or(1.0),
    };
    let nx = match (
        s.get::<usize>("cells", "a cell count")?,
        s.get::<usize>("nx", "a cell count")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Syntax {
                line: s.line_of("nx"),
                message: "give either `cells` or `nx`".into(),
            })
        }
        (a, b) => s.require("cells", a.or(b))?,
    };
    let spec = match dimension {
        1 => {
            for key in ["ny", "ly", "bottom", "top"] {
                if s.entries.contains_key(key) {
                    return Err(ConfigError::Syntax {
                        line: s.line_of(key),
                        message: format!("`{key}` only applies to dimension 2"),
                    });
                }
            }
            MeshSpec::interval(lx, nx, tag(s, "left", Gamma1)?, tag(s, "right", Gamma3)?)
        }
        2 => MeshSpec::rectangle(
            lx,
            s.get::<f64>("ly", "a number")?.unwrap_or(1.0),
            nx,
            s.get::<usize>("ny", "a cell count")?.unwrap_or(nx),
            [
                tag(s, "left", Gamma1)?,
                tag(s, "right", Gamma2)?,
                tag(s, "bottom", Gamma2)?,
                tag(s, "top", Gamma3)?,
            ],
        ),
        d => {
            return Err(ConfigError::Type {
                line: s.line_of("dimension"),
                key: "dimension".into(),
                expected: "1 or 2",
                found: d.to_string(),
            })
        }
    };
    spec.validate().map_err(|e| ConfigError::Syntax {
        line: s.line,
        message: e.to_string(),
    })?;
    Ok(MeshConfig { spec })
}

fn problem_config(s: &Section) -> Result<ProblemConfig, ConfigError> {
    const EXPR: &str = "a number or `poly c0 c1 c2 c3`";
    Ok(ProblemConfig {
        mu: s.get("mu", EXPR)?.unwrap_or(Poly::constant(1.0)),
        f0: s.get("f0", EXPR)?.unwrap_or(Poly::constant(0.0)),
        f2: s.get("f2", EXPR)?.unwrap_or(Poly::constant(0.0)),
        g: s.get("g", "a number, `constant g0` or `affine a b`")?
            .unwrap_or(FrictionExpr::Constant(0.0)),
    })
}

fn solver_config(s: &Section) -> Result<SolverConfig, ConfigError> {
    let d = SolverConfig::default();
    Ok(SolverConfig {
        outer_tol: s.get("outer_tol", "a number")?.unwrap_or(d.outer_tol),
        inner_tol: s.get("inner_tol", "a number")?.unwrap_or(d.inner_tol),
        max_outer: s.get("max_outer", "an iteration count")?.unwrap_or(d.max_outer),
        max_inner: s.get("max_inner", "an iteration count")?.unwrap_or(d.max_inner),
        allow_noncontraction: s
            .get("allow_noncontraction", "true or false")?
            .unwrap_or(d.allow_noncontraction),
        ratio_slack: s.get("ratio_slack", "a number")?.unwrap_or(d.ratio_slack),
        membership_seed: None,
    })
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            cells: 256,
            tolerance: 1e-3,
            cases: vec![(1.0, 1.0, 1.0), (1.0, 3.0, 1.0), (2.0, -3.0, 0.5), (1.0, 2.0, 1.0)],
        }
    }
}

fn validate_config(s: &Section) -> Result<ValidateConfig, ConfigError> {
    let d = ValidateConfig::default();
    Ok(ValidateConfig {
        cells: s.get("cells", "a cell count")?.unwrap_or(d.cells),
        tolerance: s.get("tolerance", "a number")?.unwrap_or(d.tolerance),
        cases: s
            .get::<Cases>("cases", "comma-separated `mu f0 g` triples")?
            .map_or(d.cases, |c| c.0),
    })
}

fn verdict(s: &Section, key: &str) -> Result<Verdict, ConfigError> {
    Ok(s.get::<Verdict>(key, "convergent or non-convergent")?
        .unwrap_or(Verdict::Convergent))
}

fn schedule_config(s: &Section) -> Result<ScheduleConfig, ConfigError> {
    const EXPR: &str = "a number or `poly c0 c1 c2 c3`";
    let kind: ScheduleName = s.require("kind", s.get("kind", "a schedule kind")?)?;
    let target = s.get::<Poly>("target", EXPR)?;
    if kind == ScheduleName::Adversarial && target.is_none() {
        return Err(ConfigError::Missing(format!(
            "key `target` for the adversarial schedule (section starting line {})",
            s.line
        )));
    }
    Ok(ScheduleConfig {
        kind,
        decay: s
            .get::<DecayExpr>("decay", "a decay law")?
            .map_or(Decay::Power(1.0), |d| d.0),
        length: s.get("length", "a sequence length")?.unwrap_or(64),
        amplitude: s.get("amplitude", EXPR)?.unwrap_or(Poly::constant(1.0)),
        target,
        a: s.get("a", "a number")?.unwrap_or(0.0),
        b: s.get("b", "a number")?.unwrap_or(0.0),
        expect: verdict(s, "expect")?,
        random_directions: s.get("random_directions", "a count")?.unwrap_or(100),
    })
}

fn control_config(s: &Section) -> Result<ControlConfig, ConfigError> {
    let lower = s.get::<Numbers>("lower", "numbers")?.map(|n| n.0);
    let upper = s.get::<Numbers>("upper", "numbers")?.map(|n| n.0);
    if lower.is_some() != upper.is_some() {
        return Err(ConfigError::Syntax {
            line: s.line_of(if lower.is_some() { "lower" } else { "upper" }),
            message: "`lower` and `upper` must be given together".into(),
        });
    }
    Ok(ControlConfig {
        patches: s.get("patches", "a patch count")?.unwrap_or(1),
        a0: s.get("a0", "a number")?.unwrap_or(1.0),
        a2: s.get("a2", "a number")?.unwrap_or(1.0),
        phi: s
            .get("phi", "a number or `poly c0 c1 c2 c3`")?
            .unwrap_or(Poly::constant(0.0)),
        starts: s.get("starts", "a count")?.unwrap_or(4),
        lower,
        upper,
        start_box: (
            s.get("start_low", "a number")?.unwrap_or(-2.0),
            s.get("start_high", "a number")?.unwrap_or(2.0),
        ),
        max_iter: s.get("max_iter", "an iteration count")?.unwrap_or(5_000),
        f_tol: s.get("f_tol", "a number")?.unwrap_or(1e-12),
        x_tol: s.get("x_tol", "a number")?.unwrap_or(1e-6),
        initial_step: s.get("initial_step", "a number")?.unwrap_or(0.25),
    })
}

fn oc_schedule_config(s: &Section) -> Result<OcScheduleConfig, ConfigError> {
    const EXPR: &str = "a number or `poly c0 c1 c2 c3`";
    Ok(OcScheduleConfig {
        kind: s.require("kind", s.get("kind", "target, load or friction")?)?,
        decay: s
            .get::<DecayExpr>("decay", "a decay law")?
            .map_or(Decay::Power(1.0), |d| d.0),
        length: s.get("length", "a sequence length")?.unwrap_or(32),
        psi: s.get("psi", EXPR)?.unwrap_or(Poly::constant(0.0)),
        amplitude: s.get("amplitude", EXPR)?.unwrap_or(Poly::constant(1.0)),
        a: s.get("a", "a number")?.unwrap_or(0.0),
        b: s.get("b", "a number")?.unwrap_or(0.0),
        expect: verdict(s, "expect")?,
    })
}
