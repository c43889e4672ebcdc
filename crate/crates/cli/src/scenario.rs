//! Scenario files: schema, overrides and semantic validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use conjflow::construct::{build_operator, Horizon, SingularityPrescription};
use conjflow::grid::TimeGrid;
use conjflow::morse::STABLE_MESHES;
use conjflow::system::{Component, SymplecticSystemSpec};
use conjflow::{random, Error, Tolerance};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const MAX_DIM: usize = 64;
pub const MAX_TRUNCATION: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    System,
    Prescription,
    TruncationFamily,
    Morse,
    Roundtrip,
}

impl Kind {
    pub const ALL: [Kind; 5] = [
        Kind::System,
        Kind::Prescription,
        Kind::TruncationFamily,
        Kind::Morse,
        Kind::Roundtrip,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Kind::System => "system",
            Kind::Prescription => "prescription",
            Kind::TruncationFamily => "truncation_family",
            Kind::Morse => "morse",
            Kind::Roundtrip => "roundtrip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { step: DEFAULT_STEP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `A = 0`, `B = I`, `C = −κI`.
    RiemannianConstantCurvature,
    /// `A = 0`, `B = I`, explicit `C`.
    Riemannian,
    /// Explicit `A`, `B`, `C`.
    General,
    RandomPositive,
    RandomRiemannian,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::RiemannianConstantCurvature,
        Family::Riemannian,
        Family::General,
        Family::RandomPositive,
        Family::RandomRiemannian,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::RiemannianConstantCurvature => "riemannian_constant_curvature",
            Family::Riemannian => "riemannian",
            Family::General => "general",
            Family::RandomPositive => "random_positive",
            Family::RandomRiemannian => "random_riemannian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub family: Family,
    pub n: usize,
    pub interval: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Component>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundtripSection {
    /// Start of the geodesic, before `prescription.c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default = "default_match_tol")]
    pub match_tol: f64,
}

fn default_match_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationKind {
    /// `diag(1 − 1/k)`, `k = 2..N+1`.
    Accumulation,
    /// `N` equispaced samples of `interval`.
    UniformInterval,
}

impl TruncationKind {
    pub const ALL: [TruncationKind; 2] = [TruncationKind::Accumulation, TruncationKind::UniformInterval];

    pub fn id(self) -> &'static str {
        match self {
            TruncationKind::Accumulation => "accumulation",
            TruncationKind::UniformInterval => "uniform_interval",
        }
    }

    /// Diagonal of the `size`-dimensional member.
    pub fn diagonal(self, size: usize, interval: Option<[f64; 2]>) -> Vec<f64> {
        match self {
            TruncationKind::Accumulation => (2..=size + 1).map(|k| 1.0 - 1.0 / k as f64).collect(),
            TruncationKind::UniformInterval => {
                let [lo, hi] = interval.unwrap_or([0.25, 0.75]);
                if size == 1 {
                    return vec![0.5 * (lo + hi)];
                }
                (0..size)
                    .map(|k| lo + (hi - lo) * k as f64 / (size - 1) as f64)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub family: TruncationKind,
    pub dims: Vec<usize>,
    #[serde(default = "default_probes")]
    pub probes: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

fn default_probes() -> Vec<f64> {
    vec![1.0]
}

fn default_eps() -> Vec<f64> {
    vec![0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseSection {
    /// Elements per unit length for the index profile.
    #[serde(default = "default_density")]
    pub density: usize,
    /// Number of equispaced profile times in `(start, t_end]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Densities for the stability check at `t_end`.
    #[serde(default = "default_meshes")]
    pub meshes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

impl Default for MorseSection {
    fn default() -> Self {
        Self {
            density: default_density(),
            samples: default_samples(),
            meshes: default_meshes(),
            t_end: None,
        }
    }
}

fn default_density() -> usize {
    200
}

fn default_samples() -> usize {
    100
}

fn default_meshes() -> Vec<usize> {
    STABLE_MESHES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prescription: Option<SingularityPrescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundtripSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morse: Option<MorseSection>,
}

/// A schema or semantic violation at a field path.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

type Checked<T> = std::result::Result<T, SchemaError>;

/// Parses a scenario, reporting the field path of the first violation.
pub fn parse(text: &str) -> Checked<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "scenario".to_string() } else { path };
        SchemaError::new(path, e.into_inner().to_string())
    })
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    System {
        system: SymplecticSystemSpec,
    },
    Prescription {
        prescription: SingularityPrescription,
    },
    Roundtrip {
        prescription: SingularityPrescription,
        start: f64,
        match_tol: f64,
    },
    Truncation {
        section: TruncationSection,
    },
    Morse {
        system: SymplecticSystemSpec,
        section: MorseSection,
        t_end: f64,
    },
}

fn finite(path: &str, x: f64) -> Checked<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(SchemaError::new(path, format!("{x} is not finite")))
    }
}

fn grid_on(a: f64, b: f64, step: f64) -> Checked<TimeGrid> {
    TimeGrid::new(a, b, step).map_err(|e| SchemaError::new("grid.step", e.to_string()))
}

fn unused(present: bool, path: &str, owner: &str) -> Checked<()> {
    if present {
        Err(SchemaError::new(path, format!("not used by {owner}")))
    } else {
        Ok(())
    }
}

fn required<'a, T>(v: &'a Option<T>, path: &str, owner: &str) -> Checked<&'a T> {
    v.as_ref()
        .ok_or_else(|| SchemaError::new(path, format!("required by {owner}")))
}

fn component(c: &Component, n: usize, symmetric: bool, path: &str) -> Checked<Component> {
    c.validate(n, symmetric)
        .map_err(|e| SchemaError::new(path, e.to_string()))?;
    Ok(c.clone())
}

fn resolve_system(s: &SystemSection, seed: u64) -> Checked<SymplecticSystemSpec> {
    if s.n == 0 || s.n > MAX_DIM {
        return Err(SchemaError::new("system.n", format!("{} outside 1..={MAX_DIM}", s.n)));
    }
    let [start, end] = s.interval;
    finite("system.interval", start)?;
    finite("system.interval", end)?;
    if end <= start {
        return Err(SchemaError::new(
            "system.interval",
            format!("[{start}, {end}] is empty"),
        ));
    }
    if let Some(k) = s.kappa {
        finite("system.kappa", k)?;
    }
    let owner = format!("family {}", s.family.id());
    let n = s.n;
    let build = |a: Component, b: Component, c: Component| {
        SymplecticSystemSpec::new(n, start, end, a, b, c).map_err(|e| SchemaError::new("system", e.to_string()))
    };
    match s.family {
        Family::RiemannianConstantCurvature => {
            let kappa = *required(&s.kappa, "system.kappa", &owner)?;
            unused(s.a.is_some(), "system.a", &owner)?;
            unused(s.b.is_some(), "system.b", &owner)?;
            unused(s.c.is_some(), "system.c", &owner)?;
            build(
                Component::Zero,
                Component::Identity,
                Component::Scalar { value: -kappa },
            )
        }
        Family::Riemannian => {
            unused(s.kappa.is_some(), "system.kappa", &owner)?;
            unused(s.a.is_some(), "system.a", &owner)?;
            unused(s.b.is_some(), "system.b", &owner)?;
            let c = component(required(&s.c, "system.c", &owner)?, n, true, "system.c")?;
            build(Component::Zero, Component::Identity, c)
        }
        Family::General => {
            unused(s.kappa.is_some(), "system.kappa", &owner)?;
            let a = component(required(&s.a, "system.a", &owner)?, n, false, "system.a")?;
            let b = component(required(&s.b, "system.b", &owner)?, n, true, "system.b")?;
            let c = component(required(&s.c, "system.c", &owner)?, n, true, "system.c")?;
            build(a, b, c)
        }
        Family::RandomPositive | Family::RandomRiemannian => {
            unused(s.a.is_some(), "system.a", &owner)?;
            unused(s.b.is_some(), "system.b", &owner)?;
            unused(s.c.is_some(), "system.c", &owner)?;
            if start != 0.0 {
                return Err(SchemaError::new("system.interval", format!("{owner} starts at 0")));
            }
            let mut rng = random::rng(seed);
            if s.family == Family::RandomPositive {
                unused(s.kappa.is_some(), "system.kappa", &owner)?;
                Ok(random::positive_system(&mut rng, n, end))
            } else {
                let kappa = s.kappa.unwrap_or(4.0);
                if kappa <= 0.0 {
                    return Err(SchemaError::new("system.kappa", format!("{kappa} must be positive")));
                }
                Ok(random::riemannian_system(&mut rng, n, end, kappa))
            }
        }
    }
}

fn check_positive(x: &SymplecticSystemSpec, grid: &TimeGrid, tol: &Tolerance) -> Checked<()> {
    x.check_positive(grid, tol).map_err(|e| match e {
        Error::NonPositiveSystem { .. } => SchemaError::new("system.b", e.to_string()),
        e => SchemaError::new("system", e.to_string()),
    })
}

fn resolve_prescription(p: &SingularityPrescription) -> Checked<()> {
    p.validate()
        .map_err(|e| SchemaError::new("prescription", e.to_string()))?;
    build_operator(p).map_err(|e| match e {
        Error::BudgetExhausted { .. } => SchemaError::new("prescription.budget", e.to_string()),
        e => SchemaError::new("prescription", e.to_string()),
    })?;
    Ok(())
}

fn check_list<T: Copy>(path: &str, xs: &[T], ok: impl Fn(T) -> bool, what: &str) -> Checked<()> {
    if xs.is_empty() {
        return Err(SchemaError::new(path, "must not be empty"));
    }
    if let Some(i) = xs.iter().position(|&x| !ok(x)) {
        return Err(SchemaError::new(format!("{path}[{i}]"), format!("must be {what}")));
    }
    Ok(())
}

fn resolve_truncation(t: &TruncationSection) -> Checked<()> {
    check_list(
        "truncation.dims",
        &t.dims,
        |d| (1..=MAX_TRUNCATION).contains(&d),
        "in 1..=1024",
    )?;
    if t.dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SchemaError::new("truncation.dims", "must be strictly increasing"));
    }
    check_list(
        "truncation.probes",
        &t.probes,
        |x| (0.0..=1.0).contains(&x),
        "in [0, 1]",
    )?;
    check_list("truncation.eps", &t.eps, |x| x.is_finite() && x > 0.0, "positive")?;
    let owner = format!("family {}", t.family.id());
    match t.family {
        TruncationKind::Accumulation => unused(t.interval.is_some(), "truncation.interval", &owner),
        TruncationKind::UniformInterval => {
            let [lo, hi] = *required(&t.interval, "truncation.interval", &owner)?;
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(SchemaError::new(
                    "truncation.interval",
                    format!("[{lo}, {hi}] must satisfy 0 < lo < hi < 1"),
                ));
            }
            Ok(())
        }
    }
}

fn resolve_morse(m: &MorseSection, x: &SymplecticSystemSpec) -> Checked<f64> {
    if !x.is_riemannian() {
        return Err(SchemaError::new("system.family", "morse scenarios need A = 0, B = I"));
    }
    if m.density < 2 {
        return Err(SchemaError::new("morse.density", "must be at least 2"));
    }
    if m.samples == 0 {
        return Err(SchemaError::new("morse.samples", "must be positive"));
    }
    check_list("morse.meshes", &m.meshes, |k| k >= 2, "at least 2")?;
    let t_end = m.t_end.unwrap_or(x.end);
    if !(t_end > x.start && t_end <= x.end) {
        return Err(SchemaError::new(
            "morse.t_end",
            format!("{t_end} outside ({}, {}]", x.start, x.end),
        ));
    }
    Ok(t_end)
}

impl Scenario {
    /// Applies command-line overrides; they are echoed with the scenario.
    pub fn override_with(&mut self, seed: Option<u64>, step: Option<f64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(h) = step {
            self.grid.step = h;
        }
    }

    pub fn stem(&self) -> String {
        let raw = self.name.as_deref().unwrap_or(self.kind.id());
        let s: String = raw
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        if s.is_empty() {
            self.kind.id().to_string()
        } else {
            s
        }
    }

    pub fn validate(&self) -> Checked<Plan> {
        let h = self.grid.step;
        if !h.is_finite() || h <= 0.0 {
            return Err(SchemaError::new("grid.step", format!("must be positive, got {h}")));
        }
        self.tolerance
            .validate()
            .map_err(|e| SchemaError::new("tolerance", e.to_string()))?;
        let owner = format!("kind {}", self.kind.id());
        let uses = |section: &str| match self.kind {
            Kind::System => section == "system",
            Kind::Morse => section == "system" || section == "morse",
            Kind::Prescription => section == "prescription",
            Kind::Roundtrip => section == "prescription" || section == "roundtrip",
            Kind::TruncationFamily => section == "truncation",
        };
        for (section, present) in [
            ("system", self.system.is_some()),
            ("prescription", self.prescription.is_some()),
            ("roundtrip", self.roundtrip.is_some()),
            ("truncation", self.truncation.is_some()),
            ("morse", self.morse.is_some()),
        ] {
            unused(present && !uses(section), section, &owner)?;
        }
        match self.kind {
            Kind::System | Kind::Morse => {
                let x = resolve_system(required(&self.system, "system", &owner)?, self.seed)?;
                let grid = grid_on(x.start, x.end, h)?;
                check_positive(&x, &grid, &self.tolerance)?;
                if self.kind == Kind::System {
                    return Ok(Plan::System { system: x });
                }
                let section = self.morse.clone().unwrap_or_default();
                let t_end = resolve_morse(&section, &x)?;
                Ok(Plan::Morse {
                    system: x,
                    section,
                    t_end,
                })
            }
            Kind::Prescription => {
                let p = required(&self.prescription, "prescription", &owner)?;
                resolve_prescription(p)?;
                if let Horizon::Finite(b) = p.b {
                    grid_on(p.c, b, h)?;
                }
                Ok(Plan::Prescription {
                    prescription: p.clone(),
                })
            }
            Kind::Roundtrip => {
                let p = required(&self.prescription, "prescription", &owner)?;
                resolve_prescription(p)?;
                let rt = self.roundtrip.unwrap_or(RoundtripSection {
                    start: None,
                    match_tol: default_match_tol(),
                });
                let start = finite("roundtrip.start", rt.start.unwrap_or(p.c - 0.5))?;
                if start >= p.c {
                    return Err(SchemaError::new(
                        "roundtrip.start",
                        format!("{start} must precede prescription.c = {}", p.c),
                    ));
                }
                if !(rt.match_tol.is_finite() && rt.match_tol > 0.0) {
                    return Err(SchemaError::new("roundtrip.match_tol", "must be positive"));
                }
                grid_on(start, p.c, h)?;
                if let Horizon::Finite(b) = p.b {
                    grid_on(start, b, h)?;
                }
                Ok(Plan::Roundtrip {
                    prescription: p.clone(),
                    start,
                    match_tol: rt.match_tol,
                })
            }
            Kind::TruncationFamily => {
                let t = required(&self.truncation, "truncation", &owner)?;
                resolve_truncation(t)?;
                grid_on(0.0, 1.0, h)?;
                Ok(Plan::Truncation { section: t.clone() })
            }
        }
    }
}
