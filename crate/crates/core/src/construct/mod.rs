//! From prescribed conjugate data to a symplectic system, and from there to
//! a conformally flat metric whose axis realizes it.
//!
//! `build_operator` → `prescribed_curve` (`T(t) = θ(t)·I − A`) →
//! `curve_to_xi` (`ξ = φ_{L0,L1}^{-1}(−T)`) → `extend_xi` → `xi_to_system` →
//! `riemannian_reduce` → `realize_metric`.

pub mod extend;
pub mod lift;
pub mod metric;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::conjugate::{detect, ConjugateReport, DetectOptions};
use crate::curve::{ChartedCurve, LagrangianCurve, OperatorCurve, Reparam, ShiftedPath};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::SymOperator;
use crate::symplectic::Lagrangian;
use crate::system::riemannian_reduce;

pub use extend::{extend_xi, BlendedHead, Continuation, ExtendedCurve, Extension, ExtensionChecks};
pub use lift::{lifting_generator, xi_to_system, Lift, LiftMetrics};
pub use metric::{realize_metric, Christoffel, ManifoldScenario};

/// A positive integer or infinity; serialized as a number or `"infinity"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplicity {
    Finite(usize),
    Infinite,
}

impl Multiplicity {
    pub fn finite(self) -> Option<usize> {
        match self {
            Multiplicity::Finite(m) => Some(m),
            Multiplicity::Infinite => None,
        }
    }
}

/// Finite end of the interval, or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrWord<T> {
    Number(T),
    Word(String),
}

fn is_infinity_word(s: &str) -> bool {
    matches!(s, "infinity" | "inf" | "+infinity")
}

impl Serialize for Multiplicity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Multiplicity::Finite(m) => s.serialize_u64(*m as u64),
            Multiplicity::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for Multiplicity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrWord::<usize>::deserialize(d)? {
            NumberOrWord::Number(m) => Ok(Multiplicity::Finite(m)),
            NumberOrWord::Word(w) if is_infinity_word(&w) => Ok(Multiplicity::Infinite),
            NumberOrWord::Word(w) => Err(serde::de::Error::custom(format!(
                "multiplicity must be a positive integer or \"infinity\", got {w:?}"
            ))),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(b) => s.serialize_f64(*b),
            Horizon::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrWord::<f64>::deserialize(d)? {
            NumberOrWord::Number(b) => Ok(Horizon::Finite(b)),
            NumberOrWord::Word(w) if is_infinity_word(&w) => Ok(Horizon::Infinite),
            NumberOrWord::Word(w) => Err(serde::de::Error::custom(format!(
                "horizon must be a number or \"infinity\", got {w:?}"
            ))),
        }
    }
}

impl fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplicity::Finite(m) => write!(f, "{m}"),
            Multiplicity::Infinite => write!(f, "infinity"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescribedPoint {
    pub t: f64,
    pub multiplicity: Multiplicity,
}

fn default_cap() -> usize {
    8
}

fn default_density() -> f64 {
    32.0
}

fn default_budget() -> usize {
    64
}

/// Conjugate data to realize: `K = points ∪ intervals`, `K_m = points`.
///
/// With `b = infinity` all locations are given in `θ`-coordinates in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityPrescription {
    pub c: f64,
    pub b: Horizon,
    #[serde(default)]
    pub points: Vec<PrescribedPoint>,
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    /// Repetitions standing in for infinite multiplicity.
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Samples per unit length on interval components.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Largest admissible operator dimension.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

impl SingularityPrescription {
    pub fn points(c: f64, b: f64, points: &[(f64, usize)]) -> Self {
        Self {
            c,
            b: Horizon::Finite(b),
            points: points
                .iter()
                .map(|&(t, m)| PrescribedPoint {
                    t,
                    multiplicity: Multiplicity::Finite(m),
                })
                .collect(),
            intervals: Vec::new(),
            cap: default_cap(),
            density: default_density(),
            budget: default_budget(),
        }
    }

    /// Open range that locations must lie in.
    pub fn coordinate_range(&self) -> (f64, f64) {
        match self.b {
            Horizon::Finite(b) => (self.c, b),
            Horizon::Infinite => (0.0, 1.0),
        }
    }

    pub fn reparam(&self) -> Reparam {
        match self.b {
            Horizon::Finite(_) => Reparam::Identity,
            Horizon::Infinite => Reparam::Compactify { c: self.c },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPrescription(m));
        if !self.c.is_finite() {
            return bad(format!("c = {} must be finite", self.c));
        }
        if let Horizon::Finite(b) = self.b {
            if !(b.is_finite() && b > self.c) {
                return bad(format!("b = {b} must be finite and exceed c = {}", self.c));
            }
        }
        if self.cap == 0 {
            return bad("cap must be at least 1".into());
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return bad(format!("density {} must be positive", self.density));
        }
        let (lo, hi) = self.coordinate_range();
        let inside = |x: f64| x.is_finite() && x > lo && x < hi;
        for p in &self.points {
            if !inside(p.t) {
                return bad(format!("point {} outside ({lo}, {hi})", p.t));
            }
            if p.multiplicity == Multiplicity::Finite(0) {
                return bad(format!("point {} has multiplicity 0", p.t));
            }
        }
        let mut ts: Vec<f64> = self.points.iter().map(|p| p.t).collect();
        ts.sort_by(f64::total_cmp);
        if ts.windows(2).any(|w| w[1] - w[0] <= 1e-12) {
            return bad("points must be distinct".into());
        }
        for iv in &self.intervals {
            if !(inside(iv[0]) && inside(iv[1]) && iv[0] <= iv[1]) {
                return bad(format!(
                    "interval [{}, {}] is not a closed subinterval of ({lo}, {hi})",
                    iv[0], iv[1]
                ));
            }
            if iv[0] == iv[1] && !ts.iter().any(|&t| (t - iv[0]).abs() <= 1e-12) {
                return bad(format!(
                    "isolated point {} of K must be listed with a multiplicity",
                    iv[0]
                ));
            }
        }
        Ok(())
    }
}

/// Where a diagonal entry of the built operator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Point {
        multiplicity: Multiplicity,
        capped: bool,
    },
    ContinuumSample,
    /// Filler keeping the dimension positive when `K` is empty; never crossed.
    Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub value: f64,
    pub count: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuiltOperator {
    pub operator: SymOperator,
    /// Distinct diagonal values, ascending.
    pub entries: Vec<SpectralEntry>,
    pub capped: bool,
}

impl BuiltOperator {
    pub fn dim(&self) -> usize {
        self.operator.dim()
    }
}

fn merge_intervals(ivs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut v: Vec<[f64; 2]> = ivs.to_vec();
    v.sort_by(|x, y| x[0].total_cmp(&y[0]));
    let mut out: Vec<[f64; 2]> = Vec::new();
    for iv in v {
        match out.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => out.push(iv),
        }
    }
    out
}

/// Diagonal operator: each point repeated `min(m, cap)` times, plus
/// `round(length · density)` uniform samples (ends included) of each
/// interval component.
pub fn build_operator(p: &SingularityPrescription) -> Result<BuiltOperator> {
    p.validate()?;
    let mut entries = Vec::new();
    let mut capped = false;
    for pt in &p.points {
        let (count, is_capped) = match pt.multiplicity {
            Multiplicity::Finite(m) if m <= p.cap => (m, false),
            _ => (p.cap, true),
        };
        capped |= is_capped;
        entries.push(SpectralEntry {
            value: pt.t,
            count,
            provenance: Provenance::Point {
                multiplicity: pt.multiplicity,
                capped: is_capped,
            },
        });
    }
    for iv in merge_intervals(&p.intervals) {
        let len = iv[1] - iv[0];
        let k = if len == 0.0 {
            1
        } else {
            ((len * p.density).round() as usize).max(2)
        };
        for i in 0..k {
            let v = if k == 1 {
                iv[0]
            } else {
                iv[0] + len * i as f64 / (k - 1) as f64
            };
            if p.points.iter().any(|pt| (pt.t - v).abs() <= 1e-9) {
                continue;
            }
            entries.push(SpectralEntry {
                value: v,
                count: 1,
                provenance: Provenance::ContinuumSample,
            });
        }
    }
    if entries.is_empty() {
        let (_, hi) = p.coordinate_range();
        let value = match p.b {
            Horizon::Finite(_) => hi + 1.0,
            Horizon::Infinite => 1.0,
        };
        entries.push(SpectralEntry {
            value,
            count: 1,
            provenance: Provenance::Padding,
        });
    }
    entries.sort_by(|x, y| x.value.total_cmp(&y.value));
    let required: usize = entries.iter().map(|e| e.count).sum();
    if required > p.budget {
        return Err(Error::BudgetExhausted {
            required,
            available: p.budget,
        });
    }
    let diag: Vec<f64> = entries
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.value, e.count))
        .collect();
    Ok(BuiltOperator {
        operator: SymOperator::from_diagonal(&diag),
        entries,
        capped,
    })
}

/// End of the finite working interval. For `b = infinity` it is
/// `θ⁻¹((1 + s_max)/2)`, `s_max` the largest prescribed location.
pub fn working_horizon(p: &SingularityPrescription, built: &BuiltOperator) -> f64 {
    match p.b {
        Horizon::Finite(b) => b,
        Horizon::Infinite => {
            let s_max = built
                .entries
                .iter()
                .filter(|e| e.provenance != Provenance::Padding)
                .map(|e| e.value)
                .fold(0.0, f64::max);
            p.reparam().inverse(0.5 * (1.0 + s_max))
        }
    }
}

/// `T(t) = θ(t)·I − A` on `[c, b_eff]`.
pub fn prescribed_curve(p: &SingularityPrescription, a: &SymOperator, b_eff: f64) -> ShiftedPath {
    ShiftedPath {
        a: a.clone(),
        c: p.c,
        b: b_eff,
        theta: p.reparam(),
    }
}

/// `ξ(t) = φ_{L0,L1}^{-1}(−T(t))` with `L0` vertical and `L1` horizontal.
pub fn curve_to_xi<S: OperatorCurve>(t: S) -> ChartedCurve<S> {
    let n = t.n();
    ChartedCurve::new(Lagrangian::vertical(n), Lagrangian::horizontal(n), t, -1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub step: f64,
    pub detect: DetectOptions,
    /// Largest admissible distance between a detected and a prescribed instant.
    pub match_tol: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            detect: DetectOptions::default(),
            match_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub dimension: usize,
    pub capped: bool,
    pub working_horizon: f64,
    pub extension: ExtensionChecks,
    pub lift: LiftMetrics,
    pub reduction_residual_a: f64,
    pub reduction_residual_b: f64,
    pub reduction_orthogonality_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedInstant {
    /// In `t`-coordinates (mapped through `θ⁻¹` when `b = infinity`).
    pub t: f64,
    pub multiplicity: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedInstant {
    pub t: f64,
    pub multiplicity: usize,
    pub provenance: Option<Provenance>,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineResult {
    #[serde(skip)]
    pub scenario: ManifoldScenario,
    pub report: ConjugateReport,
    pub operator: BuiltOperator,
    pub expected: Vec<ExpectedInstant>,
    pub instants: Vec<MatchedInstant>,
    /// Instants detected in `(a, c]`.
    pub early_instants: usize,
    /// Detected instants equal the expected ones, with multiplicities, and
    /// none lies in `(a, c]`.
    pub matched: bool,
    pub stages: StageMetrics,
}

/// Runs every construction stage from `p`, starting the geodesic at `a < c`,
/// then detects on the resulting Riemannian system.
pub fn full_pipeline(p: &SingularityPrescription, a: f64, opts: &PipelineOptions) -> Result<PipelineResult> {
    let built = build_operator(p)?;
    let h = opts.step;
    let b_eff = match p.b {
        Horizon::Finite(b) => {
            TimeGrid::new(a, b, h)?;
            b
        }
        Horizon::Infinite => {
            let steps = ((working_horizon(p, &built) - a) / h - 1e-9).ceil();
            a + steps * h
        }
    };
    if !(a < p.c) {
        return Err(Error::InvalidPrescription(format!(
            "start {a} must precede c = {}",
            p.c
        )));
    }
    let tol = opts.detect.tol;
    // continue T(t) back from c so the glue is smooth
    let mut t_curve = prescribed_curve(p, &built.operator, b_eff);
    t_curve.c = match p.b {
        Horizon::Finite(_) => a,
        Horizon::Infinite => a.max(p.c - 0.5),
    };
    let xi_bar: Arc<dyn LagrangianCurve> = Arc::new(curve_to_xi(t_curve));
    let ext = extend_xi(xi_bar, p.c, a, h, &tol)?;
    let lift = xi_to_system(ext.curve.as_ref(), h)?;
    let red = riemannian_reduce(&lift.system, h, &tol)?;
    let scenario = realize_metric(&red.system)?;
    let report = detect(&red.system, h, &opts.detect)?;

    let reparam = p.reparam();
    let expected: Vec<ExpectedInstant> = built
        .entries
        .iter()
        .filter(|e| e.provenance != Provenance::Padding)
        .map(|e| ExpectedInstant {
            t: reparam.inverse(e.value),
            multiplicity: e.count,
            provenance: e.provenance,
        })
        .collect();
    let instants: Vec<MatchedInstant> = report
        .instants
        .iter()
        .map(|i| {
            let best = expected
                .iter()
                .min_by(|x, y| (x.t - i.t).abs().total_cmp(&(y.t - i.t).abs()))
                .filter(|e| (e.t - i.t).abs() <= opts.match_tol);
            MatchedInstant {
                t: i.t,
                multiplicity: i.multiplicity,
                provenance: best.map(|e| e.provenance),
                error: best.map(|e| (e.t - i.t).abs()),
            }
        })
        .collect();
    let early_instants = report.instants.iter().filter(|i| i.t <= p.c).count();
    let matched = early_instants == 0
        && report.instants.len() == expected.len()
        && report
            .instants
            .iter()
            .zip(&expected)
            .all(|(i, e)| (i.t - e.t).abs() <= opts.match_tol && i.multiplicity == e.multiplicity);
    let stages = StageMetrics {
        dimension: built.dim(),
        capped: built.capped,
        working_horizon: b_eff,
        extension: ext.checks,
        lift: lift.metrics,
        reduction_residual_a: red.residual_a,
        reduction_residual_b: red.residual_b,
        reduction_orthogonality_drift: red.orthogonality_drift,
    };
    Ok(PipelineResult {
        scenario,
        report,
        operator: built,
        expected,
        instants,
        early_instants,
        matched,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_examples() {
        let p = SingularityPrescription::points(0.0, 1.0, &[(0.3, 1), (0.5, 2)]);
        let b = build_operator(&p).unwrap();
        assert_eq!(b.operator, SymOperator::from_diagonal(&[0.3, 0.5, 0.5]));

        let mut q = SingularityPrescription::points(0.0, 1.0, &[]);
        q.intervals = vec![[0.2, 0.4]];
        q.density = 5.0 / 0.2;
        let b = build_operator(&q).unwrap();
        let d: Vec<f64> = b.operator.matrix().diagonal().iter().copied().collect();
        assert_eq!(d.len(), 5);
        for (k, v) in d.iter().enumerate() {
            assert!((v - (0.2 + 0.05 * k as f64)).abs() < 1e-15);
        }

        let mut r = q.clone();
        r.density = 32.0;
        r.points = vec![PrescribedPoint {
            t: 0.7,
            multiplicity: Multiplicity::Infinite,
        }];
        r.cap = 4;
        let b = build_operator(&r).unwrap();
        assert!(b.capped);
        assert_eq!(b.operator.matrix().diagonal().iter().filter(|&&v| v == 0.7).count(), 4);

        r.budget = 5;
        assert!(matches!(
            build_operator(&r),
            Err(Error::BudgetExhausted { available: 5, .. })
        ));
    }

    #[test]
    fn prescription_validation() {
        let mut p = SingularityPrescription::points(0.0, 1.0, &[(1.3, 1)]);
        assert!(p.validate().is_err());
        p.points.clear();
        p.intervals = vec![[0.4, 0.4]];
        assert!(p.validate().is_err());
        let json = r#"{"c": 0.0, "b": "infinity", "points": [{"t": 0.5, "multiplicity": "infinity"}]}"#;
        let q: SingularityPrescription = serde_json::from_str(json).unwrap();
        assert_eq!(q.b, Horizon::Infinite);
        assert_eq!(q.points[0].multiplicity, Multiplicity::Infinite);
        assert_eq!(q.cap, 8);
        assert!(serde_json::from_str::<SingularityPrescription>(r#"{"c": 0, "b": 1, "extra": 1}"#).is_err());
    }

    #[test]
    fn compactified_curve() {
        let p = SingularityPrescription {
            b: Horizon::Infinite,
            ..SingularityPrescription::points(0.0, 1.0, &[(0.5, 1)])
        };
        let b = build_operator(&p).unwrap();
        let t = prescribed_curve(&p, &b.operator, working_horizon(&p, &b));
        assert_eq!(t.value(0.0).unwrap(), b.operator.scale(-1.0));
        assert!(t.value(1.0).unwrap().norm() < 1e-15);
    }
}
