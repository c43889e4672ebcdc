//! Executes a validated plan and collects results, checks and tables.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use conjflow::conjugate::{
    detect_curve, detect_system, morse_flow, truncation_study, BranchCurves, ConjugateReport, DetectOptions,
    PathSource, QualityMetrics,
};
use conjflow::construct::{
    build_operator, curve_to_xi, full_pipeline, prescribed_curve, working_horizon, Horizon, PipelineOptions, Provenance,
};
use conjflow::curve::{Reparam, ShiftedPath};
use conjflow::grid::TimeGrid;
use conjflow::morse::{index_curve, stable_index, IndexProfile, NULLITY_TOL};
use conjflow::{Result, SymOperator};

use crate::scenario::{Plan, Scenario};

pub const DRIFT_BOUND: f64 = 1e-8;
pub const PRESCRIPTION_MATCH_TOL: f64 = 1e-6;
pub const TRUNCATION_MATCH_TOL: f64 = 1e-8;
/// Instants this close to `t_end` leave the index at `t_end` ambiguous.
pub const END_CLEARANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value: json!(value),
            bound: Some(bound),
            passed: value <= bound,
            note: None,
        }
    }

    fn zero(name: &str, count: usize) -> Self {
        Self {
            name: name.into(),
            value: json!(count),
            bound: Some(0.0),
            passed: count == 0,
            note: None,
        }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: json!(ok),
            bound: None,
            passed: ok,
            note: None,
        }
    }

    fn skipped(name: &str, note: String) -> Self {
        Self {
            name: name.into(),
            value: Value::Null,
            bound: None,
            passed: true,
            note: Some(note),
        }
    }

    pub fn describe(&self) -> String {
        match self.bound {
            Some(b) => format!("{} = {} (bound {b:e})", self.name, self.value),
            None => format!("{} = {}", self.name, self.value),
        }
    }
}

/// A plot-ready CSV dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub suffix: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> csv::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

pub struct Outcome {
    pub result: Value,
    pub quality: Option<QualityMetrics>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
}

fn detection_checks(q: &QualityMetrics) -> Vec<Check> {
    let mut c = Vec::new();
    if let Some(d) = q.symplectic_drift {
        c.push(Check::at_most("symplectic_drift", d, DRIFT_BOUND));
    }
    c.push(Check::zero("monotonicity_violations", q.monotonicity_violations));
    c.push(Check::zero("cross_validation_failures", q.cross_validation_failures));
    c.push(Check::zero("guard_violations", q.guard_violations));
    c
}

fn branch_table(b: &BranchCurves) -> Table {
    let width = b.values.iter().map(Vec::len).max().unwrap_or(0);
    let mut header = vec!["t".to_string(), "window".to_string()];
    header.extend((0..width).map(|i| format!("lambda_{i}")));
    let rows = b
        .times
        .iter()
        .zip(&b.window)
        .zip(&b.values)
        .map(|((t, w), v)| {
            let mut r = vec![t.to_string(), w.to_string()];
            r.extend(v.iter().map(f64::to_string));
            r
        })
        .collect();
    Table {
        suffix: "branches",
        header,
        rows,
    }
}

fn instant_table(reports: &[(Option<usize>, &ConjugateReport)]) -> Table {
    let sized = reports.iter().any(|r| r.0.is_some());
    let mut header: Vec<String> = Vec::new();
    if sized {
        header.push("size".into());
    }
    header.extend(["t", "multiplicity", "kind", "window"].map(String::from));
    let mut rows = Vec::new();
    for (size, rep) in reports {
        for i in &rep.instants {
            let mut r = Vec::new();
            if let Some(s) = size {
                r.push(s.to_string());
            }
            let kind = serde_json::to_value(i.kind).ok();
            let kind = kind.as_ref().and_then(Value::as_str).unwrap_or("");
            r.extend([
                i.t.to_string(),
                i.multiplicity.to_string(),
                kind.to_string(),
                i.window.to_string(),
            ]);
            rows.push(r);
        }
    }
    Table {
        suffix: "instants",
        header,
        rows,
    }
}

fn profile_table(p: &IndexProfile) -> Table {
    Table {
        suffix: "index",
        header: ["t", "elements", "index", "nullity"].map(String::from).to_vec(),
        rows: p
            .points
            .iter()
            .map(|q| {
                vec![
                    q.t.to_string(),
                    q.elements.to_string(),
                    q.index.to_string(),
                    q.nullity.to_string(),
                ]
            })
            .collect(),
    }
}

fn instants_line(rep: &ConjugateReport) -> String {
    let parts: Vec<String> = rep
        .instants
        .iter()
        .map(|i| format!("{:.10} (x{})", i.t, i.multiplicity))
        .collect();
    if parts.is_empty() {
        "no conjugate instants".into()
    } else {
        format!("instants: {}", parts.join(", "))
    }
}

fn detect_options(s: &Scenario) -> DetectOptions {
    DetectOptions {
        tol: s.tolerance,
        seed: s.seed,
        ..DetectOptions::default()
    }
}

pub fn execute(plan: &Plan, scenario: &Scenario) -> Result<Outcome> {
    let opts = detect_options(scenario);
    let h = scenario.grid.step;
    match plan {
        Plan::System { system } => {
            let det = detect_system(system, h, &opts)?;
            let flow = morse_flow(&det)?;
            let rep = &det.report;
            let mut checks = detection_checks(&rep.quality);
            checks.push(Check::zero("morse_flow_violations", flow.violations()));
            Ok(Outcome {
                result: json!({
                    "times": rep.times(),
                    "multiplicities": rep.multiplicities(),
                    "detection": rep,
                    "morse_flow_jumps": flow.jumps,
                }),
                quality: Some(rep.quality.clone()),
                checks,
                tables: vec![branch_table(&rep.branches), instant_table(&[(None, rep)])],
                summary: vec![instants_line(rep)],
            })
        }
        Plan::Prescription { prescription: p } => {
            let built = build_operator(p)?;
            let grid = match p.b {
                Horizon::Finite(b) => TimeGrid::new(p.c, b, h)?,
                Horizon::Infinite => {
                    let steps = ((working_horizon(p, &built) - p.c) / h - 1e-9).ceil().max(1.0) as usize;
                    TimeGrid::with_steps(p.c, p.c + steps as f64 * h, steps)?
                }
            };
            let xi = curve_to_xi(prescribed_curve(p, &built.operator, grid.b()));
            let det = detect_curve(Arc::new(xi), grid, &opts)?;
            let rep = &det.report;
            let reparam = p.reparam();
            let expected: Vec<(f64, usize)> = built
                .entries
                .iter()
                .filter(|e| e.provenance != Provenance::Padding)
                .map(|e| (reparam.inverse(e.value), e.count))
                .collect();
            let matched = rep.instants.len() == expected.len()
                && rep
                    .instants
                    .iter()
                    .zip(&expected)
                    .all(|(i, e)| (i.t - e.0).abs() <= PRESCRIPTION_MATCH_TOL && i.multiplicity == e.1);
            let mut checks = detection_checks(&rep.quality);
            checks.insert(0, Check::holds("match", matched));
            Ok(Outcome {
                result: json!({
                    "match": matched,
                    "times": rep.times(),
                    "multiplicities": rep.multiplicities(),
                    "expected": expected.iter().map(|e| json!({"t": e.0, "multiplicity": e.1})).collect::<Vec<_>>(),
                    "operator": built,
                    "detection": rep,
                }),
                quality: Some(rep.quality.clone()),
                checks,
                tables: vec![branch_table(&rep.branches), instant_table(&[(None, rep)])],
                summary: vec![instants_line(rep), format!("match: {matched}")],
            })
        }
        Plan::Roundtrip {
            prescription,
            start,
            match_tol,
        } => {
            let popts = PipelineOptions {
                step: h,
                detect: opts,
                match_tol: *match_tol,
            };
            let r = full_pipeline(prescription, *start, &popts)?;
            let rep = &r.report;
            let mut checks = vec![
                Check::holds("match", r.matched),
                Check::zero("early_instants", r.early_instants),
            ];
            checks.extend(detection_checks(&rep.quality));
            Ok(Outcome {
                result: json!({
                    "match": r.matched,
                    "times": rep.times(),
                    "multiplicities": rep.multiplicities(),
                    "pipeline": r,
                }),
                quality: Some(rep.quality.clone()),
                checks,
                tables: vec![branch_table(&rep.branches), instant_table(&[(None, rep)])],
                summary: vec![instants_line(rep), format!("match: {}", r.matched)],
            })
        }
        Plan::Truncation { section } => {
            let grid = TimeGrid::new(0.0, 1.0, h)?;
            let family = |size: usize| -> Result<PathSource> {
                Ok(PathSource::Operator(Arc::new(ShiftedPath {
                    a: SymOperator::from_diagonal(&section.family.diagonal(size, section.interval)),
                    c: 0.0,
                    b: 1.0,
                    theta: Reparam::Identity,
                })))
            };
            let study = truncation_study(family, &section.dims, grid, &section.probes, &section.eps, &opts)?;
            let mut worst = 0.0_f64;
            let mut miscounted = 0;
            let mut monotonicity = 0;
            for run in &study.runs {
                let mut expect = section.family.diagonal(run.size, section.interval);
                expect.retain(|&v| v > 0.0 && v <= 1.0);
                let times = run.report.times();
                if times.len() != expect.len() || run.report.total_multiplicity() != expect.len() {
                    miscounted += 1;
                }
                for (t, e) in times.iter().zip(&expect) {
                    worst = worst.max((t - e).abs());
                }
                monotonicity += run.report.quality.monotonicity_violations;
            }
            let checks = vec![
                Check::zero("miscounted_truncations", miscounted),
                Check::at_most("max_instant_error", worst, TRUNCATION_MATCH_TOL),
                Check::zero("monotonicity_violations", monotonicity),
            ];
            let mut near_zero = Table {
                suffix: "near_zero",
                header: ["size", "t", "eps", "count"].map(String::from).to_vec(),
                rows: Vec::new(),
            };
            for run in &study.runs {
                for c in &run.near_zero {
                    near_zero.rows.push(vec![
                        run.size.to_string(),
                        c.t.to_string(),
                        c.eps.to_string(),
                        c.count.to_string(),
                    ]);
                }
            }
            let reports: Vec<(Option<usize>, &ConjugateReport)> =
                study.runs.iter().map(|r| (Some(r.size), &r.report)).collect();
            let instants = instant_table(&reports);
            let summary = vec![
                format!(
                    "sizes {:?}: instants {:?}",
                    study.dims,
                    study.runs.iter().map(|r| r.report.instants.len()).collect::<Vec<_>>()
                ),
                match study.gap_exponent {
                    Some(g) => format!("gap exponent: {g:.4}"),
                    None => "gap exponent: undefined".into(),
                },
            ];
            Ok(Outcome {
                result: json!({
                    "gap_exponent": study.gap_exponent,
                    "study": study,
                }),
                quality: None,
                checks,
                tables: vec![near_zero, instants],
                summary,
            })
        }
        Plan::Morse { system, section, t_end } => {
            let det = detect_system(system, h, &opts)?;
            let rep = &det.report;
            let a = system.start;
            let times: Vec<f64> = (1..=section.samples)
                .map(|k| a + (t_end - a) * k as f64 / section.samples as f64)
                .collect();
            let profile = index_curve(system, section.density, &times, NULLITY_TOL)?;
            let stable = stable_index(system, *t_end, &section.meshes, NULLITY_TOL)?;
            let expected: usize = rep
                .instants
                .iter()
                .filter(|i| i.t < t_end - END_CLEARANCE)
                .map(|i| i.multiplicity)
                .sum();
            let mut checks = detection_checks(&rep.quality);
            checks.push(Check::holds("index_stable_across_meshes", stable.stable));
            checks.push(Check::holds("profile_nondecreasing", profile.is_nondecreasing()));
            checks.push(Check::holds("profile_starts_at_zero", profile.starts_at_zero()));
            let near_end = rep.instants.iter().any(|i| (i.t - t_end).abs() < END_CLEARANCE);
            checks.push(if near_end {
                Check::skipped(
                    "index_equals_multiplicity_sum",
                    format!("an instant lies within {END_CLEARANCE:e} of t_end"),
                )
            } else {
                Check {
                    name: "index_equals_multiplicity_sum".into(),
                    value: json!(stable.index()),
                    bound: None,
                    passed: stable.index() == expected,
                    note: Some(format!("multiplicity sum {expected}")),
                }
            });
            let summary = vec![
                instants_line(rep),
                format!(
                    "index at {t_end}: {} on meshes {:?} (stable: {})",
                    stable.index(),
                    stable.elements,
                    stable.stable
                ),
            ];
            Ok(Outcome {
                result: json!({
                    "times": rep.times(),
                    "multiplicities": rep.multiplicities(),
                    "t_end": t_end,
                    "index": stable.index(),
                    "multiplicity_sum": expected,
                    "stable_index": stable,
                    "profile": profile,
                    "detection": rep,
                }),
                quality: Some(rep.quality.clone()),
                checks,
                tables: vec![
                    branch_table(&rep.branches),
                    instant_table(&[(None, rep)]),
                    profile_table(&profile),
                ],
                summary,
            })
        }
    }
}
