//! Stable identifiers accepted in scenario files.

use std::fmt::Write;

use crate::scenario::{Family, Kind, TruncationKind, DEFAULT_STEP};

const KIND_NOTES: [(&str, &str); 5] = [
    (
        "system",
        "detect conjugate instants of a positive system (sections: system)",
    ),
    (
        "prescription",
        "build the operator for a prescription and detect along its curve (sections: prescription)",
    ),
    (
        "truncation_family",
        "detect across a family of finite truncations (sections: truncation)",
    ),
    (
        "morse",
        "index profile and stable Morse index of a Riemannian system (sections: system, morse)",
    ),
    (
        "roundtrip",
        "prescription to metric to detection, compared with the prescription (sections: prescription, roundtrip)",
    ),
];

const FAMILY_NOTES: [(&str, &str); 5] = [
    (
        "riemannian_constant_curvature",
        "A = 0, B = I, C = -kappa I (n, interval, kappa)",
    ),
    ("riemannian", "A = 0, B = I, explicit C (n, interval, c)"),
    ("general", "explicit A, B, C (n, interval, a, b, c)"),
    (
        "random_positive",
        "seeded polynomial system with B >= 0.3 (n, interval from 0)",
    ),
    (
        "random_riemannian",
        "seeded C = C0 + t C1 (n, interval from 0, kappa = 4)",
    ),
];

const TRUNCATION_NOTES: [(&str, &str); 2] = [
    ("accumulation", "diag(1 - 1/k), k = 2..N+1 (dims, probes, eps)"),
    (
        "uniform_interval",
        "N equispaced samples of an interval in (0, 1) (dims, probes, eps, interval)",
    ),
];

const COMPONENTS: [(&str, &str); 7] = [
    ("zero", "{}"),
    ("identity", "{}"),
    ("scalar", "{value}"),
    ("constant", "{matrix: rows}"),
    ("polynomial", "{coefficients: [rows]}, sum of t^k M_k"),
    (
        "diagonal_profile",
        "{offset, amplitude, frequency, phase}, diag(offset + amplitude sin(frequency t + phase))",
    ),
    ("tabulated", "{t0, step, values: [rows]}, cubic interpolation"),
];

fn section(out: &mut String, title: &str, rows: &[(&str, &str)]) {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    writeln!(out, "{title}:").unwrap();
    for (id, note) in rows {
        writeln!(out, "  {id:width$}  {note}").unwrap();
    }
}

pub fn render() -> String {
    debug_assert!(Kind::ALL.iter().zip(KIND_NOTES).all(|(k, n)| k.id() == n.0));
    debug_assert!(Family::ALL.iter().zip(FAMILY_NOTES).all(|(f, n)| f.id() == n.0));
    debug_assert!(TruncationKind::ALL
        .iter()
        .zip(TRUNCATION_NOTES)
        .all(|(f, n)| f.id() == n.0));
    let mut out = String::new();
    section(&mut out, "scenario kinds", &KIND_NOTES);
    section(&mut out, "system families", &FAMILY_NOTES);
    section(&mut out, "truncation families", &TRUNCATION_NOTES);
    section(&mut out, "component kinds", &COMPONENTS);
    writeln!(out, "prescription fields:").unwrap();
    writeln!(
        out,
        "  c, b (number or \"infinity\"), points [{{t, multiplicity}}], intervals [[lo, hi]],"
    )
    .unwrap();
    writeln!(out, "  cap = 8, density = 32, budget = 64").unwrap();
    writeln!(out, "defaults:").unwrap();
    writeln!(
        out,
        "  grid.step = {DEFAULT_STEP}, tolerance = {{kernel_tol: 1e-9, gap_tol: 1e-6}}, seed = 0"
    )
    .unwrap();
    out
}
