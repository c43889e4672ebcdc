//! Acceptance runs. Prints one PASS/FAIL line per check and exits nonzero if
//! any check fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use conjflow::conjugate::{
    detect, detect_operator_path, morse_flow, truncation_study, ConjugateReport, DetectOptions, PathSource,
};
use conjflow::construct::{full_pipeline, realize_metric, PipelineOptions};
use conjflow::curve::{Reparam, ShiftedPath};
use conjflow::grid::TimeGrid;
use conjflow::linalg::{norm2, spectral_shift_witness, spectrum};
use conjflow::morse::{discretize_on_mesh, image_map, stable_index, NULLITY_TOL, STABLE_MESHES};
use conjflow::random;
use conjflow::system::{
    integrate, riemannian_reduce, tangent_identity_defect, Component, IntegrateOptions, SymplecticSystemSpec,
};
use conjflow::{SymOperator, Tolerance};

const STEP: f64 = 1e-3;

static DRIFT: Mutex<(f64, usize)> = Mutex::new((0.0, 0));

fn record_drift(d: f64) {
    let mut g = DRIFT.lock().unwrap();
    g.0 = g.0.max(d);
    g.1 += 1;
}

fn record_report(r: &ConjugateReport) {
    if let Some(d) = r.quality.symplectic_drift {
        record_drift(d);
    }
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn check(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    };
    let took = start.elapsed();
    let out = match (out, limit) {
        (Ok(_), Some(l)) if took > l => Err(format!("took {:.1} s, limit {} s", took.as_secs_f64(), l.as_secs())),
        (o, _) => o,
    };
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d.clone()),
        Err(d) => ("FAIL", d.clone()),
    };
    println!("{tag} {id:>2} {name}: {detail} [{:.1} s]", took.as_secs_f64());
    out.is_ok()
}

fn constant_curvature() -> Outcome {
    let mut worst = 0.0_f64;
    for kappa in [1.0_f64, 4.0] {
        let r = kappa.sqrt();
        let x = SymplecticSystemSpec::riemannian(2, 0.0, 10.0 / r, Component::Scalar { value: -kappa })
            .map_err(|e| e.to_string())?;
        let rep = detect(&x, STEP, &DetectOptions::default()).map_err(|e| e.to_string())?;
        record_report(&rep);
        ensure(rep.multiplicities() == vec![2, 2, 2], || {
            format!("kappa {kappa}: multiplicities {:?}", rep.multiplicities())
        })?;
        for (k, t) in rep.times().into_iter().enumerate() {
            worst = worst.max((t - (k + 1) as f64 * PI / r).abs());
        }
        let idx = stable_index(&x, 2.5 * PI / r, &STABLE_MESHES, NULLITY_TOL).map_err(|e| e.to_string())?;
        ensure(idx.stable && idx.index() == 4, || {
            format!("kappa {kappa}: index {:?}", idx.results)
        })?;
    }
    ensure(worst <= 1e-8, || format!("instant error {worst:.2e}"))?;
    Ok(format!(
        "instants kπ/√κ with multiplicity 2, max error {worst:.1e}; index 4 at 2.5π/√κ"
    ))
}

fn accumulation(n: usize) -> conjflow::Result<PathSource> {
    let d: Vec<f64> = (2..=n + 1).map(|k| 1.0 - 1.0 / k as f64).collect();
    Ok(PathSource::Operator(Arc::new(ShiftedPath {
        a: SymOperator::from_diagonal(&d),
        c: 0.0,
        b: 1.0,
        theta: Reparam::Identity,
    })))
}

fn truncations() -> Outcome {
    let dims = [4, 8, 16, 32, 64];
    let grid = TimeGrid::new(0.0, 1.0, STEP).map_err(|e| e.to_string())?;
    let study = truncation_study(accumulation, &dims, grid, &[1.0], &[0.05], &DetectOptions::default())
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for run in &study.runs {
        let times = run.report.times();
        ensure(
            times.len() == run.size && run.report.multiplicities().iter().all(|&m| m == 1),
            || format!("N = {}: {} instants", run.size, times.len()),
        )?;
        for (i, t) in times.iter().enumerate() {
            worst = worst.max((t - (1.0 - 1.0 / (i + 2) as f64)).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("instant error {worst:.2e}"))?;
    let slope = study.gap_exponent.ok_or("no gap exponent")?;
    ensure((slope + 2.0).abs() <= 0.2, || format!("gap exponent {slope:.3}"))?;
    let counts: Vec<(usize, usize)> = study
        .runs
        .iter()
        .map(|r| (r.size, r.count(1.0, 0.05).unwrap_or(usize::MAX)))
        .collect();
    for &(n, c) in counts.iter().filter(|c| c.0 > 20) {
        ensure(c + 19 == n, || format!("near-zero count {c} at N = {n}"))?;
    }
    Ok(format!(
        "max error {worst:.1e}, gap exponent {slope:.3}, near-zero counts {counts:?}"
    ))
}

fn prescriptions() -> Outcome {
    let mut rng = random::rng(0x5eed_0003);
    let cases: Vec<_> = (0..100)
        .map(|_| random::point_prescription(&mut rng, 5, 3, 12, (0.1, 0.9), 0.02))
        .collect();
    let opts = PipelineOptions::default();
    let failures: Vec<String> = cases
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| match full_pipeline(p, -0.5, &opts) {
            Ok(r) => {
                record_report(&r.report);
                (!r.matched).then(|| format!("case {i}: expected {:?}, got {:?}", r.expected, r.instants))
            }
            Err(e) => Some(format!("case {i}: {e}")),
        })
        .collect();
    ensure(failures.is_empty(), || {
        format!("{} mismatches; first: {}", failures.len(), failures[0])
    })?;
    let dims: Vec<usize> = cases
        .iter()
        .map(|p| p.points.iter().map(|q| q.multiplicity.finite().unwrap_or(0)).sum())
        .collect();
    Ok(format!(
        "100 prescriptions reproduced, dimensions {}..={}",
        dims.iter().min().unwrap(),
        dims.iter().max().unwrap()
    ))
}

fn tangent_identity() -> Outcome {
    let mut rng = random::rng(0x5eed_0004);
    let mut worst = 0.0_f64;
    for i in 0..50 {
        let n = 1 + i % 6;
        let x = random::positive_system(&mut rng, n, 2.0);
        let sol = integrate(&x, STEP, &IntegrateOptions::default()).map_err(|e| format!("case {i}: {e}"))?;
        record_drift(sol.max_drift().0);
        for k in 0..8 {
            let t = 0.1 + 0.25 * k as f64 + rng.random_range(0.0..0.01);
            let d = tangent_identity_defect(&sol, t, STEP).map_err(|e| format!("case {i}, t = {t}: {e}"))?;
            worst = worst.max(d);
        }
    }
    ensure(worst <= 1e-4, || format!("relative defect {worst:.2e}"))?;
    Ok(format!("50 systems, n ≤ 6, max relative defect {worst:.1e}"))
}

fn reduction() -> Outcome {
    let mut rng = random::rng(0x5eed_0005);
    let systems: Vec<_> = (0..25)
        .map(|i| random::positive_system(&mut rng, 1 + i % 4, 4.0))
        .collect();
    let tol = Tolerance::default();
    let results = systems
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<(f64, f64, usize), String> {
            let fail = |e: conjflow::Error| format!("case {i}: {e}");
            let red = riemannian_reduce(x, STEP, &tol).map_err(fail)?;
            let opts = DetectOptions::default();
            let r0 = detect(x, STEP, &opts).map_err(fail)?;
            let r1 = detect(&red.system, STEP, &opts).map_err(fail)?;
            record_report(&r0);
            record_report(&r1);
            ensure(r0.multiplicities() == r1.multiplicities(), || {
                format!(
                    "case {i}: multiplicities {:?} vs {:?}",
                    r0.multiplicities(),
                    r1.multiplicities()
                )
            })?;
            let dt = r0
                .times()
                .iter()
                .zip(r1.times())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let s0 = integrate(x, STEP, &IntegrateOptions::default()).map_err(fail)?;
            let s1 = integrate(&red.system, STEP, &IntegrateOptions::default()).map_err(fail)?;
            let phi_a_inv = red
                .gauge
                .phi(x.start)
                .map_err(fail)?
                .try_inverse()
                .ok_or(format!("case {i}: singular gauge"))?;
            let mut dphi = 0.0_f64;
            for (k, t) in s0.grid().nodes().into_iter().enumerate() {
                let expect = red.gauge.phi(t).map_err(fail)? * s0.node(k) * &phi_a_inv;
                dphi = dphi.max(norm2(&(s1.node(k) - expect)));
            }
            Ok((dt, dphi, r0.instants.len()))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let dt = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let dphi = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let count: usize = results.iter().map(|r| r.2).sum();
    ensure(dt <= 1e-6, || format!("instant mismatch {dt:.2e}"))?;
    ensure(dphi <= 1e-6, || format!("fundamental solution mismatch {dphi:.2e}"))?;
    Ok(format!(
        "25 systems, {count} instants, max shift {dt:.1e}, max ‖Φ̃ − φΦφ(a)⁻¹‖ {dphi:.1e}"
    ))
}

fn spectral_suite() -> Outcome {
    const TRIALS: usize = 1000;
    let mut rng = random::rng(0x5eed_0006);
    let (mut witness_fail, mut weyl_fail, mut invert_fail) = (0, 0, 0);
    for _ in 0..TRIALS {
        let n = rng.random_range(1..=12);
        let t = random::symmetric(&mut rng, n, 4.0);
        let h = random::symmetric(&mut rng, n, 1.0);
        let w = spectral_shift_witness(&t, &h).map_err(|e| e.to_string())?;
        witness_fail += w.iter().filter(|x| x.mu.is_none()).count();

        let b = t.add(&h);
        let (sa, sb) = (
            spectrum(&t).map_err(|e| e.to_string())?,
            spectrum(&b).map_err(|e| e.to_string())?,
        );
        let bound = norm2(&(b.matrix() - t.matrix())) + 1e-9;
        weyl_fail += sa
            .iter()
            .filter(|&&l| !sb.iter().any(|&m| (l - m).abs() <= bound))
            .count();

        let c: f64 = -rng.random_range(0.1..2.0);
        let ev: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    rng.random_range(0.0..3.0)
                } else {
                    c - rng.random_range(0.0..3.0)
                }
            })
            .collect();
        let q = random::orthogonal(&mut rng, n);
        let tt = SymOperator::from_diagonal(&ev).congruence(&q.transpose());
        let hh = random::with_spectrum_in(&mut rng, n, 1e-3 * c.abs(), 0.999 * c.abs());
        let s = spectrum(&tt.add(&hh)).map_err(|e| e.to_string())?;
        let floor = 1e-12 * (1.0 + tt.norm());
        if s.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min) <= floor {
            invert_fail += 1;
        }
    }
    ensure(witness_fail + weyl_fail + invert_fail == 0, || {
        format!("counterexamples: shift witness {witness_fail}, Weyl {weyl_fail}, invertibility {invert_fail}")
    })?;
    Ok(format!(
        "{TRIALS} instances each of the shift witness, Weyl and invertibility laws, no counterexamples"
    ))
}

fn morse_flow_law() -> Outcome {
    let mut rng = random::rng(0x5eed_0007);
    let grid = TimeGrid::new(0.0, 1.0, STEP).map_err(|e| e.to_string())?;
    let (mut jumps, mut bad) = (0, Vec::new());
    for i in 0..50 {
        let n = 1 + i % 8;
        let path = random::increasing_path(&mut rng, n);
        let det = detect_operator_path(Arc::new(path), grid, &DetectOptions::default())
            .map_err(|e| format!("case {i}: {e}"))?;
        let flow = morse_flow(&det).map_err(|e| format!("case {i}: {e}"))?;
        jumps += flow.jumps.len();
        bad.extend(
            flow.jumps
                .iter()
                .filter(|j| !j.consistent())
                .map(|j| format!("case {i}: {j:?}")),
        );
    }
    ensure(jumps > 0, || "no crossings".into())?;
    ensure(bad.is_empty(), || {
        format!("{} inconsistent jumps; first: {}", bad.len(), bad[0])
    })?;
    Ok(format!(
        "50 paths, {jumps} crossings, every jump equals the kernel dimension"
    ))
}

fn index_theorem() -> Outcome {
    let mut rng = random::rng(0x5eed_0008);
    let mut cases = Vec::new();
    while cases.len() < 25 {
        let n = 1 + cases.len() % 4;
        let horizon = (rng.random_range(2.0..6.0) / STEP).round() * STEP;
        let kappa = rng.random_range(1.0..6.0);
        cases.push(random::riemannian_system(&mut rng, n, horizon, kappa));
    }
    let results = cases
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<(usize, bool), String> {
            let fail = |e: conjflow::Error| format!("case {i}: {e}");
            let rep = detect(x, STEP, &DetectOptions::default()).map_err(fail)?;
            record_report(&rep);
            let near_end = rep.times().iter().any(|&t| (t - x.end).abs() < 1e-3);
            if near_end {
                return Ok((0, false));
            }
            let total = rep.total_multiplicity();
            let idx = stable_index(x, x.end, &STABLE_MESHES, NULLITY_TOL).map_err(fail)?;
            ensure(
                idx.stable && idx.index() == total && idx.results.iter().all(|r| r.nullity == 0),
                || format!("case {i}: detector {total}, form {:?}", idx.results),
            )?;
            Ok((total, true))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let used = results.iter().filter(|r| r.1).count();
    ensure(used == 25, || {
        format!("{} systems had an instant within 1e-3 of the end", 25 - used)
    })?;
    let total: usize = results.iter().map(|r| r.0).sum();
    Ok(format!(
        "25 systems, n ≤ 4, index equals the multiplicity sum ({total} in total) on every mesh"
    ))
}

fn image_checks() -> Outcome {
    let mut rng = random::rng(0x5eed_0009);
    let mut worst = 0.0_f64;
    let cases = [
        (2, 0.0, 1.0, 1000),
        (1, -1.0, PI, 3000),
        (2, -1.0, PI, 3000),
        (2, -1.0, 2.0 * PI, 6000),
    ];
    for (n, c, b, steps) in cases {
        let x =
            SymplecticSystemSpec::riemannian(n, 0.0, b, Component::Scalar { value: c }).map_err(|e| e.to_string())?;
        let h = b / steps as f64;
        let sol = integrate(&x, h, &IntegrateOptions::default()).map_err(|e| e.to_string())?;
        record_drift(sol.max_drift().0);
        let d = discretize_on_mesh(&x, sol.grid().nodes()).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let coef = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
            let m = d.elements();
            let v = DVector::from_fn(d.dim(), |r, _| {
                let (k, i) = (r / n, r % n);
                let s = (k + 1) as f64 / m as f64;
                (PI * s).sin() * coef[i] + 0.3 * (2.0 * PI * s).sin() * coef[n + i]
            });
            let z = d
                .to_path(&d.riesz(&v).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let r = image_map(&sol, &z).map_err(|e| e.to_string())?;
            worst = worst.max(r.residual);
        }
    }
    ensure(worst <= 1e-5, || format!("residual {worst:.2e}"))?;
    Ok(format!("flat and sphere-like cases, max residual {worst:.1e}"))
}

fn metric_checks() -> Outcome {
    let mut rng = random::rng(0x5eed_0010);
    let (mut chris, mut geo, mut jac) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..6 {
        let n = 1 + i % 3;
        let x = random::riemannian_system(&mut rng, n, 2.0, 2.0);
        let s = realize_metric(&x).map_err(|e| e.to_string())?;
        for k in 0..5 {
            let t = 0.2 + 0.4 * k as f64;
            let mut p = DVector::zeros(n + 1);
            p[n] = t;
            for g in s.christoffel_fd(&p, 1e-4).map_err(|e| e.to_string())? {
                chris = chris.max(g.amax());
            }
            let j = s.jacobi_operator(t, 1e-3).map_err(|e| e.to_string())?;
            let c = x.c_at(t).map_err(|e| e.to_string())?;
            let rel = norm2(&(j - c.matrix())) / c.norm().max(1e-12);
            jac = jac.max(rel);
        }
        let mut p0 = DVector::zeros(n + 1);
        let mut v0 = DVector::zeros(n + 1);
        v0[n] = 1.0;
        p0[n] = 0.0;
        let path = s.geodesic(&p0, &v0, 1e-3, 1000).map_err(|e| e.to_string())?;
        for (k, p) in path.iter().enumerate() {
            let mut expect = DVector::zeros(n + 1);
            expect[n] = k as f64 * 1e-3;
            geo = geo.max((p - expect).amax());
        }
    }
    ensure(chris <= 1e-6, || format!("Christoffel on axis {chris:.2e}"))?;
    ensure(geo <= 1e-6, || format!("geodesic deviation {geo:.2e}"))?;
    ensure(jac <= 2e-3, || format!("Jacobi operator mismatch {jac:.2e}"))?;
    Ok(format!(
        "Christoffel on axis {chris:.1e}, geodesic deviation {geo:.1e}, Jacobi operator {jac:.1e} relative"
    ))
}

fn drift() -> Outcome {
    let (d, runs) = *DRIFT.lock().unwrap();
    ensure(runs > 0, || "no runs recorded".into())?;
    ensure(d <= 1e-8, || format!("drift {d:.2e} over {runs} runs"))?;
    Ok(format!("max drift {d:.1e} over {runs} integrations"))
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let results = [
        check(1, "constant curvature", secs(30), constant_curvature),
        check(2, "accumulating truncations", secs(60), truncations),
        check(3, "prescribed instants through the pipeline", secs(600), prescriptions),
        check(4, "tangent identity", None, tangent_identity),
        check(5, "gauge reduction", None, reduction),
        check(6, "spectral lemmas", None, spectral_suite),
        check(7, "index jumps along operator paths", None, morse_flow_law),
        check(8, "index form against detector", secs(600), index_theorem),
        check(9, "image map", None, image_checks),
        check(10, "metric realization", None, metric_checks),
        check(11, "symplectic drift", None, drift),
    ];
    let failed = results.iter().filter(|r| !**r).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
