//! Detection of conjugate instants.
//!
//! A curve `ξ` with `ξ(a) = L0` is cut into chart windows. Inside a window
//! anchored at `t0` with a companion `L1` transversal to both `L0` and
//! `ξ(t0)`, the operator curve `T(t) = −φ_{L0,L1}(ξ(t))` has positive
//! derivative for positive systems, so its sorted eigenvalues are
//! nondecreasing and each one crosses zero at most once per grid interval.
//! Crossings are bisected per branch and merged into instants.

pub mod flow;
pub mod study;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{LagrangianCurve, OperatorCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{spectrum, SymOperator, Tolerance};
use crate::symplectic::{chart, common_transversal, pair_defect, transversality_gap, Lagrangian};
use crate::system::{integrate, FundamentalSolution, IntegrateOptions, SymplecticSystemSpec};

pub use flow::{isolation_check, morse_flow, FlowJump, MorseFlow};
pub use study::{loglog_slope, truncation_study, NearZeroCount, ProbeCount, TruncationStudy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub tol: Tolerance,
    /// Roots closer than this (absolute, in t) form one instant.
    pub merge_radius: f64,
    /// Bisection stops once the bracket is at most this wide.
    pub root_width: f64,
    /// Seed for the companion-Lagrangian search.
    pub seed: u64,
    pub integrate: IntegrateOptions,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            merge_radius: 1e-8,
            root_width: 1e-12,
            seed: 0,
            integrate: IntegrateOptions::default(),
        }
    }
}

/// What a detector walks along.
#[derive(Clone)]
pub enum PathSource {
    /// `ξ(t) = Φ_t^{-1}(L0)` of an integrated system.
    System(Arc<FundamentalSolution>),
    /// Any Lagrangian curve; `T = −φ_{L0,L1}(ξ)` per window.
    Curve(Arc<dyn LagrangianCurve>),
    /// An operator path used directly as `T`, in a single window.
    Operator(Arc<dyn OperatorCurve>),
}

impl PathSource {
    pub fn n(&self) -> usize {
        match self {
            PathSource::System(s) => s.n(),
            PathSource::Curve(c) => c.n(),
            PathSource::Operator(o) => o.n(),
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            PathSource::System(s) => (s.grid().a(), s.grid().b()),
            PathSource::Curve(c) => c.domain(),
            PathSource::Operator(o) => o.domain(),
        }
    }

    fn frame(&self, t: f64) -> Result<Lagrangian> {
        match self {
            PathSource::System(s) => s.xi(t),
            PathSource::Curve(c) => c.frame(t),
            PathSource::Operator(_) => Err(Error::InvalidInput("operator paths carry no frames".into())),
        }
    }
}

/// A chart window `[t_lo, t_hi]` with its companion Lagrangian and the
/// cached curve `T` on the grid nodes it covers.
#[derive(Debug, Clone, Serialize)]
pub struct ChartWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Anchor instant.
    pub t0: f64,
    /// Node indices covered, inclusive.
    pub lo: usize,
    pub hi: usize,
    /// `min(gap(L1, L0), gap(L1, ξ(t0)))`.
    pub anchor_gap: f64,
    /// Smallest `gap(ξ(t), L1)` over the covered nodes.
    pub min_gap: f64,
    #[serde(skip)]
    pub l1: Option<Lagrangian>,
    /// Sorted eigenvalues of `T` at the covered nodes.
    #[serde(skip)]
    pub eigenvalues: Vec<Vec<f64>>,
}

/// The windows covering a path, with access to `T` anywhere inside them.
#[derive(Clone)]
pub struct WindowChain {
    source: PathSource,
    grid: TimeGrid,
    l0: Lagrangian,
    tol: Tolerance,
    windows: Vec<ChartWindow>,
    starts_at_l0: bool,
}

/// Relative threshold, against the anchor gap, that triggers re-anchoring.
const REANCHOR_FRACTION: f64 = 0.25;

impl WindowChain {
    pub fn build(source: PathSource, grid: TimeGrid, tol: &Tolerance, seed: u64) -> Result<Self> {
        tol.validate()?;
        let n = source.n();
        let l0 = Lagrangian::vertical(n);
        let (da, db) = source.domain();
        let slack = 1e-9 * (1.0 + da.abs().max(db.abs()));
        if grid.a() < da - slack || grid.b() > db + slack {
            return Err(Error::InvalidGrid(format!(
                "grid [{}, {}] exceeds the path domain [{da}, {db}]",
                grid.a(),
                grid.b()
            )));
        }
        let nodes = grid.nodes();
        if let PathSource::Operator(op) = &source {
            let eigenvalues = nodes
                .par_iter()
                .map(|&t| spectrum(&op.value(t)?))
                .collect::<Result<Vec<_>>>()?;
            let window = ChartWindow {
                t_lo: grid.a(),
                t_hi: grid.b(),
                t0: grid.a(),
                lo: 0,
                hi: grid.steps(),
                anchor_gap: f64::INFINITY,
                min_gap: f64::INFINITY,
                l1: None,
                eigenvalues,
            };
            return Ok(Self {
                source,
                grid,
                l0,
                tol: *tol,
                windows: vec![window],
                starts_at_l0: false,
            });
        }

        let frames = nodes.par_iter().map(|&t| source.frame(t)).collect::<Result<Vec<_>>>()?;
        let starts_at_l0 = pair_defect(&frames[0], &l0, tol.kernel_tol).0 == n;
        let mut windows = Vec::new();
        let last = grid.steps();
        let mut k = 0;
        loop {
            let l1 = common_transversal(&l0, &frames[k], seed.wrapping_add(k as u64), tol)?;
            let anchor_gap = transversality_gap(&l1, &l0).min(transversality_gap(&l1, &frames[k]));
            let threshold = (2.0 * tol.gap_tol).max(REANCHOR_FRACTION * anchor_gap);
            let mut j = k;
            let mut min_gap = transversality_gap(&frames[k], &l1);
            while j < last {
                let g = transversality_gap(&frames[j + 1], &l1);
                if g < threshold {
                    break;
                }
                min_gap = min_gap.min(g);
                j += 1;
            }
            if j == k {
                // the curve leaves the fresh chart within one step: accept one
                // interval as long as the chart itself is defined
                let g = transversality_gap(&frames[k + 1], &l1);
                if g < tol.gap_tol {
                    return Err(Error::ChartDomain {
                        which: "window cannot advance",
                        singular_value: g,
                        threshold: tol.gap_tol,
                    });
                }
                min_gap = min_gap.min(g);
                j = k + 1;
            }
            let eigenvalues = (k..=j)
                .into_par_iter()
                .map(|i| {
                    let t = chart(&l0, &l1, &frames[i], tol)?.scale(-1.0);
                    spectrum(&t)
                })
                .collect::<Result<Vec<_>>>()?;
            windows.push(ChartWindow {
                t_lo: nodes[k],
                t_hi: nodes[j],
                t0: nodes[k],
                lo: k,
                hi: j,
                anchor_gap,
                min_gap,
                l1: Some(l1),
                eigenvalues,
            });
            if j == last {
                break;
            }
            k = j;
        }
        Ok(Self {
            source,
            grid,
            l0,
            tol: *tol,
            windows,
            starts_at_l0,
        })
    }

    pub fn source(&self) -> &PathSource {
        &self.source
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn windows(&self) -> &[ChartWindow] {
        &self.windows
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    /// Whether the path starts at `L0` (all of `T(a)` is kernel).
    pub fn starts_at_l0(&self) -> bool {
        self.starts_at_l0
    }

    /// `T(t)` in the chart of window `w`; `t` may lie outside the window as
    /// long as the chart is defined there.
    pub fn value(&self, w: usize, t: f64) -> Result<SymOperator> {
        self.grid.check(t)?;
        match &self.source {
            PathSource::Operator(op) => op.value(t),
            src => {
                let l1 = self.windows[w].l1.as_ref().expect("curve windows carry a companion");
                Ok(chart(&self.l0, l1, &src.frame(t)?, &self.tol)?.scale(-1.0))
            }
        }
    }

    /// Index of the window whose interior (or, failing that, closure)
    /// contains `t`.
    pub fn window_of(&self, t: f64) -> usize {
        self.windows
            .iter()
            .position(|w| t > w.t_lo && t < w.t_hi)
            .or_else(|| self.windows.iter().position(|w| t >= w.t_lo && t <= w.t_hi))
            .unwrap_or(self.windows.len() - 1)
    }
}

/// Classification of a detected instant at fixed truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstantKind {
    Monoconjugate,
    /// More eigenvalues than the multiplicity sit in `(−gap_tol, gap_tol)`.
    ClusterFlagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateInstant {
    pub t: f64,
    pub multiplicity: usize,
    /// Sorted-eigenvalue branches that vanish, in the window's chart.
    pub branches: Vec<usize>,
    pub kind: InstantKind,
    /// Eigenvalues of `T(t)` inside `(−gap_tol, gap_tol)`.
    pub near_zero_profile: Vec<f64>,
    pub window: usize,
    /// `kernel_dim(T(t))` at `kernel_tol`.
    pub kernel_dim: usize,
    /// `dim ξ(t) ∩ L0` from principal angles at `kernel_tol`.
    pub intersection_dim: Option<usize>,
    /// `dim Ker E_t` at `kernel_tol` (systems only).
    pub e_kernel_dim: Option<usize>,
}

impl ConjugateInstant {
    /// All kernel counts agree with the multiplicity.
    pub fn cross_validated(&self) -> bool {
        self.kernel_dim == self.multiplicity
            && self.intersection_dim.is_none_or(|d| d == self.multiplicity)
            && self.e_kernel_dim.is_none_or(|d| d == self.multiplicity)
    }
}

/// Two or more sorted branches that crossed zero within the merge radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub t: f64,
    pub branches: Vec<usize>,
    /// Spread of the merged roots.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct QualityMetrics {
    pub symplectic_drift: Option<f64>,
    pub min_transversality_gap: f64,
    /// Rigorous radius after `a` free of instants (systems only).
    pub delta_guard: Option<f64>,
    pub guard_violations: usize,
    /// `min eig B(a) / (4 max ‖C‖)` (systems only).
    pub heuristic_guard: Option<f64>,
    pub heuristic_guard_violations: usize,
    /// Node-to-node decreases of a sorted branch beyond `1e-9` relative.
    pub monotonicity_violations: usize,
    pub cross_validation_failures: usize,
}

/// Sorted eigenvalues of `T` at grid nodes, per window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchCurves {
    pub times: Vec<f64>,
    pub window: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateReport {
    pub interval: (f64, f64),
    pub step: f64,
    pub instants: Vec<ConjugateInstant>,
    pub windows: Vec<ChartWindow>,
    pub collisions: Vec<Collision>,
    pub quality: QualityMetrics,
    #[serde(skip)]
    pub branches: BranchCurves,
}

impl ConjugateReport {
    pub fn times(&self) -> Vec<f64> {
        self.instants.iter().map(|i| i.t).collect()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.instants.iter().map(|i| i.multiplicity).collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.instants.iter().map(|i| i.multiplicity).sum()
    }
}

/// Report together with the chain it was computed on.
#[derive(Clone)]
pub struct Detection {
    pub report: ConjugateReport,
    pub chain: WindowChain,
}

#[derive(Debug, Clone, Copy)]
struct Root {
    t: f64,
    window: usize,
    branch: usize,
}

fn bisect(chain: &WindowChain, w: usize, branch: usize, mut lo: f64, mut hi: f64, width: f64) -> Result<f64> {
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ev = spectrum(&chain.value(w, mid)?)?;
        if ev[branch] < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest `s > 0` with `b_min·s = 2(e^{xs} − 1 − xs)`; below it the
/// block `Φ12(t) = ∫B + O((e^{x(t−a)} − 1 − x(t−a)))` is invertible.
pub fn delta_guard(b_min: f64, x_norm: f64) -> f64 {
    if b_min <= 0.0 {
        return 0.0;
    }
    if x_norm <= 0.0 {
        return f64::INFINITY;
    }
    let f = |s: f64| b_min * s - 2.0 * ((x_norm * s).exp_m1() - x_norm * s);
    // f > 0 just after 0, f → −∞; bracket the sign change
    let mut hi = b_min / (x_norm * x_norm);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Runs the detector along an already built chain.
pub fn detect_on_chain(chain: WindowChain, opts: &DetectOptions) -> Result<Detection> {
    let tol = opts.tol;
    let grid = *chain.grid();
    let nodes = grid.nodes();
    let mut roots = Vec::new();
    let mut monotonicity_violations = 0;
    let mut branches = BranchCurves::default();
    for (w, win) in chain.windows().iter().enumerate() {
        for (i, k) in (win.lo..=win.hi).enumerate() {
            if w > 0 && i == 0 {
                continue;
            }
            branches.times.push(nodes[k]);
            branches.window.push(w);
            branches.values.push(win.eigenvalues[i].clone());
        }
        let mut brackets = Vec::new();
        for (i, k) in (win.lo..win.hi).enumerate() {
            let (e0, e1) = (&win.eigenvalues[i], &win.eigenvalues[i + 1]);
            for b in 0..e0.len() {
                if e1[b] < e0[b] - 1e-9 * (1.0 + e0[b].abs()) {
                    monotonicity_violations += 1;
                }
                let at_start = k == 0 && chain.starts_at_l0();
                if !at_start && e0[b] < 0.0 && e1[b] >= 0.0 {
                    brackets.push((b, nodes[k], nodes[k + 1]));
                }
            }
        }
        let found = brackets
            .par_iter()
            .map(|&(b, lo, hi)| {
                let t = bisect(&chain, w, b, lo, hi, opts.root_width)?;
                Ok(Root {
                    t,
                    window: w,
                    branch: b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        roots.extend(found);
    }
    roots.sort_by(|x, y| x.t.total_cmp(&y.t));

    // cluster roots; multiplicity is the largest per-window count so that a
    // root seen from both sides of a shared boundary node is counted once
    let mut clusters: Vec<Vec<Root>> = Vec::new();
    for r in roots {
        match clusters.last_mut() {
            Some(c) if r.t - c.last().unwrap().t <= opts.merge_radius => c.push(r),
            _ => clusters.push(vec![r]),
        }
    }
    let a = grid.a();
    let mut instants = Vec::with_capacity(clusters.len());
    let mut collisions = Vec::new();
    for cluster in clusters {
        let mut best_w = cluster[0].window;
        let mut best_count = 0;
        for r in &cluster {
            let count = cluster.iter().filter(|s| s.window == r.window).count();
            if count > best_count {
                best_count = count;
                best_w = r.window;
            }
        }
        let members: Vec<&Root> = cluster.iter().filter(|r| r.window == best_w).collect();
        let t = members.iter().map(|r| r.t).sum::<f64>() / members.len() as f64;
        let mut branch_ids: Vec<usize> = members.iter().map(|r| r.branch).collect();
        branch_ids.sort_unstable();
        if members.len() > 1 {
            let spread = members.last().unwrap().t - members[0].t;
            collisions.push(Collision {
                t,
                branches: branch_ids.clone(),
                spread: spread.abs(),
            });
        }
        if t <= a {
            continue;
        }
        let tv = chain.value(best_w, t)?;
        let ev = spectrum(&tv)?;
        let kernel_dim = ev.iter().filter(|l| l.abs() <= tol.kernel_tol).count();
        let near_zero_profile: Vec<f64> = ev.iter().copied().filter(|l| l.abs() < tol.gap_tol).collect();
        let kind = if near_zero_profile.len() > best_count {
            InstantKind::ClusterFlagged
        } else {
            InstantKind::Monoconjugate
        };
        let (intersection_dim, e_kernel_dim) = match chain.source() {
            PathSource::Operator(_) => (None, None),
            PathSource::Curve(c) => (
                Some(pair_defect(&c.frame(t)?, &Lagrangian::vertical(c.n()), tol.kernel_tol).0),
                None,
            ),
            PathSource::System(s) => {
                let xi = s.xi(t)?;
                let e = crate::system::exp_differential(s, t)?;
                let ek = e.singular_values().iter().filter(|&&v| v <= tol.kernel_tol).count();
                (
                    Some(pair_defect(&xi, &Lagrangian::vertical(s.n()), tol.kernel_tol).0),
                    Some(ek),
                )
            }
        };
        instants.push(ConjugateInstant {
            t,
            multiplicity: best_count,
            branches: branch_ids,
            kind,
            near_zero_profile,
            window: best_w,
            kernel_dim,
            intersection_dim,
            e_kernel_dim,
        });
    }

    let min_gap = chain.windows().iter().map(|w| w.min_gap).fold(f64::INFINITY, f64::min);
    let cross_validation_failures = instants.iter().filter(|i| !i.cross_validated()).count();
    let quality = QualityMetrics {
        symplectic_drift: match chain.source() {
            PathSource::System(s) => Some(s.max_drift().0),
            _ => None,
        },
        min_transversality_gap: min_gap,
        delta_guard: None,
        guard_violations: 0,
        heuristic_guard: None,
        heuristic_guard_violations: 0,
        monotonicity_violations,
        cross_validation_failures,
    };
    let report = ConjugateReport {
        interval: (grid.a(), grid.b()),
        step: grid.step(),
        instants,
        windows: chain.windows().to_vec(),
        collisions,
        quality,
        branches,
    };
    Ok(Detection { report, chain })
}

/// Detects along any path source on `grid`.
pub fn analyze(source: PathSource, grid: TimeGrid, opts: &DetectOptions) -> Result<Detection> {
    let chain = WindowChain::build(source, grid, &opts.tol, opts.seed)?;
    detect_on_chain(chain, opts)
}

/// Integrates a positive system with step `step` and detects its conjugate
/// instants.
pub fn detect_system(x: &SymplecticSystemSpec, step: f64, opts: &DetectOptions) -> Result<Detection> {
    let grid = TimeGrid::new(x.start, x.end, step)?;
    x.check_positive(&grid, &opts.tol)?;
    let sol = integrate(x, step, &opts.integrate)?;
    let b_min = x.min_b_eigenvalue(&grid)?.0;
    let guard = delta_guard(b_min, x.max_norm(&grid)?);
    let heuristic = {
        let c_max = grid
            .nodes()
            .into_iter()
            .map(|t| x.c_at(t).map(|c| c.norm()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0_f64, f64::max);
        let b_a = spectrum(&x.b_at(x.start)?)?[0];
        if c_max > 0.0 {
            b_a / (4.0 * c_max)
        } else {
            f64::INFINITY
        }
    };
    let mut det = analyze(PathSource::System(Arc::new(sol)), grid, opts)?;
    let a = grid.a();
    det.report.quality.delta_guard = Some(guard);
    det.report.quality.guard_violations = det.report.instants.iter().filter(|i| i.t < a + guard).count();
    det.report.quality.heuristic_guard = Some(heuristic);
    det.report.quality.heuristic_guard_violations = det.report.instants.iter().filter(|i| i.t < a + heuristic).count();
    Ok(det)
}

/// [`detect_system`] returning only the report.
pub fn detect(x: &SymplecticSystemSpec, step: f64, opts: &DetectOptions) -> Result<ConjugateReport> {
    Ok(detect_system(x, step, opts)?.report)
}

/// Detects along a Lagrangian curve.
pub fn detect_curve(curve: Arc<dyn LagrangianCurve>, grid: TimeGrid, opts: &DetectOptions) -> Result<Detection> {
    analyze(PathSource::Curve(curve), grid, opts)
}

/// Detects along an operator path `T` with positive derivative.
pub fn detect_operator_path(path: Arc<dyn OperatorCurve>, grid: TimeGrid, opts: &DetectOptions) -> Result<Detection> {
    analyze(PathSource::Operator(path), grid, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{Reparam, ShiftedPath};
    use crate::system::Component;
    use std::f64::consts::PI;

    #[test]
    fn sphere_instants() {
        let x = SymplecticSystemSpec::riemannian(2, 0.0, 10.0, Component::Scalar { value: -1.0 }).unwrap();
        let rep = detect(&x, 1e-3, &DetectOptions::default()).unwrap();
        assert_eq!(rep.multiplicities(), vec![2, 2, 2]);
        for (k, i) in rep.instants.iter().enumerate() {
            assert!((i.t - (k + 1) as f64 * PI).abs() < 1e-8, "{}", i.t);
            assert!(i.cross_validated(), "{i:?}");
        }
        assert_eq!(rep.quality.guard_violations, 0);
        assert_eq!(rep.quality.heuristic_guard_violations, 0);
        assert_eq!(rep.quality.monotonicity_violations, 0);
    }

    #[test]
    fn flat_system_has_no_instants() {
        let x = SymplecticSystemSpec::riemannian(3, 0.0, 5.0, Component::Zero).unwrap();
        let rep = detect(&x, 1e-2, &DetectOptions::default()).unwrap();
        assert!(rep.instants.is_empty());
    }

    #[test]
    fn diagonal_crossings() {
        let path = ShiftedPath {
            a: SymOperator::from_diagonal(&[0.3, 0.5, 0.5]),
            c: 0.0,
            b: 1.0,
            theta: Reparam::Identity,
        };
        let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        let det = detect_operator_path(Arc::new(path), grid, &DetectOptions::default()).unwrap();
        let rep = det.report;
        assert_eq!(rep.multiplicities(), vec![1, 2]);
        assert!((rep.instants[0].t - 0.3).abs() < 1e-10);
        assert!((rep.instants[1].t - 0.5).abs() < 1e-10);
    }

    #[test]
    fn guard_radius_is_sane() {
        // Φ12 = sin(t) for the unit sphere; the guard must stay below π
        let g = delta_guard(1.0, 1.0);
        assert!(g > 0.5 && g < PI, "{g}");
        assert_eq!(delta_guard(1.0, 0.0), f64::INFINITY);
    }
}
