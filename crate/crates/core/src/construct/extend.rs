//! Extension of a Lagrangian curve `ξ̄` on `[c, b]` back to `[a, b]` with
//! `ξ(a) = L0` and `ξ(t)` transversal to `L0` on `(a, c]`.
//!
//! Work in the chart `(L0, L1′)` with `φ_{L0,L1′}(ξ̄(c)) = −I`, and let `E(t)`
//! be the chart value of a continuation of `ξ̄` before `c` (the curve itself
//! when its domain reaches back, otherwise `E(c) + (t − c)E′(c)`).
//!
//! If `E` is negative definite and decreasing on all of `[a, c]`, the head is
//! `σ(t) = E(t) − (1 − s)⁶E(a)`, `s = (t − a)/(c − a)`, which agrees with `E`
//! at `c` to fifth order.
//!
//! Otherwise, with `E ≤ −m` on `[c − w, c]`, the head is
//! `σ(t) = β(t) E(t) + (1 − β(t)) P(t)`, `P(t) = −(m/2)(t − a)/(c − a)·I`,
//! with `β` a smooth step from 0 at `c − w` to 1 at `c − w/2`. Since
//! `E ≤ −m < P` on the blend, `σ′ = β′(E − P) + βE′ + (1 − β)P′ < 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::{ChartedCurve, LagrangianCurve, OperatorCurve};
use crate::error::{Error, Result};
use crate::grid::{self, TimeGrid};
use crate::linalg::{spectrum, SymOperator, Tolerance};
use crate::symplectic::{chart, chart_inverse, chart_inverse_with_frame, transversality_gap, Lagrangian};

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn bump_derivative(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp() / (x * x)
    }
}

/// `C^∞` step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    let (p, q) = (bump(x), bump(1.0 - x));
    p / (p + q)
}

pub fn smooth_step_derivative(x: f64) -> f64 {
    let (p, q) = (bump(x), bump(1.0 - x));
    (bump_derivative(x) * q + p * bump_derivative(1.0 - x)) / (p + q).powi(2)
}

#[derive(Clone)]
pub enum Continuation {
    Curve(Arc<dyn LagrangianCurve>),
    Linear { value: SymOperator, slope: SymOperator },
}

/// Exponent of the correction weight `(1 − s)^k` in the global head.
const GLOBAL_ORDER: i32 = 6;

#[derive(Clone)]
pub enum HeadMode {
    /// `σ = E − (1 − s)⁶E(a)`.
    Global { start: SymOperator },
    /// Blend starts at `c − w` and ends at `c − w/2`.
    Blend { w: f64, m: f64 },
}

/// The head chart value `σ` on `[a, c]`.
#[derive(Clone)]
pub struct BlendedHead {
    pub a: f64,
    pub c: f64,
    pub mode: HeadMode,
    pub l0: Lagrangian,
    pub l1: Lagrangian,
    pub continuation: Continuation,
    tol: Tolerance,
}

impl BlendedHead {
    /// Chart value of the continuation.
    pub fn continuation_value(&self, t: f64) -> Result<SymOperator> {
        match &self.continuation {
            Continuation::Curve(xi) => chart(&self.l0, &self.l1, &xi.frame(t)?, &self.tol),
            Continuation::Linear { value, slope } => Ok(value.add(&slope.scale(t - self.c))),
        }
    }

    /// `E′ = Rᵀ H R`, `R = Fᵀ G` with `G` the graph frame of `E`.
    pub fn continuation_derivative(&self, t: f64) -> Result<SymOperator> {
        match &self.continuation {
            Continuation::Curve(xi) => {
                let e = self.continuation_value(t)?;
                let (_, g) = chart_inverse_with_frame(&self.l0, &self.l1, &e)?;
                let r = xi.frame(t)?.frame().transpose() * g;
                Ok(xi.tangent(t)?.congruence(&r))
            }
            Continuation::Linear { slope, .. } => Ok(slope.clone()),
        }
    }

    fn blend(&self) -> (f64, f64) {
        match self.mode {
            HeadMode::Blend { w, m } => (w, m),
            HeadMode::Global { .. } => (0.0, 0.0),
        }
    }

    fn blend_coordinate(&self, t: f64) -> f64 {
        let (w, _) = self.blend();
        (t - (self.c - w)) / (0.5 * w)
    }

    fn profile(&self, t: f64) -> f64 {
        -0.5 * self.blend().1 * (t - self.a) / (self.c - self.a)
    }

    fn weight(&self, t: f64) -> (f64, f64) {
        let l = self.c - self.a;
        let u = ((self.c - t) / l).clamp(0.0, 1.0);
        let k = GLOBAL_ORDER;
        (u.powi(k), -(k as f64) * u.powi(k - 1) / l)
    }
}

impl OperatorCurve for BlendedHead {
    fn n(&self) -> usize {
        self.l0.n()
    }

    fn domain(&self) -> (f64, f64) {
        (self.a, self.c)
    }

    fn value(&self, t: f64) -> Result<SymOperator> {
        let n = self.n();
        if let HeadMode::Global { start } = &self.mode {
            let (g, _) = self.weight(t);
            return Ok(self.continuation_value(t)?.sub(&start.scale(g)));
        }
        let x = self.blend_coordinate(t);
        let p = SymOperator::scaled_identity(n, self.profile(t));
        if x <= 0.0 {
            return Ok(p);
        }
        let e = self.continuation_value(t)?;
        if x >= 1.0 {
            return Ok(e);
        }
        let b = smooth_step(x);
        Ok(e.scale(b).add(&p.scale(1.0 - b)))
    }

    fn derivative(&self, t: f64) -> Result<SymOperator> {
        let n = self.n();
        if let HeadMode::Global { start } = &self.mode {
            let (_, dg) = self.weight(t);
            return Ok(self.continuation_derivative(t)?.sub(&start.scale(dg)));
        }
        let (w, m) = self.blend();
        let x = self.blend_coordinate(t);
        let dp = SymOperator::scaled_identity(n, -0.5 * m / (self.c - self.a));
        if x <= 0.0 {
            return Ok(dp);
        }
        let de = self.continuation_derivative(t)?;
        if x >= 1.0 {
            return Ok(de);
        }
        let e = self.continuation_value(t)?;
        let p = SymOperator::scaled_identity(n, self.profile(t));
        let b = smooth_step(x);
        let db = smooth_step_derivative(x) / (0.5 * w);
        Ok(e.sub(&p).scale(db).add(&de.scale(b)).add(&dp.scale(1.0 - b)))
    }
}

/// `ξ` on `[a, b]`: the blended head on `[a, c)`, the given curve on `[c, b]`.
pub struct ExtendedCurve {
    pub head: ChartedCurve<BlendedHead>,
    pub tail: Arc<dyn LagrangianCurve>,
    pub a: f64,
    pub c: f64,
}

impl LagrangianCurve for ExtendedCurve {
    fn n(&self) -> usize {
        self.tail.n()
    }

    fn domain(&self) -> (f64, f64) {
        (self.a, self.tail.domain().1)
    }

    fn frame(&self, t: f64) -> Result<Lagrangian> {
        self.check(t)?;
        if t < self.c {
            self.head.frame(t)
        } else {
            self.tail.frame(t)
        }
    }

    fn tangent(&self, t: f64) -> Result<SymOperator> {
        self.check(t)?;
        if t < self.c {
            self.head.tangent(t)
        } else {
            self.tail.tangent(t)
        }
    }
}

/// Postcondition measurements of [`extend_xi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionChecks {
    /// `‖σ(a)‖₂`.
    pub start_value: f64,
    /// Largest eigenvalue of `σ` over the nodes in `(a, c]`.
    pub max_sigma_eigenvalue: f64,
    /// Largest eigenvalue of `σ′` over the nodes in `[a, c]`.
    pub max_sigma_prime_eigenvalue: f64,
    /// `‖σ(c⁻) − σ̄(c)‖₂`.
    pub value_mismatch: f64,
    /// `‖σ′(c⁻) − σ̄′(c)‖₂ / ‖σ̄′(c)‖₂`, with `σ̄′` by one-sided differences.
    pub derivative_mismatch: f64,
    /// Blend width and margin used; zero for the global head.
    pub blend_width: f64,
    pub margin: f64,
    pub global: bool,
    /// Whether the head continues the curve itself (smooth glue) or its
    /// first-order Taylor polynomial (`C¹` glue).
    pub smooth: bool,
}

const START_BOUND: f64 = 1e-10;
const MATCH_BOUND: f64 = 1e-6;

impl ExtensionChecks {
    pub fn verify(&self) -> Result<()> {
        let fail = |check: &str, value: f64, bound: f64| {
            Err(Error::Verification {
                check: check.into(),
                value,
                bound,
            })
        };
        if !(self.start_value <= START_BOUND) {
            return fail("extension starts at L0", self.start_value, START_BOUND);
        }
        if !(self.max_sigma_eigenvalue < 0.0) {
            return fail(
                "extension chart value negative definite",
                self.max_sigma_eigenvalue,
                0.0,
            );
        }
        if !(self.max_sigma_prime_eigenvalue < 0.0) {
            return fail(
                "extension chart derivative negative definite",
                self.max_sigma_prime_eigenvalue,
                0.0,
            );
        }
        if !(self.value_mismatch <= MATCH_BOUND) {
            return fail("extension value matches at c", self.value_mismatch, MATCH_BOUND);
        }
        if !(self.derivative_mismatch <= MATCH_BOUND) {
            return fail(
                "extension derivative matches at c",
                self.derivative_mismatch,
                MATCH_BOUND,
            );
        }
        Ok(())
    }
}

pub struct Extension {
    pub curve: Arc<ExtendedCurve>,
    /// Companion with `φ_{L0,L1′}(ξ̄(c)) = −I`.
    pub l1: Lagrangian,
    pub checks: ExtensionChecks,
}

/// Samples per candidate blend window.
const WINDOW_SAMPLES: usize = 64;
const GLOBAL_SAMPLES: usize = 256;
/// Largest admissible `‖E(t)‖ / ‖E(c)‖` on the blend window.
const WINDOW_GROWTH: f64 = 8.0;

/// Extends `xi_bar` from `[c, b]` to `[a, b]`. If the domain of `xi_bar`
/// starts before `c`, that part is used as the continuation and the glue is
/// smooth. Postconditions are measured on the nodes of step `step` in
/// `[a, c]` and enforced.
pub fn extend_xi(xi_bar: Arc<dyn LagrangianCurve>, c: f64, a: f64, step: f64, tol: &Tolerance) -> Result<Extension> {
    let n = xi_bar.n();
    let (lo, hi) = xi_bar.domain();
    if !(a < c) {
        return Err(Error::InvalidInput(format!("extension start {a} must precede {c}")));
    }
    if c < lo || c >= hi {
        return Err(Error::OutOfRange { t: c, a: lo, b: hi });
    }
    let l0 = Lagrangian::vertical(n);
    let xc = xi_bar.frame(c)?;
    let gap = transversality_gap(&xc, &l0);
    if gap < tol.gap_tol {
        return Err(Error::ChartDomain {
            which: "curve at the glue point meets L0",
            singular_value: gap,
            threshold: tol.gap_tol,
        });
    }
    let l1 = chart_inverse(&l0, &xc, &SymOperator::identity(n))?;
    let s_c = chart(&l0, &l1, &xc, tol)?;

    let smooth = lo < c;
    let mut head = BlendedHead {
        a,
        c,
        mode: HeadMode::Blend { w: 0.0, m: 0.0 },
        l0: l0.clone(),
        l1: l1.clone(),
        continuation: Continuation::Curve(xi_bar.clone()),
        tol: *tol,
    };
    if !smooth {
        let (_, g) = chart_inverse_with_frame(&l0, &l1, &s_c)?;
        let r = xc.frame().transpose() * g;
        head.continuation = Continuation::Linear {
            value: s_c.clone(),
            slope: xi_bar.tangent(c)?.congruence(&r),
        };
    }
    let scale = s_c.norm();
    // smallest `−λ_max(E)` over `[c − w, c]`, if `E < 0` and `E′ < 0` there
    let probe = |w: f64, samples: usize| -> Result<Option<f64>> {
        let mut margin = f64::INFINITY;
        for k in 0..=samples {
            let t = c - w + w * k as f64 / samples as f64;
            let e = match head.continuation_value(t) {
                Ok(e) => e,
                Err(Error::ChartDomain { .. }) | Err(Error::Singular(_)) => return Ok(None),
                Err(err) => return Err(err),
            };
            let ev = spectrum(&e)?;
            let top = *ev.last().unwrap();
            let de = spectrum(&head.continuation_derivative(t)?)?;
            if top >= 0.0 || -ev[0] > WINDOW_GROWTH * scale || *de.last().unwrap() >= 0.0 {
                return Ok(None);
            }
            margin = margin.min(-top);
        }
        Ok(Some(margin))
    };
    let mode = if smooth && lo <= a && probe(c - a, GLOBAL_SAMPLES)?.is_some() {
        HeadMode::Global {
            start: head.continuation_value(a)?,
        }
    } else {
        let reach = if smooth { c - lo } else { f64::INFINITY };
        let mut w = (0.9 * (c - a)).min(reach);
        loop {
            match probe(w, WINDOW_SAMPLES)? {
                Some(m) => break HeadMode::Blend { w, m },
                None if w > 1e-3 * (c - a) => w *= 0.5,
                None => {
                    return Err(Error::Verification {
                        check: "extension finds a blend window".into(),
                        value: w,
                        bound: 1e-3 * (c - a),
                    })
                }
            }
        }
    };
    head.mode = mode;
    let (w, m) = head.blend();
    let global = matches!(head.mode, HeadMode::Global { .. });
    let head = ChartedCurve::new(l0.clone(), l1.clone(), head, 1.0);
    let curve = Arc::new(ExtendedCurve {
        head,
        tail: xi_bar.clone(),
        a,
        c,
    });

    let steps = (((c - a) / step) - 1e-9).ceil().max(1.0) as usize;
    let grid = TimeGrid::with_steps(a, c, steps)?;
    let mut checks = ExtensionChecks {
        start_value: chart(&l0, &l1, &curve.frame(a)?, tol)?.norm(),
        max_sigma_eigenvalue: f64::NEG_INFINITY,
        max_sigma_prime_eigenvalue: f64::NEG_INFINITY,
        value_mismatch: 0.0,
        derivative_mismatch: 0.0,
        blend_width: w,
        margin: m,
        global,
        smooth,
    };
    for (k, t) in grid.nodes().into_iter().enumerate() {
        if k > 0 {
            let sigma = chart(&l0, &l1, &curve.head.frame(t)?, tol)?;
            checks.max_sigma_eigenvalue = checks.max_sigma_eigenvalue.max(*spectrum(&sigma)?.last().unwrap());
        }
        let ds = curve.head.sigma.derivative(t)?;
        checks.max_sigma_prime_eigenvalue = checks.max_sigma_prime_eigenvalue.max(*spectrum(&ds)?.last().unwrap());
    }
    let head_c = chart(&l0, &l1, &curve.head.frame(c)?, tol)?;
    checks.value_mismatch = head_c.sub(&s_c).norm();
    let h_fd = (1e-4_f64).min((hi - c) / 8.0);
    let fd = grid::derivative(
        |t| Ok(chart(&l0, &l1, &xi_bar.frame(t)?, tol)?.into_matrix()),
        c,
        h_fd,
        c,
        hi,
    )?;
    let head_d = curve.head.sigma.derivative(c)?;
    checks.derivative_mismatch = crate::linalg::norm2(&(head_d.matrix() - &fd)) / crate::linalg::norm2(&fd).max(1e-300);
    checks.verify()?;
    Ok(Extension { curve, l1, checks })
}
