//! Curves of Lagrangians and of self-adjoint operators.
//!
//! The tangent of a Lagrangian curve `ξ` at `t` is the symmetric form
//! `H(u, v) = ⟨J ẋ_u, F v⟩` on `ξ(t)`, written in the coordinates of the frame
//! `F` returned by [`LagrangianCurve::frame`], where `x_u(s) ∈ ξ(s)` is any
//! curve through `F u`. It coincides with the derivative of the chart
//! `φ_{ξ(t), Jξ(t)}` along `ξ` at `t`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid;
use crate::linalg::{SymOperator, Tolerance};
use crate::symplectic::{chart, chart_inverse_with_frame, Lagrangian};

/// Default finite-difference step for tangents.
pub const DEFAULT_DT: f64 = 1e-3;

pub trait LagrangianCurve: Send + Sync {
    fn n(&self) -> usize;

    fn domain(&self) -> (f64, f64);

    fn frame(&self, t: f64) -> Result<Lagrangian>;

    /// Tangent in the coordinates of `frame(t)`.
    fn tangent(&self, t: f64) -> Result<SymOperator> {
        fd_tangent(self, t, DEFAULT_DT)
    }

    fn check(&self, t: f64) -> Result<()> {
        let (a, b) = self.domain();
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if t < a - slack || t > b + slack {
            return Err(Error::OutOfRange { t, a, b });
        }
        Ok(())
    }
}

/// Central (or one-sided near the ends) fourth-order difference of the chart
/// based at `ξ(t)` with companion `Jξ(t)`; `Jξ(t)` is exactly the optimum of
/// `common_transversal(ξ(t), ξ(t))`.
pub fn fd_tangent<C: LagrangianCurve + ?Sized>(c: &C, t: f64, dt: f64) -> Result<SymOperator> {
    let base = c.frame(t)?;
    let l1 = base.perp();
    let tol = Tolerance::default();
    let (lo, hi) = c.domain();
    let d = grid::derivative(
        |s| {
            if s == t {
                return Ok(DMatrix::zeros(base.n(), base.n()));
            }
            Ok(chart(&base, &l1, &c.frame(s)?, &tol)?.into_matrix())
        },
        t,
        dt,
        lo,
        hi,
    )?;
    SymOperator::with_symmetry_bound(d, 1e-8)
}

pub trait OperatorCurve: Send + Sync {
    fn n(&self) -> usize;

    fn domain(&self) -> (f64, f64);

    fn value(&self, t: f64) -> Result<SymOperator>;

    fn derivative(&self, t: f64) -> Result<SymOperator> {
        let (lo, hi) = self.domain();
        let d = grid::derivative(|s| Ok(self.value(s)?.into_matrix()), t, DEFAULT_DT, lo, hi)?;
        SymOperator::with_symmetry_bound(d, 1e-8)
    }
}

/// `t ↦ θ(t)·I − A` on `[c, b]`.
#[derive(Debug, Clone)]
pub struct ShiftedPath {
    pub a: SymOperator,
    pub c: f64,
    pub b: f64,
    pub theta: Reparam,
}

/// Time reparameterization of a prescribed curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reparam {
    Identity,
    /// `θ(t) = (t − c)/(1 + t − c)`, mapping `[c, ∞)` onto `[0, 1)`.
    Compactify {
        c: f64,
    },
}

impl Reparam {
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            Reparam::Identity => t,
            Reparam::Compactify { c } => (t - c) / (1.0 + t - c),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Reparam::Identity => 1.0,
            Reparam::Compactify { c } => 1.0 / (1.0 + t - c).powi(2),
        }
    }

    /// `θ⁻¹(s) = c + s/(1 − s)` for the compactified case.
    pub fn inverse(&self, s: f64) -> f64 {
        match *self {
            Reparam::Identity => s,
            Reparam::Compactify { c } => c + s / (1.0 - s),
        }
    }
}

impl OperatorCurve for ShiftedPath {
    fn n(&self) -> usize {
        self.a.dim()
    }

    fn domain(&self) -> (f64, f64) {
        (self.c, self.b)
    }

    fn value(&self, t: f64) -> Result<SymOperator> {
        Ok(SymOperator::scaled_identity(self.a.dim(), self.theta.apply(t)).sub(&self.a))
    }

    fn derivative(&self, t: f64) -> Result<SymOperator> {
        Ok(SymOperator::scaled_identity(self.a.dim(), self.theta.derivative(t)))
    }
}

/// `t ↦ Σ_k t^k S_k`.
#[derive(Debug, Clone)]
pub struct PolynomialPath {
    pub coeffs: Vec<SymOperator>,
    pub domain: (f64, f64),
}

impl OperatorCurve for PolynomialPath {
    fn n(&self) -> usize {
        self.coeffs[0].dim()
    }

    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn value(&self, t: f64) -> Result<SymOperator> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for c in self.coeffs.iter().rev() {
            m = m * t + c.matrix();
        }
        SymOperator::new(m)
    }

    fn derivative(&self, t: f64) -> Result<SymOperator> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (k, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            m = m * t + c.matrix() * k as f64;
        }
        SymOperator::new(m)
    }
}

/// `ξ(t) = φ_{L0,L1}^{-1}(sign · S(t))` for an operator curve `S`.
pub struct ChartedCurve<S: OperatorCurve> {
    pub l0: Lagrangian,
    pub l1: Lagrangian,
    pub sigma: S,
    pub sign: f64,
}

impl<S: OperatorCurve> ChartedCurve<S> {
    pub fn new(l0: Lagrangian, l1: Lagrangian, sigma: S, sign: f64) -> Self {
        Self { l0, l1, sigma, sign }
    }

    /// The chart value `σ(t) = sign · S(t)`.
    pub fn sigma(&self, t: f64) -> Result<SymOperator> {
        Ok(self.sigma.value(t)?.scale(self.sign))
    }
}

impl<S: OperatorCurve> LagrangianCurve for ChartedCurve<S> {
    fn n(&self) -> usize {
        self.l0.n()
    }

    fn domain(&self) -> (f64, f64) {
        self.sigma.domain()
    }

    fn frame(&self, t: f64) -> Result<Lagrangian> {
        self.check(t)?;
        chart_inverse_with_frame(&self.l0, &self.l1, &self.sigma(t)?).map(|x| x.0)
    }

    /// With `G = F0 + F1 ρ⁻¹σ` and `G = F R`, the tangent is `R⁻ᵀ σ′ R⁻¹`.
    fn tangent(&self, t: f64) -> Result<SymOperator> {
        self.check(t)?;
        let (l, g) = chart_inverse_with_frame(&self.l0, &self.l1, &self.sigma(t)?)?;
        let r = l.frame().transpose() * g;
        let rinv = r
            .try_inverse()
            .ok_or_else(|| Error::Singular("graph frame of a charted curve".into()))?;
        let ds = self.sigma.derivative(t)?.scale(self.sign);
        Ok(ds.congruence(&rinv))
    }
}
