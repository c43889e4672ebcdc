//! Symplectic systems `X(t) = [[A, B], [C, −Aᵀ]]`, their fundamental
//! solutions, gauge isomorphisms and reduction to Riemannian form.

pub mod component;
pub mod gauge;
pub mod solution;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{spectrum, SymOperator, Tolerance};
use crate::symplectic::SpElement;

pub use component::{Component, Tabulated};
pub use gauge::{gauge_transform, riemannian_reduce, GaugeCurve, Reduction};
pub use solution::{
    exp_differential, integrate, lagrangian_curve, tangent_identity_defect, xi_tangent, FundamentalSolution,
    IntegrateOptions,
};

/// Symmetry bound applied to evaluated `B`, `C` blocks.
const BLOCK_SYMMETRY: f64 = 1e-9;

/// Time-dependent symplectic system on `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymplecticSystemSpec {
    pub n: usize,
    pub start: f64,
    pub end: f64,
    pub a: Component,
    pub b: Component,
    pub c: Component,
}

impl SymplecticSystemSpec {
    pub fn new(n: usize, start: f64, end: f64, a: Component, b: Component, c: Component) -> Result<Self> {
        let s = Self { n, start, end, a, b, c };
        s.validate()?;
        Ok(s)
    }

    /// `A = 0`, `B = I`.
    pub fn riemannian(n: usize, start: f64, end: f64, c: Component) -> Result<Self> {
        Self::new(n, start, end, Component::Zero, Component::Identity, c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("system dimension must be positive".into()));
        }
        if !(self.start.is_finite() && self.end.is_finite() && self.end > self.start) {
            return Err(Error::InvalidGrid(format!(
                "interval [{}, {}] is empty or non-finite",
                self.start, self.end
            )));
        }
        self.a.validate(self.n, false)?;
        self.b.validate(self.n, true)?;
        self.c.validate(self.n, true)?;
        Ok(())
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + self.start.abs().max(self.end.abs()));
        if t < self.start - slack || t > self.end + slack {
            return Err(Error::OutOfRange {
                t,
                a: self.start,
                b: self.end,
            });
        }
        Ok(())
    }

    pub fn blocks(&self, t: f64) -> Result<SpElement> {
        self.check_time(t)?;
        let n = self.n;
        SpElement::new(
            self.a.eval(n, t)?,
            SymOperator::with_symmetry_bound(self.b.eval(n, t)?, BLOCK_SYMMETRY)?,
            SymOperator::with_symmetry_bound(self.c.eval(n, t)?, BLOCK_SYMMETRY)?,
        )
    }

    /// `X(t) = [[A, B], [C, −Aᵀ]]`.
    pub fn assemble(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.blocks(t)?.assemble())
    }

    pub fn b_at(&self, t: f64) -> Result<SymOperator> {
        self.check_time(t)?;
        SymOperator::with_symmetry_bound(self.b.eval(self.n, t)?, BLOCK_SYMMETRY)
    }

    pub fn c_at(&self, t: f64) -> Result<SymOperator> {
        self.check_time(t)?;
        SymOperator::with_symmetry_bound(self.c.eval(self.n, t)?, BLOCK_SYMMETRY)
    }

    /// Syntactically Riemannian: `A` is the zero block and `B` the identity.
    pub fn is_riemannian(&self) -> bool {
        matches!(self.a, Component::Zero) && matches!(self.b, Component::Identity)
    }

    /// Smallest eigenvalue of `B` over the nodes of `grid`, with its location.
    pub fn min_b_eigenvalue(&self, grid: &TimeGrid) -> Result<(f64, f64)> {
        let mut best = (f64::INFINITY, grid.a());
        for t in grid.nodes() {
            let ev = spectrum(&self.b_at(t)?)?[0];
            if ev < best.0 {
                best = (ev, t);
            }
        }
        Ok(best)
    }

    /// `B(t)` is a positive isomorphism at every node of `grid`.
    pub fn is_positive(&self, grid: &TimeGrid, tol: &Tolerance) -> Result<bool> {
        if matches!(self.b, Component::Identity) {
            return Ok(true);
        }
        Ok(self.min_b_eigenvalue(grid)?.0 >= tol.gap_tol)
    }

    pub fn check_positive(&self, grid: &TimeGrid, tol: &Tolerance) -> Result<()> {
        if matches!(self.b, Component::Identity) {
            return Ok(());
        }
        let (ev, t) = self.min_b_eigenvalue(grid)?;
        if ev < tol.gap_tol {
            return Err(Error::NonPositiveSystem { t, min_eigenvalue: ev });
        }
        Ok(())
    }

    /// `max ‖X(t)‖₂` over the nodes of `grid`.
    pub fn max_norm(&self, grid: &TimeGrid) -> Result<f64> {
        let mut m = 0.0_f64;
        for t in grid.nodes() {
            m = m.max(crate::linalg::norm2(&self.assemble(t)?));
        }
        Ok(m)
    }
}
