//! Fundamental solutions `Φ′ = XΦ`, `Φ_a = I`, by classical RK4 on a uniform
//! grid, and the induced curve `ξ(t) = Φ_t^{-1}(L0)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SymplecticSystemSpec;
use crate::curve::{fd_tangent, LagrangianCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::SymOperator;
use crate::symplectic::{apply_j, symplectic_drift, Lagrangian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Bound on `max_t ‖Φ_tᵀJΦ_t − J‖₂`.
    pub drift_bound: f64,
    /// Pull every node back towards the symplectic group.
    pub reproject: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            drift_bound: 1e-8,
            reproject: false,
        }
    }
}

/// `Φ` on the nodes of a uniform grid with RK4 dense output.
#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    system: SymplecticSystemSpec,
    grid: TimeGrid,
    phi: Vec<DMatrix<f64>>,
    drift: Vec<f64>,
}

fn rk4_step(x: &SymplecticSystemSpec, t: f64, h: f64, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x0 = x.assemble(t)?;
    let xm = x.assemble(t + 0.5 * h)?;
    let x1 = x.assemble(t + h)?;
    let k1 = &x0 * phi;
    let k2 = &xm * (phi + &k1 * (0.5 * h));
    let k3 = &xm * (phi + &k2 * (0.5 * h));
    let k4 = &x1 * (phi + &k3 * h);
    Ok(phi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// `Φ ← Φ(I + ½JD)` with `D = ΦᵀJΦ − J`, cancelling the drift to first order.
fn reproject(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let m = phi.nrows();
    let n = m / 2;
    let d = phi.transpose() * apply_j(phi) - crate::symplectic::j_matrix(n);
    phi * (DMatrix::<f64>::identity(m, m) + apply_j(&d) * 0.5)
}

/// Integrates without enforcing the drift bound.
pub fn integrate_unchecked(
    x: &SymplecticSystemSpec,
    step: f64,
    opts: &IntegrateOptions,
) -> Result<FundamentalSolution> {
    x.validate()?;
    let grid = TimeGrid::new(x.start, x.end, step)?;
    let h = grid.step();
    let m = 2 * x.n;
    let mut phi = Vec::with_capacity(grid.len());
    let mut drift = Vec::with_capacity(grid.len());
    phi.push(DMatrix::<f64>::identity(m, m));
    drift.push(0.0);
    for k in 0..grid.steps() {
        let mut next = rk4_step(x, grid.node(k), h, &phi[k])?;
        if opts.reproject {
            next = reproject(&next);
        }
        drift.push(symplectic_drift(&next));
        phi.push(next);
    }
    Ok(FundamentalSolution {
        system: x.clone(),
        grid,
        phi,
        drift,
    })
}

/// Fundamental solution with step `step`; fails when the symplectic drift
/// exceeds `opts.drift_bound`.
pub fn integrate(x: &SymplecticSystemSpec, step: f64, opts: &IntegrateOptions) -> Result<FundamentalSolution> {
    let sol = integrate_unchecked(x, step, opts)?;
    let (max_drift, at) = sol.max_drift();
    if max_drift > opts.drift_bound {
        return Err(Error::IntegrationQuality {
            max_drift,
            at,
            bound: opts.drift_bound,
        });
    }
    Ok(sol)
}

impl FundamentalSolution {
    pub fn system(&self) -> &SymplecticSystemSpec {
        &self.system
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn node(&self, k: usize) -> &DMatrix<f64> {
        &self.phi[k]
    }

    pub fn nodes(&self) -> &[DMatrix<f64>] {
        &self.phi
    }

    pub fn drift_profile(&self) -> &[f64] {
        &self.drift
    }

    /// `(max drift, time where it occurs)`.
    pub fn max_drift(&self) -> (f64, f64) {
        let (k, d) = self
            .drift
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (k, &d)| if d > acc.1 { (k, d) } else { acc });
        (d, self.grid.node(k))
    }

    /// `Φ_t`: the node value, or one RK4 step of size `t − t_k` from the
    /// nearest node `t_k`.
    pub fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.grid.check(t)?;
        let k = self.grid.nearest(t);
        let tk = self.grid.node(k);
        let s = t - tk;
        if s.abs() <= 1e-12 * self.grid.step() {
            return Ok(self.phi[k].clone());
        }
        rk4_step(&self.system, tk, s, &self.phi[k])
    }

    /// `ξ(t) = Φ_t^{-1}(L0)`.
    pub fn xi(&self, t: f64) -> Result<Lagrangian> {
        let phi = self.at(t)?;
        xi_from_phi(&phi)
    }

    /// Upper-right block `Φ12(t) = (t − a) E_t`.
    pub fn phi12(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.n();
        Ok(self.at(t)?.view((0, n), (n, n)).into_owned())
    }
}

pub(crate) fn xi_from_phi(phi: &DMatrix<f64>) -> Result<Lagrangian> {
    let n = phi.nrows() / 2;
    let l0 = Lagrangian::vertical(n);
    let y = phi
        .clone()
        .lu()
        .solve(l0.frame())
        .ok_or_else(|| Error::Singular("fundamental solution".into()))?;
    Ok(Lagrangian::project(&y)?.0)
}

/// `ξ(t) = Φ_t^{-1}(L0)` with an orthonormal frame.
pub fn lagrangian_curve(phi: &FundamentalSolution, t: f64) -> Result<Lagrangian> {
    phi.xi(t)
}

/// `E_t = Φ12(t)/(t − a)`.
pub fn exp_differential(phi: &FundamentalSolution, t: f64) -> Result<DMatrix<f64>> {
    let a = phi.grid().a();
    if t <= a {
        return Err(Error::InvalidInput(format!("E_t needs t > a, got t = {t}")));
    }
    Ok(phi.phi12(t)? / (t - a))
}

/// Finite-difference tangent of `ξ` at `t` in the coordinates of the frame
/// of `ξ(t)`.
pub fn xi_tangent(phi: &FundamentalSolution, t: f64, dt: f64) -> Result<SymOperator> {
    fd_tangent(phi, t, dt)
}

/// Relative size of `H + WᵀB(t)W`, where `H` is [`xi_tangent`] and
/// `W = P₂Φ_tF` maps frame coordinates of `ξ(t)` into `L0`. Zero for exact
/// data.
pub fn tangent_identity_defect(phi: &FundamentalSolution, t: f64, dt: f64) -> Result<f64> {
    let n = phi.n();
    let h = xi_tangent(phi, t, dt)?;
    let f = phi.xi(t)?.frame().clone();
    let w = (phi.at(t)? * f).rows(n, n).into_owned();
    let b = phi.system().b_at(t)?;
    let d = h.matrix() + w.transpose() * b.matrix() * &w;
    Ok(d.norm() / h.matrix().norm().max(f64::MIN_POSITIVE))
}

impl LagrangianCurve for FundamentalSolution {
    fn n(&self) -> usize {
        self.system.n
    }

    fn domain(&self) -> (f64, f64) {
        (self.grid.a(), self.grid.b())
    }

    fn frame(&self, t: f64) -> Result<Lagrangian> {
        self.xi(t)
    }
}
