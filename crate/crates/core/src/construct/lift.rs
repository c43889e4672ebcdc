//! A symplectic system whose curve `Φ_t^{-1}(L0)` is a prescribed `ξ`.
//!
//! `ψ′ = X̂ψ`, `ψ(a) = I` with `X̂ = −J F H Fᵀ` moves `ψ(t)(L0)` along `ξ`;
//! then `X = −ψ⁻¹ψ′ = −ψ⁻¹X̂ψ` has `Φ_t = ψ(t)⁻¹`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::LagrangianCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::spectrum;
use crate::symplectic::{apply_j, hamiltonian_defect, max_principal_angle, Lagrangian, SpElement};
use crate::system::{Component, SymplecticSystemSpec, Tabulated};

/// Bound on the principal angle between `ψ(t)(L0)` and `ξ(t)`.
pub const SPAN_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftMetrics {
    /// Largest principal angle between `ψ(t)(L0)` and `ξ(t)` on the nodes.
    pub span_defect: f64,
    pub hamiltonian_defect: f64,
    pub min_b_eigenvalue: f64,
}

pub struct Lift {
    pub system: SymplecticSystemSpec,
    pub metrics: LiftMetrics,
}

/// `X̂(t) = −J F H Fᵀ`.
pub fn lifting_generator(xi: &dyn LagrangianCurve, t: f64) -> Result<DMatrix<f64>> {
    let f = xi.frame(t)?;
    let h = xi.tangent(t)?;
    let m = f.frame() * h.matrix() * f.frame().transpose();
    Ok(-apply_j(&m))
}

/// Tabulates `X` on the nodes of step `step/2` of `[a, b]`.
pub fn xi_to_system(xi: &dyn LagrangianCurve, step: f64) -> Result<Lift> {
    let n = xi.n();
    let (a, b) = xi.domain();
    let grid = TimeGrid::new(a, b, step)?;
    let half = grid.refine(2);
    let quarter = grid.refine(4);
    let gens = quarter
        .nodes()
        .par_iter()
        .map(|&t| lifting_generator(xi, t))
        .collect::<Result<Vec<_>>>()?;
    let hh = half.step();
    let mut psi = Vec::with_capacity(half.len());
    psi.push(DMatrix::<f64>::identity(2 * n, 2 * n));
    for k in 0..half.steps() {
        let p = &psi[k];
        let (x0, xm, x1) = (&gens[2 * k], &gens[2 * k + 1], &gens[2 * k + 2]);
        let k1 = x0 * p;
        let k2 = xm * (p + &k1 * (0.5 * hh));
        let k3 = xm * (p + &k2 * (0.5 * hh));
        let k4 = x1 * (p + &k3 * hh);
        let next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hh / 6.0);
        psi.push(next);
    }

    let l0 = Lagrangian::vertical(n);
    let per_node = (0..half.len())
        .into_par_iter()
        .map(|k| -> Result<(SpElement, f64, f64)> {
            let p = &psi[k];
            let pinv = p
                .clone()
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Singular("lifting flow".into()))?;
            let x = -(&pinv * &gens[2 * k] * p);
            let hd = hamiltonian_defect(&x);
            let el = SpElement::decompose(&x, 1e-6)?;
            let (span, _) = Lagrangian::project(&(p * l0.frame()))?;
            let angle = max_principal_angle(span.frame(), xi.frame(half.node(k))?.frame());
            Ok((el, hd, angle))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut metrics = LiftMetrics {
        span_defect: 0.0,
        hamiltonian_defect: 0.0,
        min_b_eigenvalue: f64::INFINITY,
    };
    let (mut av, mut bv, mut cv) = (Vec::new(), Vec::new(), Vec::new());
    for (el, hd, angle) in per_node {
        metrics.span_defect = metrics.span_defect.max(angle);
        metrics.hamiltonian_defect = metrics.hamiltonian_defect.max(hd);
        metrics.min_b_eigenvalue = metrics.min_b_eigenvalue.min(spectrum(&el.b)?[0]);
        av.push(el.a);
        bv.push(el.b.into_matrix());
        cv.push(el.c.into_matrix());
    }
    if metrics.span_defect > SPAN_BOUND {
        return Err(Error::Verification {
            check: "lifted flow spans the curve".into(),
            value: metrics.span_defect,
            bound: SPAN_BOUND,
        });
    }
    let system = SymplecticSystemSpec::new(
        n,
        a,
        b,
        Component::Tabulated(Tabulated::new(a, hh, av)?),
        Component::Tabulated(Tabulated::new(a, hh, bv)?),
        Component::Tabulated(Tabulated::new(a, hh, cv)?),
    )?;
    Ok(Lift { system, metrics })
}
