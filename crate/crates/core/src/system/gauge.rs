//! Gauge isomorphisms `φ = [[Z, 0], [Z^{-ᵀ}W, Z^{-ᵀ}]]` and reduction of
//! positive systems to Riemannian form.

use nalgebra::DMatrix;

use super::{Component, SymplecticSystemSpec, Tabulated};
use crate::error::{Error, Result};
use crate::grid::{cubic_stencil, cubic_weights, node_derivatives, TimeGrid};
use crate::linalg::{eigh, SymOperator, Tolerance};
use crate::symplectic::symplectic_drift;

/// Nodal values of `Z` (invertible) and `W` (symmetric).
#[derive(Debug, Clone)]
pub struct GaugeCurve {
    pub grid: TimeGrid,
    pub z: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
    /// Known nodal values of `Z′`; node differences otherwise.
    pub dz: Option<Vec<DMatrix<f64>>>,
}

fn interpolate(grid: &TimeGrid, values: &[DMatrix<f64>], t: f64) -> Result<DMatrix<f64>> {
    grid.check(t)?;
    if let Some(k) = grid.node_index(t) {
        return Ok(values[k].clone());
    }
    let (k0, x) = cubic_stencil((t - grid.a()) / grid.step(), values.len());
    let (w, _) = cubic_weights(x);
    let mut m = &values[k0] * w[0];
    for i in 1..4 {
        m += &values[k0 + i] * w[i];
    }
    Ok(m)
}

impl GaugeCurve {
    pub fn new(grid: TimeGrid, z: Vec<DMatrix<f64>>, w: Vec<DMatrix<f64>>) -> Result<Self> {
        if z.len() != grid.len() || w.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "gauge has {} / {} values for {} nodes",
                z.len(),
                w.len(),
                grid.len()
            )));
        }
        if grid.len() < 5 {
            return Err(Error::InvalidGrid("gauge needs at least five nodes".into()));
        }
        Ok(Self { grid, z, w, dz: None })
    }

    pub fn identity(grid: TimeGrid, n: usize) -> Self {
        Self {
            grid,
            z: vec![DMatrix::identity(n, n); grid.len()],
            w: vec![DMatrix::zeros(n, n); grid.len()],
            dz: None,
        }
    }

    pub fn with_z_derivative(mut self, dz: Vec<DMatrix<f64>>) -> Result<Self> {
        if dz.len() != self.grid.len() {
            return Err(Error::InvalidGrid(format!(
                "gauge has {} derivative values for {} nodes",
                dz.len(),
                self.grid.len()
            )));
        }
        self.dz = Some(dz);
        Ok(self)
    }

    pub fn from_fn<FZ, FW>(grid: TimeGrid, z: FZ, w: FW) -> Result<Self>
    where
        FZ: Fn(f64) -> DMatrix<f64>,
        FW: Fn(f64) -> DMatrix<f64>,
    {
        let nodes = grid.nodes();
        Self::new(
            grid,
            nodes.iter().map(|&t| z(t)).collect(),
            nodes.iter().map(|&t| w(t)).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.z[0].nrows()
    }

    pub fn z_at(&self, t: f64) -> Result<DMatrix<f64>> {
        interpolate(&self.grid, &self.z, t)
    }

    pub fn w_at(&self, t: f64) -> Result<DMatrix<f64>> {
        interpolate(&self.grid, &self.w, t)
    }

    fn assemble(z: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = z.nrows();
        let zit = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("gauge block Z".into()))?
            .transpose();
        let mut phi = DMatrix::zeros(2 * n, 2 * n);
        phi.view_mut((0, 0), (n, n)).copy_from(z);
        phi.view_mut((n, 0), (n, n)).copy_from(&(&zit * w));
        phi.view_mut((n, n), (n, n)).copy_from(&zit);
        Ok(phi)
    }

    /// `φ(t_k)` at node `k`.
    pub fn phi_node(&self, k: usize) -> Result<DMatrix<f64>> {
        Self::assemble(&self.z[k], &self.w[k])
    }

    pub fn phi(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::assemble(&self.z_at(t)?, &self.w_at(t)?)
    }

    /// `max_k ‖φ(t_k)ᵀJφ(t_k) − J‖₂`.
    pub fn symplectic_defect(&self) -> Result<f64> {
        let mut m = 0.0_f64;
        for k in 0..self.grid.len() {
            m = m.max(symplectic_drift(&self.phi_node(k)?));
        }
        Ok(m)
    }
}

fn tabulated(grid: &TimeGrid, values: Vec<DMatrix<f64>>) -> Result<Component> {
    Ok(Component::Tabulated(Tabulated::new(grid.a(), grid.step(), values)?))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `X̃` with `Ã = ZAZ⁻¹ − ZBWZ⁻¹ + Z′Z⁻¹`, `B̃ = ZBZᵀ`,
/// `C̃ = Z^{-ᵀ}(WA + C − WBW + AᵀW + W′)Z⁻¹`, tabulated on the gauge grid.
/// `Z′` (unless given) and `W′` are fourth-order node differences.
pub fn gauge_transform(x: &SymplecticSystemSpec, g: &GaugeCurve) -> Result<SymplecticSystemSpec> {
    let n = x.n;
    if g.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: g.n(),
        });
    }
    let tol = 1e-9 * (1.0 + x.start.abs().max(x.end.abs()));
    if (g.grid.a() - x.start).abs() > tol || (g.grid.b() - x.end).abs() > tol {
        return Err(Error::InvalidGrid(format!(
            "gauge grid [{}, {}] differs from the system interval [{}, {}]",
            g.grid.a(),
            g.grid.b(),
            x.start,
            x.end
        )));
    }
    let h = g.grid.step();
    let dz = g.dz.clone().unwrap_or_else(|| node_derivatives(&g.z, h));
    let dw = node_derivatives(&g.w, h);
    let mut at = Vec::with_capacity(g.grid.len());
    let mut bt = Vec::with_capacity(g.grid.len());
    let mut ct = Vec::with_capacity(g.grid.len());
    for (k, t) in g.grid.nodes().into_iter().enumerate() {
        let blocks = x.blocks(t)?;
        let (a, b, c) = (&blocks.a, blocks.b.matrix(), blocks.c.matrix());
        let z = &g.z[k];
        let w = symmetrize(&g.w[k]);
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("gauge block Z at t = {t}")))?;
        at.push((z * a - z * b * &w + &dz[k]) * &zi);
        bt.push(symmetrize(&(z * b * z.transpose())));
        let inner = &w * a + c - &w * b * &w + a.transpose() * &w + symmetrize(&dw[k]);
        ct.push(symmetrize(&(zi.transpose() * inner * &zi)));
    }
    SymplecticSystemSpec::new(
        n,
        x.start,
        x.end,
        tabulated(&g.grid, at)?,
        tabulated(&g.grid, bt)?,
        tabulated(&g.grid, ct)?,
    )
}

/// Output of [`riemannian_reduce`].
#[derive(Debug, Clone)]
pub struct Reduction {
    pub system: SymplecticSystemSpec,
    pub gauge: GaugeCurve,
    /// `max ‖Ã‖_max` over gauge nodes before `A` is replaced by zero.
    pub residual_a: f64,
    /// `max ‖B̃ − I‖_max` over gauge nodes before `B` is replaced by `I`.
    pub residual_b: f64,
    /// `max ‖Z₂ᵀZ₂ − I‖_max` of the orthogonal stage.
    pub orthogonality_drift: f64,
}

/// Bound on the `A`, `B` residuals of a reduction.
pub const REDUCTION_RESIDUAL: f64 = 1e-8;

/// `B^{-1/2}` and its exact time derivative, from `B` and `B′`.
fn inv_sqrt_with_derivative(
    b: &SymOperator,
    db: &DMatrix<f64>,
    tol: &Tolerance,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (vals, q) = eigh(b)?;
    if vals[0] < tol.gap_tol {
        return Err(Error::NotPositive {
            min_eigenvalue: vals[0],
            threshold: tol.gap_tol,
        });
    }
    let n = vals.len();
    let r: Vec<f64> = vals.iter().map(|v| v.sqrt()).collect();
    let z = &q * DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / r[i] } else { 0.0 }) * q.transpose();
    let s = &q * DMatrix::from_fn(n, n, |i, j| if i == j { r[i] } else { 0.0 }) * q.transpose();
    // S = B^{1/2} solves S S′ + S′ S = B′; Z′ = −Z S′ Z
    let dbq = q.transpose() * db * &q;
    let dsq = DMatrix::from_fn(n, n, |i, j| dbq[(i, j)] / (r[i] + r[j]));
    let ds = &q * dsq * q.transpose();
    let dz = -(&z * ds * &z);
    Ok((z, s, dz))
}

/// Two-stage gauge to a Riemannian system: `Z₁ = B^{-1/2}`, `W₁ = 0`, then
/// `W₂ = (Ã + Ãᵀ)/2` and `Z₂′ = ½Z₂(Ãᵀ − Ã)`, `Z₂(a) = I`. Everything is
/// tabulated on the grid of step `step/2`, so that RK4 with step `step` only
/// ever evaluates the output at nodes.
pub fn riemannian_reduce(x: &SymplecticSystemSpec, step: f64, tol: &Tolerance) -> Result<Reduction> {
    let grid = TimeGrid::new(x.start, x.end, step)?.refine(2);
    let n = x.n;
    if x.is_riemannian() {
        return Ok(Reduction {
            system: x.clone(),
            gauge: GaugeCurve::identity(grid, n),
            residual_a: 0.0,
            residual_b: 0.0,
            orthogonality_drift: 0.0,
        });
    }
    x.check_positive(&grid, tol).map_err(|e| match e {
        Error::NonPositiveSystem { t, min_eigenvalue } => {
            Error::NotRiemannian(format!("system is not positive: min eig B({t}) = {min_eigenvalue:e}"))
        }
        e => e,
    })?;

    // stage 1 quantities at arbitrary t
    let stage1 = |t: f64| -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let b = x.b_at(t)?;
        let db = x.b.derivative(n, t)?;
        let (z1, s1, dz1) = inv_sqrt_with_derivative(&b, &db, tol)?;
        let a = x.a.eval(n, t)?;
        let at = (&z1 * a + &dz1) * &s1;
        Ok((z1, dz1, at))
    };

    // stage 2: Z₂ by RK4 with step h/2 on the refined grid
    let h = grid.step();
    let rhs = |t: f64, z: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let (_, _, at) = stage1(t)?;
        Ok(z * (at.transpose() - at) * 0.5)
    };
    let mut z2 = Vec::with_capacity(grid.len());
    z2.push(DMatrix::<f64>::identity(n, n));
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let zk = &z2[k];
        let k1 = rhs(t, zk)?;
        let k2 = rhs(t + 0.5 * h, &(zk + &k1 * (0.5 * h)))?;
        let k3 = rhs(t + 0.5 * h, &(zk + &k2 * (0.5 * h)))?;
        let k4 = rhs(t + h, &(zk + &k3 * h))?;
        z2.push(zk + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
    }
    let orthogonality_drift = z2
        .iter()
        .map(|z| (z.transpose() * z - DMatrix::<f64>::identity(n, n)).abs().max())
        .fold(0.0_f64, f64::max);
    if orthogonality_drift > REDUCTION_RESIDUAL {
        return Err(Error::Verification {
            check: "orthogonality of the second-stage gauge".into(),
            value: orthogonality_drift,
            bound: REDUCTION_RESIDUAL,
        });
    }

    let mut z = Vec::with_capacity(grid.len());
    let mut w = Vec::with_capacity(grid.len());
    let mut dz = Vec::with_capacity(grid.len());
    for (k, t) in grid.nodes().into_iter().enumerate() {
        let (z1, dz1, at) = stage1(t)?;
        let w2 = symmetrize(&at);
        // Z = Z₂Z₁, Z′ = Z₂′Z₁ + Z₂Z₁′
        let dz2 = &z2[k] * (at.transpose() - &at) * 0.5;
        dz.push(dz2 * &z1 + &z2[k] * dz1);
        w.push(symmetrize(&(z1.transpose() * w2 * &z1)));
        z.push(&z2[k] * z1);
    }
    let gauge = GaugeCurve::new(grid, z, w)?.with_z_derivative(dz)?;
    let transformed = gauge_transform(x, &gauge)?;
    let (mut residual_a, mut residual_b) = (0.0_f64, 0.0_f64);
    let mut c_nodes = Vec::with_capacity(grid.len());
    let eye = DMatrix::<f64>::identity(n, n);
    for t in grid.nodes() {
        let blk = transformed.blocks(t)?;
        residual_a = residual_a.max(blk.a.abs().max());
        residual_b = residual_b.max((blk.b.matrix() - &eye).abs().max());
        c_nodes.push(blk.c.into_matrix());
    }
    if residual_a > REDUCTION_RESIDUAL || residual_b > REDUCTION_RESIDUAL {
        return Err(Error::Verification {
            check: "reduced system has A = 0 and B = I".into(),
            value: residual_a.max(residual_b),
            bound: REDUCTION_RESIDUAL,
        });
    }
    let system = SymplecticSystemSpec::riemannian(n, x.start, x.end, tabulated(&grid, c_nodes)?)?;
    Ok(Reduction {
        system,
        gauge,
        residual_a,
        residual_b,
        orthogonality_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{integrate, IntegrateOptions};

    #[test]
    fn identity_gauge_keeps_system() {
        let x = SymplecticSystemSpec::new(
            2,
            0.0,
            1.0,
            Component::Constant {
                matrix: DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.0]),
            },
            Component::Identity,
            Component::Scalar { value: -2.0 },
        )
        .unwrap();
        let g = GaugeCurve::identity(TimeGrid::new(0.0, 1.0, 0.05).unwrap(), 2);
        let y = gauge_transform(&x, &g).unwrap();
        for t in [0.0, 0.35, 1.0] {
            assert!((y.assemble(t).unwrap() - x.assemble(t).unwrap()).abs().max() < 1e-14);
        }
    }

    #[test]
    fn scalar_reduction() {
        let c = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.5, 2.0]);
        let x = SymplecticSystemSpec::new(
            2,
            0.0,
            1.0,
            Component::Zero,
            Component::Scalar { value: 4.0 },
            Component::Constant { matrix: c.clone() },
        )
        .unwrap();
        let g = GaugeCurve::from_fn(
            TimeGrid::new(0.0, 1.0, 0.05).unwrap(),
            |_| DMatrix::identity(2, 2) * 0.5,
            |_| DMatrix::zeros(2, 2),
        )
        .unwrap();
        let y = gauge_transform(&x, &g).unwrap();
        assert!(
            (y.b_at(0.3).unwrap().matrix() - DMatrix::<f64>::identity(2, 2))
                .abs()
                .max()
                < 1e-14
        );
        let red = riemannian_reduce(&x, 0.1, &Tolerance::default()).unwrap();
        assert!(red.system.is_riemannian());
        assert!((red.system.c_at(0.5).unwrap().matrix() - &c * 4.0).abs().max() < 1e-12);
    }

    #[test]
    fn riemannian_input_is_untouched() {
        let x = SymplecticSystemSpec::riemannian(1, 0.0, 1.0, Component::Scalar { value: -1.0 }).unwrap();
        let red = riemannian_reduce(&x, 0.1, &Tolerance::default()).unwrap();
        assert_eq!(red.system, x);
        assert_eq!(red.gauge.z[3], DMatrix::identity(1, 1));
    }

    #[test]
    fn reduction_conjugates_fundamental_solutions() {
        let x = SymplecticSystemSpec::new(
            2,
            0.0,
            2.0,
            Component::Polynomial {
                coefficients: vec![
                    DMatrix::from_row_slice(2, 2, &[0.2, 0.5, -0.1, 0.0]),
                    DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.3, -0.2]),
                ],
            },
            Component::Polynomial {
                coefficients: vec![
                    DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                    DMatrix::from_row_slice(2, 2, &[0.2, -0.1, -0.1, 0.4]),
                ],
            },
            Component::Scalar { value: -3.0 },
        )
        .unwrap();
        let tol = Tolerance::default();
        let h = 1e-3;
        let red = riemannian_reduce(&x, h, &tol).unwrap();
        assert!(red.residual_a < 1e-9 && red.residual_b < 1e-9);
        let opts = IntegrateOptions::default();
        let phi = integrate(&x, h, &opts).unwrap();
        let phit = integrate(&red.system, h, &opts).unwrap();
        let pa_inv = red.gauge.phi_node(0).unwrap().try_inverse().unwrap();
        for k in (0..=2000).step_by(250) {
            let t = phi.grid().node(k);
            let lhs = phit.node(k);
            let rhs = red.gauge.phi(t).unwrap() * phi.node(k) * &pa_inv;
            assert!((lhs - rhs).norm() < 1e-8, "t = {t}");
        }
    }
}
