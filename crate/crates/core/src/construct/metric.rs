//! The conformally flat metric `g = e^Ω g₀` on `ℝⁿ × ℝ`, `Ω(x, t) = ⟨R(t)x, x⟩`,
//! along whose axis `γ(t) = (0, t)` the Jacobi equation is `v″ = R(t)v`.
//!
//! Points are `(n + 1)`-vectors `p = (x, t)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymOperator;
use crate::system::SymplecticSystemSpec;

#[derive(Debug, Clone)]
pub struct ManifoldScenario {
    system: SymplecticSystemSpec,
}

/// Christoffel symbols: `gamma[k][(i, j)] = Γ^k_ij`.
pub type Christoffel = Vec<DMatrix<f64>>;

/// `R(t) := C(t)` of a Riemannian system.
pub fn realize_metric(xr: &SymplecticSystemSpec) -> Result<ManifoldScenario> {
    if !xr.is_riemannian() {
        return Err(Error::NotRiemannian("metric realization needs A = 0 and B = I".into()));
    }
    Ok(ManifoldScenario { system: xr.clone() })
}

impl ManifoldScenario {
    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn dim(&self) -> usize {
        self.system.n + 1
    }

    pub fn interval(&self) -> (f64, f64) {
        self.system.interval()
    }

    pub fn system(&self) -> &SymplecticSystemSpec {
        &self.system
    }

    pub fn curvature(&self, t: f64) -> Result<SymOperator> {
        self.system.c_at(t)
    }

    fn split<'a>(&self, p: &'a DVector<f64>) -> Result<(nalgebra::DVectorView<'a, f64>, f64)> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.len(),
            });
        }
        let n = self.n();
        Ok((p.rows(0, n), p[n]))
    }

    pub fn omega(&self, p: &DVector<f64>) -> Result<f64> {
        let (x, t) = self.split(p)?;
        let r = self.curvature(t)?;
        Ok((x.transpose() * r.matrix() * x)[(0, 0)])
    }

    /// `(∂_x Ω, ∂_t Ω) = (2R(t)x, ⟨R′(t)x, x⟩)`.
    pub fn omega_gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, t) = self.split(p)?;
        let n = self.n();
        let r = self.curvature(t)?;
        let dr = self.system.c.derivative(n, t)?;
        let mut g = DVector::zeros(n + 1);
        g.rows_mut(0, n).copy_from(&(r.matrix() * x * 2.0));
        g[n] = (x.transpose() * dr * x)[(0, 0)];
        Ok(g)
    }

    pub fn metric(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.omega(p)?.exp();
        Ok(DMatrix::identity(self.dim(), self.dim()) * e)
    }

    /// `∂_k g = e^Ω ∂_kΩ · I`, for each coordinate `k`.
    pub fn metric_derivatives(&self, p: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let e = self.omega(p)?.exp();
        let grad = self.omega_gradient(p)?;
        let m = self.dim();
        Ok((0..m).map(|k| DMatrix::identity(m, m) * (e * grad[k])).collect())
    }

    /// `Γ^k_ij = ½(δ_ik ∂_jΩ + δ_jk ∂_iΩ − δ_ij ∂_kΩ)`.
    pub fn christoffel(&self, p: &DVector<f64>) -> Result<Christoffel> {
        let d = self.omega_gradient(p)?;
        let m = self.dim();
        Ok((0..m)
            .map(|k| {
                DMatrix::from_fn(m, m, |i, j| {
                    let mut v = 0.0;
                    if i == k {
                        v += d[j];
                    }
                    if j == k {
                        v += d[i];
                    }
                    if i == j {
                        v -= d[k];
                    }
                    0.5 * v
                })
            })
            .collect())
    }

    /// Christoffel symbols from central differences of the metric.
    pub fn christoffel_fd(&self, p: &DVector<f64>, h: f64) -> Result<Christoffel> {
        let m = self.dim();
        let mut dg = Vec::with_capacity(m);
        for k in 0..m {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[k] += h;
            minus[k] -= h;
            dg.push((self.metric(&plus)? - self.metric(&minus)?) / (2.0 * h));
        }
        let ginv = self
            .metric(p)?
            .try_inverse()
            .ok_or_else(|| Error::Singular("metric".into()))?;
        Ok((0..m)
            .map(|k| {
                DMatrix::from_fn(m, m, |i, j| {
                    (0..m)
                        .map(|l| 0.5 * ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]))
                        .sum()
                })
            })
            .collect())
    }

    /// RK4 for `p″ᵏ = −Γ^k_ij p′ⁱ p′ʲ` over `steps` steps of size `h`.
    pub fn geodesic(&self, p0: &DVector<f64>, v0: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<DVector<f64>>> {
        let m = self.dim();
        let rhs = |p: &DVector<f64>, v: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
            let gam = self.christoffel(p)?;
            let acc = DVector::from_fn(m, |k, _| -(v.transpose() * &gam[k] * v)[(0, 0)]);
            Ok((v.clone(), acc))
        };
        let mut p = p0.clone();
        let mut v = v0.clone();
        let mut out = vec![p.clone()];
        for _ in 0..steps {
            let (k1p, k1v) = rhs(&p, &v)?;
            let (k2p, k2v) = rhs(&(&p + &k1p * (0.5 * h)), &(&v + &k1v * (0.5 * h)))?;
            let (k3p, k3v) = rhs(&(&p + &k2p * (0.5 * h)), &(&v + &k2v * (0.5 * h)))?;
            let (k4p, k4v) = rhs(&(&p + &k3p * h), &(&v + &k3v * h))?;
            p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            out.push(p.clone());
        }
        Ok(out)
    }

    /// `J(t)_{li} = −⟨Riem(∂_i, ∂_t)∂_t, ∂_l⟩` on the axis, from nested
    /// central differences (Christoffels from the metric, curvature from the
    /// Christoffels), so that Jacobi fields satisfy `v″ = J(t) v`.
    pub fn jacobi_operator(&self, t: f64, h: f64) -> Result<DMatrix<f64>> {
        let n = self.n();
        let m = n + 1;
        let mut p = DVector::zeros(m);
        p[n] = t;
        let gam = self.christoffel_fd(&p, h)?;
        let mut dgam = Vec::with_capacity(m);
        for j in 0..m {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[j] += h;
            minus[j] -= h;
            let gp = self.christoffel_fd(&plus, h)?;
            let gm = self.christoffel_fd(&minus, h)?;
            dgam.push((0..m).map(|k| (&gp[k] - &gm[k]) / (2.0 * h)).collect::<Vec<_>>());
        }
        let tt = n;
        // R(∂_i, ∂_t)∂_t = (∂_iΓ^l_tt − ∂_tΓ^l_it + Γ^q_tt Γ^l_iq − Γ^q_it Γ^l_tq) ∂_l
        Ok(DMatrix::from_fn(n, n, |l, i| {
            let mut r = dgam[i][l][(tt, tt)] - dgam[tt][l][(i, tt)];
            for q in 0..m {
                r += gam[q][(tt, tt)] * gam[l][(i, q)] - gam[q][(i, tt)] * gam[l][(tt, q)];
            }
            -r
        }))
    }
}
