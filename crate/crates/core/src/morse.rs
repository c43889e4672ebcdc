//! The index form `I(v, w) = ∫ ⟨v′, w′⟩ + ⟨R v, w⟩` on `H¹₀`, discretized with
//! continuous piecewise-linear elements, its Morse index, and the image map.
//!
//! Unknowns are the values at interior nodes, ordered node-major: entry
//! `(i − 1)·n + j` is component `j` at node `t_i`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, SymOperator};
use crate::symplectic::apply_j;
use crate::system::{FundamentalSolution, SymplecticSystemSpec};

/// Default half-width of the band of generalized eigenvalues counted as zero.
pub const NULLITY_TOL: f64 = 1e-5;

/// Mesh multipliers (elements per unit length) for [`stable_index`].
pub const STABLE_MESHES: [usize; 3] = [200, 400, 800];

/// `G` (Gram matrix of `∫⟨v′, w′⟩`) and `K` (matrix of `I`) in block
/// tridiagonal form.
#[derive(Debug, Clone)]
pub struct IndexFormDiscretization {
    n: usize,
    nodes: Vec<f64>,
    /// `G = T ⊗ I_n` with `T` tridiagonal.
    g_diag: Vec<f64>,
    g_off: Vec<f64>,
    k_diag: Vec<DMatrix<f64>>,
    k_off: Vec<DMatrix<f64>>,
}

const GAUSS: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// Uniform mesh of `m` elements on `[a, t_end]`.
pub fn discretize(xr: &SymplecticSystemSpec, t_end: f64, m: usize) -> Result<IndexFormDiscretization> {
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "index form needs at least 2 elements, got {m}"
        )));
    }
    let a = xr.start;
    let nodes = (0..=m)
        .map(|i| {
            if i == m {
                t_end
            } else {
                a + (t_end - a) * i as f64 / m as f64
            }
        })
        .collect();
    discretize_on_mesh(xr, nodes)
}

/// Discretization on an arbitrary strictly increasing mesh starting at `a`.
pub fn discretize_on_mesh(xr: &SymplecticSystemSpec, nodes: Vec<f64>) -> Result<IndexFormDiscretization> {
    if !xr.is_riemannian() {
        return Err(Error::NotRiemannian("the index form needs A = 0 and B = I".into()));
    }
    let m = nodes.len().saturating_sub(1);
    if m < 2 {
        return Err(Error::InvalidInput("index form needs at least 2 elements".into()));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("mesh nodes must be strictly increasing".into()));
    }
    let (a, b) = xr.interval();
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    if (nodes[0] - a).abs() > tol || nodes[m] > b + tol {
        return Err(Error::OutOfRange { t: nodes[m], a, b });
    }
    let n = xr.n;

    // per element: 2×2 blocks of ∫ N_p N_q R
    let local = (0..m)
        .into_par_iter()
        .map(|e| -> Result<[DMatrix<f64>; 3]> {
            let (t0, t1) = (nodes[e], nodes[e + 1]);
            let h = t1 - t0;
            let mid = 0.5 * (t0 + t1);
            let mut blk = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
            for s in [-GAUSS, GAUSS] {
                let t = (mid + s * h).clamp(a, b);
                let r = xr.c_at(t)?;
                let n1 = 0.5 + s;
                let n0 = 1.0 - n1;
                let w = 0.5 * h;
                blk[0] += r.matrix() * (w * n0 * n0);
                blk[1] += r.matrix() * (w * n0 * n1);
                blk[2] += r.matrix() * (w * n1 * n1);
            }
            Ok(blk)
        })
        .collect::<Result<Vec<_>>>()?;

    let inner = m - 1;
    let mut g_diag = vec![0.0; inner];
    let mut g_off = vec![0.0; inner - 1];
    let mut k_diag = vec![DMatrix::zeros(n, n); inner];
    let mut k_off = vec![DMatrix::zeros(n, n); inner - 1];
    for e in 0..m {
        let inv_h = 1.0 / (nodes[e + 1] - nodes[e]);
        // node e is unknown e − 1, node e + 1 is unknown e
        if e >= 1 {
            g_diag[e - 1] += inv_h;
            k_diag[e - 1] += &local[e][0];
        }
        if e < inner {
            g_diag[e] += inv_h;
            k_diag[e] += &local[e][2];
        }
        if e >= 1 && e < inner {
            g_off[e - 1] -= inv_h;
            k_off[e - 1] += &local[e][1];
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    for i in 0..inner {
        k_diag[i] += &eye * g_diag[i];
    }
    for i in 0..inner - 1 {
        k_off[i] += &eye * g_off[i];
    }
    Ok(IndexFormDiscretization {
        n,
        nodes,
        g_diag,
        g_off,
        k_diag,
        k_off,
    })
}

fn dense(n: usize, diag: &[DMatrix<f64>], off: &[DMatrix<f64>]) -> DMatrix<f64> {
    let inner = diag.len();
    let mut out = DMatrix::zeros(n * inner, n * inner);
    for i in 0..inner {
        out.view_mut((i * n, i * n), (n, n)).copy_from(&diag[i]);
    }
    for i in 0..off.len() {
        out.view_mut((i * n, (i + 1) * n), (n, n)).copy_from(&off[i]);
        out.view_mut(((i + 1) * n, i * n), (n, n))
            .copy_from(&off[i].transpose());
    }
    out
}

impl IndexFormDiscretization {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of elements.
    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.n * (self.elements() - 1)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn gram_dense(&self) -> DMatrix<f64> {
        let eye = DMatrix::<f64>::identity(self.n, self.n);
        let diag: Vec<_> = self.g_diag.iter().map(|&g| &eye * g).collect();
        let off: Vec<_> = self.g_off.iter().map(|&g| &eye * g).collect();
        dense(self.n, &diag, &off)
    }

    pub fn form_dense(&self) -> DMatrix<f64> {
        dense(self.n, &self.k_diag, &self.k_off)
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `K v`.
    pub fn apply_form(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        let n = self.n;
        let inner = self.k_diag.len();
        let mut out = DVector::zeros(self.dim());
        for i in 0..inner {
            let mut acc = &self.k_diag[i] * v.rows(i * n, n);
            if i > 0 {
                acc += self.k_off[i - 1].transpose() * v.rows((i - 1) * n, n);
            }
            if i + 1 < inner {
                acc += &self.k_off[i] * v.rows((i + 1) * n, n);
            }
            out.rows_mut(i * n, n).copy_from(&acc);
        }
        Ok(out)
    }

    /// `G⁻¹ r` by the Thomas algorithm, one component at a time.
    pub fn solve_gram(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(r)?;
        let n = self.n;
        let inner = self.g_diag.len();
        let mut out = DVector::zeros(self.dim());
        let mut c = vec![0.0; inner];
        let mut d = vec![0.0; inner];
        for j in 0..n {
            let mut beta = self.g_diag[0];
            d[0] = r[j] / beta;
            for i in 1..inner {
                c[i] = self.g_off[i - 1] / beta;
                beta = self.g_diag[i] - self.g_off[i - 1] * c[i];
                d[i] = (r[i * n + j] - self.g_off[i - 1] * d[i - 1]) / beta;
            }
            for i in (0..inner - 1).rev() {
                d[i] -= c[i + 1] * d[i + 1];
            }
            for i in 0..inner {
                out[i * n + j] = d[i];
            }
        }
        Ok(out)
    }

    /// Coefficients of the `H¹` representative `z` of `I(v, ·)`: `z = G⁻¹Kv`.
    pub fn riesz(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve_gram(&self.apply_form(v)?)
    }

    /// Node values of the element with coefficients `v`, zero at both ends.
    pub fn to_path(&self, v: &DVector<f64>) -> Result<PiecewiseLinear> {
        self.check_len(v)?;
        let n = self.n;
        let mut values = vec![DVector::zeros(n)];
        for i in 0..self.g_diag.len() {
            values.push(v.rows(i * n, n).into_owned());
        }
        values.push(DVector::zeros(n));
        Ok(PiecewiseLinear {
            nodes: self.nodes.clone(),
            values,
        })
    }

    /// Number of negative pivots of the block `LDLᵀ` factorization of
    /// `K − σG`, i.e. the number of generalized eigenvalues below `σ`.
    pub fn count_below(&self, sigma: f64) -> Result<usize> {
        let n = self.n;
        let eye = DMatrix::<f64>::identity(n, n);
        let mut count = 0;
        let mut prev: Option<DMatrix<f64>> = None;
        for i in 0..self.k_diag.len() {
            let mut s = &self.k_diag[i] - &eye * (sigma * self.g_diag[i]);
            if let Some(p) = &prev {
                let u = &self.k_off[i - 1] - &eye * (sigma * self.g_off[i - 1]);
                let pu = p
                    .clone()
                    .lu()
                    .solve(&u)
                    .ok_or_else(|| Error::Singular(format!("Schur complement at node {i}")))?;
                s -= u.transpose() * pu;
            }
            let s = SymOperator::with_symmetry_bound(s, 1e-8)?;
            let (vals, _) = eigh(&s)?;
            count += vals.iter().filter(|&&v| v < 0.0).count();
            prev = Some(s.into_matrix());
        }
        Ok(count)
    }

    /// Generalized eigenvalues of `(K, G)`, ascending, through the
    /// congruence `L⁻¹ K L⁻ᵀ` with `G = LLᵀ`. Dense; for moderate sizes.
    pub fn generalized_spectrum(&self) -> Result<Vec<f64>> {
        let chol = self.gram_dense().cholesky().ok_or(Error::NotPositive {
            min_eigenvalue: f64::NAN,
            threshold: 0.0,
        })?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Cholesky factor of G".into()))?;
        let m = &linv * self.form_dense() * linv.transpose();
        let mut vals: Vec<f64> = SymOperator::with_symmetry_bound(m, 1e-8)?
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormIndex {
    /// Generalized eigenvalues below `−τ`.
    pub index: usize,
    /// Generalized eigenvalues in `[−τ, τ)`.
    pub nullity: usize,
}

/// Morse index and nullity by Sylvester inertia of `K ± τG`.
pub fn index_of_form(d: &IndexFormDiscretization, tau: f64) -> Result<FormIndex> {
    let index = d.count_below(-tau)?;
    let below = d.count_below(tau)?;
    Ok(FormIndex {
        index,
        nullity: below - index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexPoint {
    pub t: f64,
    pub elements: usize,
    pub index: usize,
    pub nullity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexProfile {
    pub points: Vec<IndexPoint>,
}

impl IndexProfile {
    pub fn is_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].index >= w[0].index)
    }

    pub fn starts_at_zero(&self) -> bool {
        self.points.first().is_none_or(|p| p.index == 0)
    }

    /// `(t_prev, t, jump)` for every increase of the index.
    pub fn jumps(&self) -> Vec<(f64, f64, i64)> {
        self.points
            .windows(2)
            .filter(|w| w[1].index != w[0].index)
            .map(|w| (w[0].t, w[1].t, w[1].index as i64 - w[0].index as i64))
            .collect()
    }
}

fn elements_for(density: usize, length: f64) -> usize {
    ((density as f64 * length).round() as usize).max(2)
}

/// `t ↦ index_of_form` at `t_end = t`, with `density` elements per unit
/// length (at least 2).
pub fn index_curve(xr: &SymplecticSystemSpec, density: usize, times: &[f64], tau: f64) -> Result<IndexProfile> {
    let a = xr.start;
    if times.iter().any(|&t| !(t > a)) {
        return Err(Error::InvalidInput("index curve times must exceed the start".into()));
    }
    let points = times
        .par_iter()
        .map(|&t| {
            let m = elements_for(density, t - a);
            let fi = index_of_form(&discretize(xr, t, m)?, tau)?;
            Ok(IndexPoint {
                t,
                elements: m,
                index: fi.index,
                nullity: fi.nullity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndexProfile { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableIndex {
    pub t_end: f64,
    pub elements: Vec<usize>,
    pub results: Vec<FormIndex>,
    /// All meshes agree.
    pub stable: bool,
}

impl StableIndex {
    /// The index on the finest mesh.
    pub fn index(&self) -> usize {
        self.results.last().map_or(0, |r| r.index)
    }
}

/// Index at `t_end` on the meshes `k·(t_end − a)` for `k` in `densities`.
pub fn stable_index(xr: &SymplecticSystemSpec, t_end: f64, densities: &[usize], tau: f64) -> Result<StableIndex> {
    let length = t_end - xr.start;
    let elements: Vec<usize> = densities.iter().map(|&k| elements_for(k, length)).collect();
    let results = elements
        .par_iter()
        .map(|&m| index_of_form(&discretize(xr, t_end, m)?, tau))
        .collect::<Result<Vec<_>>>()?;
    let stable = results.windows(2).all(|w| w[0] == w[1]);
    Ok(StableIndex {
        t_end,
        elements,
        results,
        stable,
    })
}

/// A continuous piecewise-linear path, by node values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    pub nodes: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

/// Symplectic inverse `Φ⁻¹ = −JΦᵀJ`.
pub fn symplectic_inverse(phi: &DMatrix<f64>) -> DMatrix<f64> {
    // (J (JΦᵀ)ᵀ)ᵀ = JΦᵀJᵀ
    apply_j(&apply_j(&phi.transpose()).transpose()).transpose()
}

/// `P₁Φ_b(∫ₐᵇ Φ_t⁻¹(z′(t), 0) dt)` with `b` the last node of `z`. Every
/// node of `z` must be a node of the grid of `phi`; each element integral is
/// the trapezoidal rule on the grid nodes inside it.
pub fn image_map(phi: &FundamentalSolution, z: &PiecewiseLinear) -> Result<ImageCheck> {
    let n = phi.n();
    let grid = phi.grid();
    if z.nodes.len() != z.values.len() || z.nodes.len() < 2 {
        return Err(Error::InvalidInput("path needs matching nodes and values".into()));
    }
    if z.values.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: z.values.iter().find(|v| v.len() != n).unwrap().len(),
        });
    }
    let idx = z
        .nodes
        .iter()
        .map(|&t| {
            grid.node_index(t)
                .ok_or_else(|| Error::InvalidGrid(format!("path node {t} is not a node of the solution grid")))
        })
        .collect::<Result<Vec<_>>>()?;
    if idx[0] != 0 {
        return Err(Error::InvalidGrid(
            "path must start at the start of the solution grid".into(),
        ));
    }
    let ends = z.values[0].amax().max(z.values.last().unwrap().amax());
    if ends > 0.0 {
        return Err(Error::InvalidInput(format!(
            "path must vanish at both ends, found {ends:e}"
        )));
    }
    let h = grid.step();
    let mut y = DVector::zeros(2 * n);
    let mut scale = 0.0;
    for e in 0..z.nodes.len() - 1 {
        let len = z.nodes[e + 1] - z.nodes[e];
        let dz = (&z.values[e + 1] - &z.values[e]) / len;
        let mut integral = DMatrix::zeros(2 * n, n);
        let mut norm = 0.0;
        for k in idx[e]..=idx[e + 1] {
            let w = if k == idx[e] || k == idx[e + 1] { 0.5 * h } else { h };
            let inv = symplectic_inverse(phi.node(k));
            integral += inv.columns(0, n) * w;
            norm += crate::linalg::norm2(&inv) * w;
        }
        y += integral * &dz;
        scale += norm * dz.norm();
    }
    let phib = phi.node(*idx.last().unwrap());
    let image = (phib * y).rows(0, n).into_owned();
    let scale = scale * crate::linalg::norm2(phib);

    // range of E_b through Φ12(b)
    let e = phib.view((0, n), (n, n)).into_owned();
    let svd = e.svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let cut = 1e-8 * crate::linalg::norm2(phib).max(1.0);
    let mut proj = DVector::zeros(n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let col = u.column(i);
            proj += col * col.dot(&image);
        }
    }
    let residual = (&image - proj).norm();
    Ok(ImageCheck {
        image,
        residual,
        scale,
        relative: if scale > 0.0 { residual / scale } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageCheck {
    pub image: DVector<f64>,
    /// Distance from `range(E_b)`.
    pub residual: f64,
    /// `‖Φ_b‖ ∫ ‖Φ_t⁻¹‖ |z′|`, a bound on `‖image‖`.
    pub scale: f64,
    pub relative: f64,
}
