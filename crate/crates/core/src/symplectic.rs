//! The symplectic space `V = H ⊕ H`, Lagrangian frames, graph charts and the
//! block form of `sp(V)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{SymOperator, Tolerance};

/// Isotropy defect accepted by [`Lagrangian::new`].
pub const ISOTROPY_TOL: f64 = 1e-10;
/// Orthonormality defect accepted by [`is_lagrangian`] callers by default.
pub const ORTHONORMALITY_TOL: f64 = 1e-12;

/// `J = [[0, -I], [I, 0]]`, so that `J(x, y) = (-y, x)`.
pub fn j_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// `J·M` without forming `J`.
pub fn apply_j(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() / 2;
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    out.rows_mut(0, n).copy_from(&(-m.rows(n, n)));
    out.rows_mut(n, n).copy_from(&m.rows(0, n));
    out
}

/// Real Hilbert symplectic space of dimension `2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpace {
    n: usize,
    j: DMatrix<f64>,
}

impl SymplecticSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("symplectic space needs n >= 1".into()));
        }
        Ok(Self { n, j: j_matrix(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    /// `ω(u, v) = ⟨Ju, v⟩`.
    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        omega(u, v)
    }
}

/// `ω(u, v) = ⟨Ju, v⟩` on `R^{2n}`.
pub fn omega(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() || !u.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let n = u.len() / 2;
    let mut s = 0.0;
    for i in 0..n {
        s += -u[n + i] * v[i] + u[i] * v[n + i];
    }
    Ok(s)
}

/// `(‖FᵀF − I‖_max, ‖FᵀJF‖_max)`.
pub fn lagrangian_defects(f: &DMatrix<f64>) -> (f64, f64) {
    let k = f.ncols();
    let gram = f.transpose() * f - DMatrix::<f64>::identity(k, k);
    let iso = f.transpose() * apply_j(f);
    (gram.abs().max(), iso.abs().max())
}

/// True iff `F` is a `2n×n` orthonormal isotropic frame at `tol`.
pub fn is_lagrangian(f: &DMatrix<f64>, tol: f64) -> bool {
    if f.nrows() != 2 * f.ncols() || f.ncols() == 0 {
        return false;
    }
    let (orth, iso) = lagrangian_defects(f);
    orth <= tol && iso <= tol
}

/// Nearest orthonormal Lagrangian frame to the span of `f`: the polar factor of
/// `[f | Jf]`, first `n` columns.
fn polar_frame(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.ncols();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.columns_mut(0, n).copy_from(f);
    m.columns_mut(n, n).copy_from(&apply_j(f));
    let svd = m.svd(true, true);
    let smin = svd.singular_values.min();
    if !(smin > 0.0) {
        return Err(Error::Singular("frame does not span an n-dimensional subspace".into()));
    }
    let q = svd.u.unwrap() * svd.v_t.unwrap();
    Ok(q.columns(0, n).into_owned())
}

/// Lagrangian subspace carried by an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    frame: DMatrix<f64>,
}

impl Lagrangian {
    /// Spans the columns of `f`, which must be isotropic up to
    /// [`ISOTROPY_TOL`] after orthonormalization.
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        Self::with_isotropy_tol(f, ISOTROPY_TOL)
    }

    pub fn with_isotropy_tol(f: DMatrix<f64>, tol: f64) -> Result<Self> {
        if f.nrows() != 2 * f.ncols() || f.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2 * f.ncols(),
                found: f.nrows(),
            });
        }
        let q = f.clone().qr().q();
        let (orth, iso) = lagrangian_defects(&q);
        if iso > tol || orth > 1e-8 {
            return Err(Error::NotLagrangian {
                orthonormality: orth,
                isotropy: iso,
            });
        }
        Ok(Self {
            frame: polar_frame(&q)?,
        })
    }

    /// Projects the span of `f` onto the Lagrangian Grassmannian without any
    /// isotropy check; returns the isotropy defect of the orthonormalized input.
    pub fn project(f: &DMatrix<f64>) -> Result<(Self, f64)> {
        if f.nrows() != 2 * f.ncols() || f.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2 * f.ncols(),
                found: f.nrows(),
            });
        }
        let q = f.clone().qr().q();
        let (_, iso) = lagrangian_defects(&q);
        Ok((
            Self {
                frame: polar_frame(&q)?,
            },
            iso,
        ))
    }

    /// `L0 = {0} ⊕ H`, frame `[0; I]`.
    pub fn vertical(n: usize) -> Self {
        let mut f = DMatrix::zeros(2 * n, n);
        f.rows_mut(n, n).fill_with_identity();
        Self { frame: f }
    }

    /// `H ⊕ {0}`, frame `[I; 0]`.
    pub fn horizontal(n: usize) -> Self {
        let mut f = DMatrix::zeros(2 * n, n);
        f.rows_mut(0, n).fill_with_identity();
        Self { frame: f }
    }

    /// Graph `{(Sy, y)}` of a symmetric `S` over `L0`.
    pub fn graph(s: &SymOperator) -> Self {
        let n = s.dim();
        let mut f = DMatrix::zeros(2 * n, n);
        f.rows_mut(0, n).copy_from(s.matrix());
        f.rows_mut(n, n).fill_with_identity();
        let q = f.qr().q();
        Self {
            frame: polar_frame(&q).expect("graph frame has full rank"),
        }
    }

    pub fn n(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// `J(L) = L^⊥`.
    pub fn perp(&self) -> Lagrangian {
        Lagrangian {
            frame: apply_j(&self.frame),
        }
    }

    /// `exp(θJ)(L)`.
    pub fn rotate(&self, theta: f64) -> Lagrangian {
        let (s, c) = theta.sin_cos();
        Lagrangian {
            frame: &self.frame * c + apply_j(&self.frame) * s,
        }
    }

    /// Rotates each frame column `f_j` to `cos θ_j f_j + sin θ_j J f_j`; the
    /// result meets `self` exactly in the span of the columns with `θ_j = 0`.
    pub fn rotate_columns(&self, thetas: &[f64]) -> Result<Lagrangian> {
        if thetas.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: thetas.len(),
            });
        }
        let jf = apply_j(&self.frame);
        let mut f = self.frame.clone();
        for (k, th) in thetas.iter().enumerate() {
            let (s, c) = th.sin_cos();
            let col = self.frame.column(k) * c + jf.column(k) * s;
            f.set_column(k, &col);
        }
        Ok(Lagrangian { frame: f })
    }

    /// Image under a linear map, re-projected.
    pub fn transform(&self, m: &DMatrix<f64>) -> Result<(Lagrangian, f64)> {
        Lagrangian::project(&(m * &self.frame))
    }

    /// `(‖FᵀF − I‖_max, ‖FᵀJF‖_max)`.
    pub fn defects(&self) -> (f64, f64) {
        lagrangian_defects(&self.frame)
    }

    /// Orthogonal projector onto `L`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }
}

/// Sines of the principal angles between `P` and `Q`, ascending.
pub fn principal_sines(p: &Lagrangian, q: &Lagrangian) -> Vec<f64> {
    let m = apply_j(p.frame()).transpose() * q.frame();
    let mut s: Vec<f64> = m.singular_values().iter().map(|v| v.min(1.0)).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Largest principal angle between two subspaces given by orthonormal
/// frames of equal size (not necessarily Lagrangian).
pub fn max_principal_angle(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let qp = q - p * (p.transpose() * q);
    qp.singular_values().max().min(1.0).asin()
}

/// Smallest singular value of `[F_P | F_Q]`, i.e. `√2 sin(θ_min / 2)`.
pub fn transversality_gap(p: &Lagrangian, q: &Lagrangian) -> f64 {
    let s = principal_sines(p, q);
    std::f64::consts::SQRT_2 * (0.5 * s[0].asin()).sin()
}

/// `(dim P ∩ Q, codim (P + Q))` at `tol`.
pub fn pair_defect(p: &Lagrangian, q: &Lagrangian, tol: f64) -> (usize, usize) {
    let n = p.n();
    let intersection = principal_sines(p, q).iter().filter(|&&s| s <= tol).count();
    let mut stacked = DMatrix::zeros(2 * n, 2 * n);
    stacked.columns_mut(0, n).copy_from(p.frame());
    stacked.columns_mut(n, n).copy_from(q.frame());
    let rank = stacked.singular_values().iter().filter(|&&s| s > tol).count();
    (intersection, 2 * n - rank)
}

fn check_transversal(a: &Lagrangian, b: &Lagrangian, which: &'static str, tol: &Tolerance) -> Result<()> {
    let gap = transversality_gap(a, b);
    if gap < tol.gap_tol {
        return Err(Error::ChartDomain {
            which,
            singular_value: gap,
            threshold: tol.gap_tol,
        });
    }
    Ok(())
}

/// `F0ᵀ J F1`, the matrix of `ρ_{L1,L0}` in frame coordinates.
fn rho(l0: &Lagrangian, l1: &Lagrangian) -> DMatrix<f64> {
    l0.frame().transpose() * apply_j(l1.frame())
}

/// Graph coordinates of `L` over `L0` along `L1`: `L = {F0 u + F1 M u}`.
fn graph_over(l0: &Lagrangian, l1: &Lagrangian, l: &Lagrangian) -> Result<DMatrix<f64>> {
    let n = l0.n();
    let mut basis = DMatrix::zeros(2 * n, 2 * n);
    basis.columns_mut(0, n).copy_from(l0.frame());
    basis.columns_mut(n, n).copy_from(l1.frame());
    let coeffs = basis
        .lu()
        .solve(l.frame())
        .ok_or_else(|| Error::Singular("L0 + L1 is not the whole space".into()))?;
    let p = coeffs.rows(0, n).into_owned();
    let q = coeffs.rows(n, n).into_owned();
    let pinv = p
        .transpose()
        .lu()
        .solve(&q.transpose())
        .ok_or_else(|| Error::Singular("L is not transversal to L1".into()))?;
    Ok(pinv.transpose())
}

/// Relative symmetry bound applied to chart values.
const CHART_SYMMETRY: f64 = 1e-7;

/// `φ_{L0,L1}(L)` in `L0`-frame coordinates.
pub fn chart(l0: &Lagrangian, l1: &Lagrangian, l: &Lagrangian, tol: &Tolerance) -> Result<SymOperator> {
    check_dims(l0, l1)?;
    check_dims(l0, l)?;
    check_transversal(l0, l1, "L0 and L1", tol)?;
    check_transversal(l, l1, "L and L1", tol)?;
    let m = graph_over(l0, l1, l)?;
    SymOperator::with_symmetry_bound(rho(l0, l1) * m, CHART_SYMMETRY)
}

fn check_dims(a: &Lagrangian, b: &Lagrangian) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(())
}

/// The Lagrangian with chart value `S`, together with the non-orthonormal
/// graph frame `F0 + F1 ρ⁻¹ S` it was built from.
pub fn chart_inverse_with_frame(
    l0: &Lagrangian,
    l1: &Lagrangian,
    s: &SymOperator,
) -> Result<(Lagrangian, DMatrix<f64>)> {
    check_dims(l0, l1)?;
    if s.dim() != l0.n() {
        return Err(Error::DimensionMismatch {
            expected: l0.n(),
            found: s.dim(),
        });
    }
    let m = rho(l0, l1)
        .lu()
        .solve(s.matrix())
        .ok_or_else(|| Error::Singular("L0 and L1 are not transversal".into()))?;
    let g = l0.frame() + l1.frame() * m;
    let (l, _) = Lagrangian::project(&g)?;
    Ok((l, g))
}

/// `φ_{L0,L1}^{-1}(S)`.
pub fn chart_inverse(l0: &Lagrangian, l1: &Lagrangian, s: &SymOperator) -> Result<Lagrangian> {
    Ok(chart_inverse_with_frame(l0, l1, s)?.0)
}

/// Step of the θ grid searched by [`common_transversal`].
const TRANSVERSAL_GRID: usize = 64;

/// A Lagrangian transversal to both `P` and `Q`, searched over
/// `exp(θJ)(J P)` for the largest minimum gap.
pub fn common_transversal(p: &Lagrangian, q: &Lagrangian, seed: u64, tol: &Tolerance) -> Result<Lagrangian> {
    check_dims(p, q)?;
    let base = p.perp();
    let score = |theta: f64| {
        let cand = base.rotate(theta);
        transversality_gap(&cand, p).min(transversality_gap(&cand, q))
    };
    let half = std::f64::consts::FRAC_PI_2;
    let step = 2.0 * half / TRANSVERSAL_GRID as f64;
    let offset = if seed == 0 {
        0.0
    } else {
        // splitmix-style hash of the seed into [0, 1)
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..TRANSVERSAL_GRID {
        let theta = -half + (k as f64 + 0.5 * offset) * step;
        let s = score(theta);
        if s > best.0 {
            best = (s, theta);
        }
    }
    // golden-section refinement on the bracket around the best node
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (score(x1), score(x2));
    for _ in 0..40 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = score(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = score(x2);
        }
    }
    let refined = 0.5 * (lo + hi);
    let rs = score(refined);
    if rs > best.0 {
        best = (rs, refined);
    }
    if best.0 < tol.gap_tol {
        return Err(Error::TransversalSearch {
            best_gap: best.0,
            candidates: TRANSVERSAL_GRID + 43,
        });
    }
    Ok(base.rotate(best.1))
}

/// Block components of `X = [[A, B], [C, -Aᵀ]] ∈ sp(V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpElement {
    pub a: DMatrix<f64>,
    pub b: SymOperator,
    pub c: SymOperator,
}

impl SpElement {
    pub fn new(a: DMatrix<f64>, b: SymOperator, c: SymOperator) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.dim() != n || c.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if a.ncols() != n {
                    a.ncols()
                } else if b.dim() != n {
                    b.dim()
                } else {
                    c.dim()
                },
            });
        }
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut x = DMatrix::zeros(2 * n, 2 * n);
        x.view_mut((0, 0), (n, n)).copy_from(&self.a);
        x.view_mut((0, n), (n, n)).copy_from(self.b.matrix());
        x.view_mut((n, 0), (n, n)).copy_from(self.c.matrix());
        x.view_mut((n, n), (n, n)).copy_from(&(-self.a.transpose()));
        x
    }

    /// Splits `X` into blocks; `X` must satisfy `XᵀJ + JX = 0` up to
    /// `rel_tol · (1 + max|X|)`.
    pub fn decompose(x: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        if x.nrows() != x.ncols() || !x.nrows().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: x.ncols(),
            });
        }
        let defect = hamiltonian_defect(x);
        let bound = rel_tol * (1.0 + x.abs().max());
        if defect > bound {
            return Err(Error::Verification {
                check: "X^T J + J X = 0".into(),
                value: defect,
                bound,
            });
        }
        let n = x.nrows() / 2;
        let a = x.view((0, 0), (n, n)).into_owned();
        let b = SymOperator::with_symmetry_bound(x.view((0, n), (n, n)).into_owned(), rel_tol)?;
        let c = SymOperator::with_symmetry_bound(x.view((n, 0), (n, n)).into_owned(), rel_tol)?;
        Ok(Self { a, b, c })
    }
}

/// `‖XᵀJ + JX‖_max`.
pub fn hamiltonian_defect(x: &DMatrix<f64>) -> f64 {
    let jx = apply_j(x);
    (jx.transpose() * -1.0 + &jx).abs().max()
}

/// `‖ΦᵀJΦ − J‖₂`.
pub fn symplectic_drift(phi: &DMatrix<f64>) -> f64 {
    let n = phi.nrows() / 2;
    let d = phi.transpose() * apply_j(phi) - j_matrix(n);
    crate::linalg::norm2(&d)
}
