//! Dense self-adjoint spectral kernel.
//!
//! A [`SymOperator`] stands for a bounded self-adjoint operator on a truncated
//! Hilbert space `H = R^n`. All spectral quantities go through a symmetric
//! eigensolver applied to the explicitly symmetrized matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and silently repaired) on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense real symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct SymOperator {
    m: DMatrix<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max |m - m^T|`.
pub fn symmetric_drift(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut drift = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            drift = drift.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    drift
}

impl SymOperator {
    /// Validates the symmetry invariant and repairs drift below it.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_symmetry_bound(m, SYMMETRY_TOL)
    }

    /// Like [`SymOperator::new`] with a caller-supplied relative bound, for
    /// matrices that are symmetric in exact arithmetic but come out of longer
    /// floating-point chains (charts, congruences).
    pub fn with_symmetry_bound(m: DMatrix<f64>, rel_bound: f64) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows().max(1),
                found: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let bound = rel_bound * (1.0 + max_abs(&m));
        let drift = symmetric_drift(&m);
        if drift > bound {
            return Err(Error::Asymmetric { drift, bound });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self {
            m: DMatrix::identity(n, n) * s,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            m: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn add(&self, other: &SymOperator) -> SymOperator {
        SymOperator { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &SymOperator) -> SymOperator {
        SymOperator { m: &self.m - &other.m }
    }

    pub fn scale(&self, s: f64) -> SymOperator {
        SymOperator { m: &self.m * s }
    }

    /// `P^T S P`, symmetric for any square `P`.
    pub fn congruence(&self, p: &DMatrix<f64>) -> SymOperator {
        let m = p.transpose() * &self.m * p;
        let sym = (&m + m.transpose()) * 0.5;
        SymOperator { m: sym }
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        match spectrum(self) {
            Ok(ev) => ev.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
            Err(_) => norm2(&self.m),
        }
    }
}

impl TryFrom<DMatrix<f64>> for SymOperator {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        SymOperator::new(m)
    }
}

impl From<SymOperator> for DMatrix<f64> {
    fn from(s: SymOperator) -> Self {
        s.m
    }
}

/// Two-tier tolerance: eigenvalues with `|λ| <= kernel_tol` are kernel,
/// `|λ| >= gap_tol` are safely invertible, and the band in between is a dead
/// zone that operations refuse to classify.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub kernel_tol: f64,
    pub gap_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            kernel_tol: 1e-9,
            gap_tol: 1e-6,
        }
    }
}

impl Tolerance {
    pub fn new(kernel_tol: f64, gap_tol: f64) -> Result<Self> {
        let t = Self { kernel_tol, gap_tol };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_tol >= 0.0 && self.kernel_tol < self.gap_tol && self.gap_tol.is_finite()) {
            return Err(Error::InvalidTolerance {
                kernel_tol: self.kernel_tol,
                gap_tol: self.gap_tol,
            });
        }
        Ok(())
    }
}

/// Eigen-decomposition with ascending eigenvalues and matching eigenvector
/// columns.
pub fn eigh(s: &SymOperator) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = s.dim();
    let eig = SymmetricEigen::try_new(s.m.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenNonConvergence { dim: n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Ascending eigenvalues with multiplicity.
pub fn spectrum(s: &SymOperator) -> Result<Vec<f64>> {
    let n = s.dim();
    let eig = SymmetricEigen::try_new(s.m.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenNonConvergence { dim: n })?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Number of eigenvalues below `-kernel_tol`.
pub fn morse_index(s: &SymOperator, tol: &Tolerance) -> Result<usize> {
    Ok(spectrum(s)?.iter().filter(|&&l| l < -tol.kernel_tol).count())
}

/// Number of eigenvalues with `|λ| <= kernel_tol`.
pub fn kernel_dim(s: &SymOperator, tol: &Tolerance) -> Result<usize> {
    Ok(spectrum(s)?.iter().filter(|&&l| l.abs() <= tol.kernel_tol).count())
}

pub fn is_positive_isomorphism(s: &SymOperator, tol: &Tolerance) -> Result<bool> {
    Ok(spectrum(s)?[0] >= tol.gap_tol)
}

/// `S^{-1/2}` for a positive isomorphism `S`.
pub fn sym_inv_sqrt(s: &SymOperator, tol: &Tolerance) -> Result<SymOperator> {
    let (vals, vecs) = eigh(s)?;
    if vals[0] < tol.gap_tol {
        return Err(Error::NotPositive {
            min_eigenvalue: vals[0],
            threshold: tol.gap_tol,
        });
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|l| 1.0 / l.sqrt())));
    let m = &vecs * d * vecs.transpose();
    Ok(SymOperator {
        m: (&m + m.transpose()) * 0.5,
    })
}

/// `S^{1/2}` for a positive semidefinite `S`.
pub fn sym_sqrt(s: &SymOperator) -> Result<SymOperator> {
    let (vals, vecs) = eigh(s)?;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|l| l.max(0.0).sqrt()),
    ));
    let m = &vecs * d * vecs.transpose();
    Ok(SymOperator {
        m: (&m + m.transpose()) * 0.5,
    })
}

/// Spectral norm of a general matrix.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |a, v| a.max(*v))
}

/// Witness record for the shift lemma: an eigenvalue `lambda` of `T` and an
/// eigenvalue `mu` of `T + H` inside `[lambda + alpha, lambda + beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftWitness {
    pub lambda: f64,
    /// `None` is a counterexample.
    pub mu: Option<f64>,
    /// Distance of `mu` from the nearest interval endpoint (negative if the
    /// witness only exists thanks to the endpoint slack).
    pub margin: f64,
}

/// Slack on the interval endpoints of [`spectral_shift_witness`].
pub const WITNESS_SLACK: f64 = 1e-9;

/// For every eigenvalue `λ` of `T`, looks for `μ ∈ σ(T+H) ∩ [λ+α, λ+β]` where
/// `α`, `β` are the extreme eigenvalues of `H`.
pub fn spectral_shift_witness(t: &SymOperator, h: &SymOperator) -> Result<Vec<ShiftWitness>> {
    if t.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: h.dim(),
        });
    }
    let spec_h = spectrum(h)?;
    let (alpha, beta) = (spec_h[0], spec_h[spec_h.len() - 1]);
    let spec_t = spectrum(t)?;
    let spec_sum = spectrum(&t.add(h))?;
    let mut out = Vec::with_capacity(spec_t.len());
    for &lambda in &spec_t {
        let lo = lambda + alpha;
        let hi = lambda + beta;
        let mid = 0.5 * (lo + hi);
        let best = spec_sum
            .iter()
            .copied()
            .filter(|&mu| mu >= lo - WITNESS_SLACK && mu <= hi + WITNESS_SLACK)
            .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()));
        out.push(match best {
            Some(mu) => ShiftWitness {
                lambda,
                mu: Some(mu),
                margin: (mu - lo).min(hi - mu),
            },
            None => ShiftWitness {
                lambda,
                mu: None,
                margin: f64::NEG_INFINITY,
            },
        });
    }
    Ok(out)
}

/// Orthogonal projector triple onto the positive, kernel and negative spectral
/// subspaces.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub positive: SymOperator,
    pub kernel: SymOperator,
    pub negative: SymOperator,
}

fn projector(vecs: &DMatrix<f64>, cols: &[usize]) -> SymOperator {
    let n = vecs.nrows();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        basis.set_column(k, &vecs.column(c));
    }
    let p = &basis * basis.transpose();
    SymOperator {
        m: (&p + p.transpose()) * 0.5,
    }
}

/// Splits `H = H+ ⊕ N ⊕ H-`; refuses when an eigenvalue lies in the dead zone
/// `kernel_tol < |λ| < gap_tol`.
pub fn spectral_split(s: &SymOperator, tol: &Tolerance) -> Result<SpectralSplit> {
    let (vals, vecs) = eigh(s)?;
    let dead: Vec<f64> = vals
        .iter()
        .copied()
        .filter(|l| l.abs() > tol.kernel_tol && l.abs() < tol.gap_tol)
        .collect();
    if !dead.is_empty() {
        return Err(Error::AmbiguousSplit {
            eigenvalues: dead,
            kernel_tol: tol.kernel_tol,
            gap_tol: tol.gap_tol,
        });
    }
    let idx = |pred: &dyn Fn(f64) -> bool| -> Vec<usize> { (0..vals.len()).filter(|&i| pred(vals[i])).collect() };
    Ok(SpectralSplit {
        positive: projector(&vecs, &idx(&|l| l >= tol.gap_tol)),
        kernel: projector(&vecs, &idx(&|l| l.abs() <= tol.kernel_tol)),
        negative: projector(&vecs, &idx(&|l| l <= -tol.gap_tol)),
    })
}

/// Unit vector spanning the eigendirection of the eigenvalue of smallest
/// magnitude.
pub fn near_kernel_vector(s: &SymOperator) -> Result<DVector<f64>> {
    let (vals, vecs) = eigh(s)?;
    let i = (0..vals.len())
        .min_by(|&i, &j| vals[i].abs().total_cmp(&vals[j].abs()))
        .unwrap_or(0);
    Ok(vecs.column(i).into_owned())
}
