//! Seeded generators of random test instances.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::construct::SingularityPrescription;
use crate::curve::PolynomialPath;
use crate::linalg::SymOperator;
use crate::system::{Component, SymplecticSystemSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[−1, 1]`.
pub fn matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// `(M + Mᵀ)/2` with `M` from [`matrix`], times `scale`.
pub fn symmetric<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymOperator {
    let m = matrix(rng, n, n);
    SymOperator::new((&m + m.transpose()) * (0.5 * scale)).expect("symmetric by construction")
}

/// Haar-ish orthogonal matrix from the QR factor of a random matrix.
pub fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    matrix(rng, n, n).qr().q()
}

/// `Q diag(λ) Qᵀ` with eigenvalues uniform in `[lo, hi]`.
pub fn with_spectrum_in<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> SymOperator {
    let q = orthogonal(rng, n);
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    SymOperator::from_diagonal(&d).congruence(&q.transpose())
}

/// Positive system on `[0, horizon]` with polynomial blocks of degree one;
/// `B(t) ≥ 0.3` throughout.
pub fn positive_system<R: Rng>(rng: &mut R, n: usize, horizon: f64) -> SymplecticSystemSpec {
    let a0 = matrix(rng, n, n) * 0.5;
    let a1 = matrix(rng, n, n) * (0.3 / horizon);
    let b0 = with_spectrum_in(rng, n, 0.5, 2.0);
    let b1 = symmetric(rng, n, 0.2 / (n as f64 * horizon));
    let c0 = symmetric(rng, n, 2.0);
    let c1 = symmetric(rng, n, 0.5 / horizon);
    SymplecticSystemSpec::new(
        n,
        0.0,
        horizon,
        Component::Polynomial {
            coefficients: vec![a0, a1],
        },
        Component::Polynomial {
            coefficients: vec![b0.into_matrix(), b1.into_matrix()],
        },
        Component::Polynomial {
            coefficients: vec![c0.into_matrix(), c1.into_matrix()],
        },
    )
    .expect("valid random system")
}

/// Riemannian system on `[0, horizon]` with `C(t) = C₀ + tC₁`, `C₀` having
/// spectrum in `[−κ, κ/4]`.
pub fn riemannian_system<R: Rng>(rng: &mut R, n: usize, horizon: f64, kappa: f64) -> SymplecticSystemSpec {
    let c0 = with_spectrum_in(rng, n, -kappa, 0.25 * kappa);
    let c1 = symmetric(rng, n, 0.5 * kappa / horizon);
    SymplecticSystemSpec::riemannian(
        n,
        0.0,
        horizon,
        Component::Polynomial {
            coefficients: vec![c0.into_matrix(), c1.into_matrix()],
        },
    )
    .expect("valid random system")
}

/// `T(t) = T₀ + tH₁ + t²H₂` on `[0, 1]` with `T′ ≥ 0.3`.
pub fn increasing_path<R: Rng>(rng: &mut R, n: usize) -> PolynomialPath {
    let t0 = with_spectrum_in(rng, n, -2.0, 0.5);
    let h1 = with_spectrum_in(rng, n, 0.5, 2.0);
    let h2 = symmetric(rng, n, 0.1 / n as f64);
    PolynomialPath {
        coeffs: vec![t0, h1, h2],
        domain: (0.0, 1.0),
    }
}

/// Pure-point prescription on `c = 0`, `b = 1` with at most `max_points`
/// points in `(lo, hi)`, pairwise at least `sep` apart, multiplicities in
/// `1..=max_mult`, total multiplicity at most `budget`.
pub fn point_prescription<R: Rng>(
    rng: &mut R,
    max_points: usize,
    max_mult: usize,
    budget: usize,
    (lo, hi): (f64, f64),
    sep: f64,
) -> SingularityPrescription {
    let count = rng.random_range(1..=max_points);
    let mut pts: Vec<(f64, usize)> = Vec::new();
    let mut total = 0;
    let mut tries = 0;
    while pts.len() < count && tries < 1000 {
        tries += 1;
        let t = rng.random_range(lo..hi);
        if pts.iter().any(|p| (p.0 - t).abs() < sep) {
            continue;
        }
        let m = rng.random_range(1..=max_mult).min(budget - total);
        if m == 0 {
            break;
        }
        total += m;
        pts.push((t, m));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    SingularityPrescription::points(0.0, 1.0, &pts)
}
