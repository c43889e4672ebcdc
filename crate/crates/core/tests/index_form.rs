use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use conjflow::conjugate::{detect, DetectOptions};
use conjflow::morse::{
    discretize, discretize_on_mesh, image_map, index_curve, index_of_form, stable_index, PiecewiseLinear, NULLITY_TOL,
    STABLE_MESHES,
};
use conjflow::random;
use conjflow::system::{integrate, Component, IntegrateOptions, SymplecticSystemSpec};

fn diagonal(n: usize, end: f64, c: &[f64]) -> SymplecticSystemSpec {
    SymplecticSystemSpec::riemannian(
        n,
        0.0,
        end,
        Component::Constant {
            matrix: DMatrix::from_diagonal(&DVector::from_vec(c.to_vec())),
        },
    )
    .unwrap()
}

#[test]
fn nullity_equals_multiplicity_at_instants() {
    let x = diagonal(2, 7.0, &[-1.0, -4.0]);
    // instants: π/2 (1), π (2), 3π/2 (1), 2π (2)
    for (t, index, nullity) in [
        (1.0, 0, 0),
        (PI / 2.0, 0, 1),
        (2.0, 1, 0),
        (PI, 1, 2),
        (4.0, 3, 0),
        (2.0 * PI, 4, 2),
        (6.5, 6, 0),
    ] {
        let m = (400.0 * t).round() as usize;
        let fi = index_of_form(&discretize(&x, t, m).unwrap(), NULLITY_TOL).unwrap();
        assert_eq!((fi.index, fi.nullity), (index, nullity), "t = {t}");
    }
}

#[test]
fn index_curve_jumps_at_instants() {
    let mut rng = random::rng(4);
    for n in 1..=3 {
        let x = random::riemannian_system(&mut rng, n, 5.0, 4.0);
        let rep = detect(&x, 1e-3, &DetectOptions::default()).unwrap();
        let times: Vec<f64> = (1..=100).map(|k| 0.05 * k as f64).collect();
        let profile = index_curve(&x, 200, &times, NULLITY_TOL).unwrap();
        assert!(profile.is_nondecreasing());
        assert!(profile.starts_at_zero());
        let jumps = profile.jumps();
        let total: i64 = jumps.iter().map(|j| j.2).sum();
        assert_eq!(total as usize, rep.total_multiplicity(), "n = {n}");
        for (lo, hi, jump) in jumps {
            assert!(jump > 0);
            let inside: usize = rep
                .instants
                .iter()
                .filter(|i| i.t > lo - 1e-9 && i.t <= hi + 1e-9)
                .map(|i| i.multiplicity)
                .sum();
            assert_eq!(inside as i64, jump, "n = {n}, ({lo}, {hi}]");
        }
    }
}

#[test]
fn flat_index_is_identically_zero() {
    let x = SymplecticSystemSpec::riemannian(3, 0.0, 4.0, Component::Zero).unwrap();
    let profile = index_curve(&x, 200, &[0.5, 1.0, 2.0, 4.0], NULLITY_TOL).unwrap();
    assert!(profile.points.iter().all(|p| p.index == 0 && p.nullity == 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn index_equals_multiplicity_sum(seed in any::<u64>(), n in 1usize..=3, steps in 2000usize..4000) {
        let horizon = steps as f64 * 1e-3;
        let x = random::riemannian_system(&mut random::rng(seed), n, horizon, 4.0);
        let rep = detect(&x, 1e-3, &DetectOptions::default()).unwrap();
        prop_assume!(rep.times().iter().all(|t| (t - horizon).abs() >= 1e-3));
        let idx = stable_index(&x, horizon, &STABLE_MESHES, NULLITY_TOL).unwrap();
        prop_assert!(idx.stable, "{:?}", idx.results);
        prop_assert_eq!(idx.index(), rep.total_multiplicity());
    }
}

fn image_setup(
    n: usize,
    c: f64,
    b: f64,
    steps: usize,
) -> (
    conjflow::system::FundamentalSolution,
    conjflow::morse::IndexFormDiscretization,
) {
    let x = SymplecticSystemSpec::riemannian(n, 0.0, b, Component::Scalar { value: c }).unwrap();
    let sol = integrate(&x, b / steps as f64, &IntegrateOptions::default()).unwrap();
    let d = discretize_on_mesh(&x, sol.grid().nodes()).unwrap();
    (sol, d)
}

fn smooth_vector(d: &conjflow::morse::IndexFormDiscretization, coef: &[f64]) -> DVector<f64> {
    let (n, m) = (d.n(), d.elements());
    DVector::from_fn(d.dim(), |r, _| {
        let s = (r / n + 1) as f64 / m as f64;
        let i = r % n;
        (PI * s).sin() * coef[i] + 0.5 * (3.0 * PI * s).sin() * coef[n + i]
    })
}

#[test]
fn image_lies_in_the_range_of_e() {
    // at the first conjugate instant of the round sphere the range is {0}
    let (sol, d) = image_setup(1, -1.0, PI, 3000);
    let v = smooth_vector(&d, &[0.7, -0.4]);
    let z = d.to_path(&d.riesz(&v).unwrap()).unwrap();
    let r = image_map(&sol, &z).unwrap();
    assert!(r.residual <= 1e-5, "{r:?}");

    // a path outside the image of the form is detected
    let bump = d.to_path(&v).unwrap();
    let r = image_map(&sol, &bump).unwrap();
    assert!(r.residual > 1e-2, "{r:?}");

    // flat: E_b invertible, every path qualifies
    let (sol, d) = image_setup(2, 0.0, 1.0, 1000);
    let v = smooth_vector(&d, &[0.3, 1.0, -0.2, 0.5]);
    let r = image_map(&sol, &d.to_path(&v).unwrap()).unwrap();
    assert!(r.residual <= 1e-12 && r.image.norm() > 0.0, "{r:?}");
}

#[test]
fn image_rejects_foreign_meshes() {
    let (sol, _) = image_setup(1, -1.0, 1.0, 100);
    let z = PiecewiseLinear {
        nodes: vec![0.0, 0.3333, 1.0],
        values: vec![DVector::zeros(1), DVector::from_element(1, 1.0), DVector::zeros(1)],
    };
    assert!(image_map(&sol, &z).is_err());
}
