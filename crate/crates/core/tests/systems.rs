use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;

use conjflow::grid::TimeGrid;
use conjflow::linalg::{kernel_dim, SymOperator, Tolerance};
use conjflow::random;
use conjflow::symplectic::{max_principal_angle, pair_defect, Lagrangian};
use conjflow::system::{
    exp_differential, gauge_transform, integrate, tangent_identity_defect, Component, GaugeCurve, IntegrateOptions,
    SymplecticSystemSpec,
};

const H: f64 = 1e-3;

#[test]
fn drift_stays_small_up_to_sixteen_dimensions() {
    let opts = IntegrateOptions::default();
    for c in [0.0, -1.0, -4.0] {
        let x = SymplecticSystemSpec::riemannian(16, 0.0, 10.0, Component::Scalar { value: c }).unwrap();
        let sol = integrate(&x, H, &opts).unwrap();
        assert!(sol.max_drift().0 <= 1e-8, "C = {c}: {:e}", sol.max_drift().0);
    }
    let mut x = random::positive_system(&mut random::rng(5), 8, 10.0);
    // keep growth moderate over the long horizon
    x.c = Component::Scalar { value: -1.0 };
    assert!(integrate(&x, H, &opts).unwrap().max_drift().0 <= 1e-8);
}

#[test]
fn kernel_of_e_matches_both_defects() {
    let x = SymplecticSystemSpec::riemannian(
        2,
        0.0,
        4.0,
        Component::Constant {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -4.0])),
        },
    )
    .unwrap();
    let sol = integrate(&x, H, &IntegrateOptions::default()).unwrap();
    let tol = Tolerance::new(1e-9, 1e-6).unwrap();
    let l0 = Lagrangian::vertical(2);
    for (t, k) in [(0.7, 0), (PI / 2.0, 1), (2.0, 0), (PI, 2), (3.5, 0)] {
        let e = exp_differential(&sol, t).unwrap();
        let es = SymOperator::with_symmetry_bound(e, 1e-9).unwrap();
        let d = pair_defect(&sol.xi(t).unwrap(), &l0, 1e-8);
        assert_eq!(kernel_dim(&es, &tol).unwrap(), k, "t = {t}");
        assert_eq!(d, (k, k), "t = {t}");
    }
}

#[test]
fn no_instants_right_after_start() {
    let mut rng = random::rng(21);
    for n in 1..=5 {
        let x = random::positive_system(&mut rng, n, 1.0);
        let sol = integrate(&x, H, &IntegrateOptions::default()).unwrap();
        let b_min = conjflow::linalg::spectrum(&x.b_at(0.0).unwrap()).unwrap()[0];
        for k in [1, 2, 5, 10, 20] {
            let t = k as f64 * H;
            let s = sol.phi12(t).unwrap().singular_values().min();
            assert!(s >= 0.5 * b_min * t, "n = {n}, t = {t}: {s} vs {}", b_min * t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tangent_identity(seed in any::<u64>(), n in 1usize..=6, t in 0.05..1.95f64) {
        let x = random::positive_system(&mut random::rng(seed), n, 2.0);
        let sol = integrate(&x, H, &IntegrateOptions::default()).unwrap();
        prop_assert!(tangent_identity_defect(&sol, t, H).unwrap() <= 1e-4);
    }

    #[test]
    fn gauge_covariance(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = random::rng(seed);
        let x = random::positive_system(&mut rng, n, 1.0);
        let m = random::matrix(&mut rng, n, n) * 0.3;
        let w0 = random::symmetric(&mut rng, n, 1.0).into_matrix();
        let w1 = random::symmetric(&mut rng, n, 1.0).into_matrix();
        let grid = TimeGrid::new(0.0, 1.0, H).unwrap().refine(2);
        let eye = DMatrix::<f64>::identity(n, n);
        let dz = vec![m.clone(); grid.len()];
        let g = GaugeCurve::from_fn(grid, |t| &eye + &m * t, |t| &w0 + &w1 * t)
            .unwrap()
            .with_z_derivative(dz)
            .unwrap();
        let y = gauge_transform(&x, &g).unwrap();
        let opts = IntegrateOptions::default();
        let (s0, s1) = (integrate(&x, H, &opts).unwrap(), integrate(&y, H, &opts).unwrap());
        let pa = g.phi(0.0).unwrap();
        let pa_inv = pa.clone().try_inverse().unwrap();
        for t in [0.1, 0.37, 0.8, 1.0] {
            let moved = s0.xi(t).unwrap().transform(&pa).unwrap().0;
            prop_assert!(max_principal_angle(moved.frame(), s1.xi(t).unwrap().frame()) <= 1e-6);
            let expect = g.phi(t).unwrap() * s0.at(t).unwrap() * &pa_inv;
            prop_assert!((s1.at(t).unwrap() - expect).norm() <= 1e-6);
        }
    }
}
