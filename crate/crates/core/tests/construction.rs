use nalgebra::DMatrix;

use conjflow::construct::{
    build_operator, curve_to_xi, full_pipeline, prescribed_curve, xi_to_system, Horizon, Multiplicity, PipelineOptions,
    PrescribedPoint, SingularityPrescription,
};
use conjflow::curve::{LagrangianCurve, OperatorCurve, PolynomialPath};
use conjflow::linalg::norm2;
use conjflow::random;
use conjflow::symplectic::{chart, max_principal_angle, Lagrangian};
use conjflow::system::{integrate, Component, IntegrateOptions, SymplecticSystemSpec};
use conjflow::{Result, Tolerance};

#[test]
fn charted_curve_reads_back_minus_t() {
    let mut rng = random::rng(3);
    let tol = Tolerance::default();
    for n in 1..=6 {
        let path = random::increasing_path(&mut rng, n);
        let xi = curve_to_xi(path.clone());
        let (l0, l1) = (Lagrangian::vertical(n), Lagrangian::horizontal(n));
        for t in [0.0, 0.3, 0.71, 1.0] {
            let s = chart(&l0, &l1, &xi.frame(t).unwrap(), &tol).unwrap();
            let err = (s.matrix() + path.value(t).unwrap().matrix()).abs().max();
            assert!(err <= 1e-10, "n = {n}, t = {t}: {err:e}");
        }
    }
    let p = SingularityPrescription::points(0.0, 1.0, &[(0.4, 2)]);
    let built = build_operator(&p).unwrap();
    let xi = curve_to_xi(prescribed_curve(&p, &built.operator, 1.0));
    let s = chart(
        &Lagrangian::vertical(2),
        &Lagrangian::horizontal(2),
        &xi.frame(0.4).unwrap(),
        &tol,
    )
    .unwrap();
    assert!(s.norm() < 1e-12);
}

struct Rotating;

impl LagrangianCurve for Rotating {
    fn n(&self) -> usize {
        1
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    fn frame(&self, t: f64) -> Result<Lagrangian> {
        Ok(Lagrangian::vertical(1).rotate(t))
    }
}

#[test]
fn rotating_lagrangian_lifts_with_unit_b() {
    let lift = xi_to_system(&Rotating, 1e-3).unwrap();
    assert!(lift.metrics.hamiltonian_defect <= 1e-8);
    assert!(lift.metrics.span_defect <= 1e-6);
    // ψ = e^{tJ}e^{tN} with N = [[0, 0], [−1, 0]], so X = [[−t, 1], [−t², t]]
    for t in [0.0, 0.5, 1.3, 2.0] {
        let expect = DMatrix::from_row_slice(2, 2, &[-t, 1.0, -t * t, t]);
        let x = lift.system.assemble(t).unwrap();
        assert!((x - &expect).abs().max() <= 1e-6, "t = {t}");
    }
}

#[test]
fn lifting_a_system_curve_recovers_it() {
    let x = random::riemannian_system(&mut random::rng(8), 3, 2.0, 2.0);
    let sol = integrate(&x, 1e-3, &IntegrateOptions::default()).unwrap();
    let lift = xi_to_system(&sol, 1e-3).unwrap();
    assert!(lift.metrics.hamiltonian_defect <= 1e-8);
    assert!(lift.metrics.min_b_eigenvalue > 0.0);
    let back = integrate(&lift.system, 1e-3, &IntegrateOptions::default()).unwrap();
    for t in [0.25, 0.9, 1.5, 2.0] {
        let angle = max_principal_angle(back.xi(t).unwrap().frame(), sol.xi(t).unwrap().frame());
        assert!(angle <= 1e-6, "t = {t}: {angle:e}");
    }
}

#[test]
fn lifted_polynomial_curve_is_positive() {
    let path = PolynomialPath {
        coeffs: vec![
            conjflow::SymOperator::zeros(3),
            random::with_spectrum_in(&mut random::rng(2), 3, 0.5, 1.5),
            random::symmetric(&mut random::rng(1), 3, 0.1),
        ],
        domain: (0.0, 1.0),
    };
    let lift = xi_to_system(&curve_to_xi(path), 1e-3).unwrap();
    assert!(lift.metrics.hamiltonian_defect <= 1e-8);
    assert!(lift.metrics.min_b_eigenvalue >= 0.4);
}

#[test]
fn unbounded_horizon_prescription() {
    let mut p = SingularityPrescription::points(0.0, 1.0, &[(0.3, 1), (0.6, 2)]);
    p.b = Horizon::Infinite;
    let r = full_pipeline(&p, -0.5, &PipelineOptions::default()).unwrap();
    assert!(r.matched, "{:?}\n{:?}", r.expected, r.instants);
    let theta = p.reparam();
    for (i, e) in r.report.instants.iter().zip(&r.expected) {
        assert!((theta.apply(i.t) - theta.apply(e.t)).abs() < 1e-6);
    }
}

#[test]
fn capped_and_continuum_prescription() {
    let mut p = SingularityPrescription::points(0.0, 1.0, &[(0.2, 1)]);
    p.points.push(PrescribedPoint {
        t: 0.8,
        multiplicity: Multiplicity::Infinite,
    });
    p.cap = 3;
    p.intervals = vec![[0.4, 0.5]];
    p.density = 40.0;
    let r = full_pipeline(&p, -0.5, &PipelineOptions::default()).unwrap();
    assert!(r.matched, "{:?}\n{:?}", r.expected, r.instants);
    let last = r.report.instants.last().unwrap();
    assert!((last.t - 0.8).abs() < 1e-6 && last.multiplicity == 3);
}

#[test]
fn pipeline_metric_has_the_prescribed_curvature() {
    let p = SingularityPrescription::points(0.0, 1.0, &[(0.3, 1), (0.7, 2)]);
    let r = full_pipeline(&p, -0.5, &PipelineOptions::default()).unwrap();
    let s = &r.scenario;
    for t in [-0.3, 0.2, 0.5, 0.9] {
        let j = s.jacobi_operator(t, 1e-3).unwrap();
        let c = s.curvature(t).unwrap();
        // C vanishes on [c, b] where T is affine
        let rel = norm2(&(j - c.matrix())) / c.norm().max(1.0);
        assert!(rel <= 2e-3, "t = {t}: {rel:e}");
    }
    assert!(r.report.quality.symplectic_drift.unwrap() <= 1e-8);
    let flat = SymplecticSystemSpec::riemannian(2, 0.0, 1.0, Component::Zero).unwrap();
    assert!(
        conjflow::construct::realize_metric(&flat)
            .unwrap()
            .curvature(0.5)
            .unwrap()
            .norm()
            == 0.0
    );
}
