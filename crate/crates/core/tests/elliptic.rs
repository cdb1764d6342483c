use nalgebra::DVector;
use ridgecert::elliptic::{elliptic_problem, evenly_spaced_sensors, spde_precision, EllipticConfig, EllipticForward};
use ridgecert::estimators::{laplace_approximation, LaplaceOptions};
use ridgecert::model::{gradient_check, ForwardModel, PriorMeasure};

fn small() -> EllipticConfig {
    EllipticConfig {
        cells: 32,
        ..EllipticConfig::default()
    }
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let p = elliptic_problem(&small()).unwrap();
    for x in p.prior.sample(3, 41).iter().chain([&p.truth]) {
        let err = gradient_check(p.likelihood.as_ref(), x, 1e-6).unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn constant_coefficient_pressure_is_the_parabola() {
    let f = EllipticForward::new(16, &evenly_spaced_sensors(3), |_| 1.0).unwrap();
    // With T = 1 the exact solution of -u'' = 1, u(0) = u(1) = 0 is x(1 - x)/2,
    // which the three-point scheme reproduces at the nodes.
    let u = f.pressure(&DVector::zeros(16)).unwrap();
    for (j, v) in u.iter().enumerate() {
        let s = j as f64 / 16.0;
        assert!((v - 0.5 * s * (1.0 - s)).abs() < 1e-12, "node {j}: {v}");
    }
    let y = f.evaluate(&DVector::zeros(16)).unwrap();
    assert!((y[1] - 0.125).abs() < 1e-12);
}

#[test]
fn prior_precision_is_symmetric_positive_definite() {
    let q = spde_precision(32, 1.35, 0.01).unwrap();
    q.require_positive_definite().unwrap();
    assert!((q.matrix() - q.matrix().transpose()).amax() == 0.0);
    assert!(spde_precision(32, 0.0, 0.01).is_err());
}

#[test]
fn problem_is_reproducible_from_its_seed() {
    let a = elliptic_problem(&small()).unwrap();
    let b = elliptic_problem(&small()).unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.data_csv().lines().count(), 1 + 7);
    let c = elliptic_problem(&EllipticConfig { seed: 7, ..small() }).unwrap();
    assert_ne!(a.data, c.data);
}

#[test]
fn gauss_newton_laplace_converges() {
    let p = elliptic_problem(&small()).unwrap();
    let lap = laplace_approximation(
        &p.prior,
        p.likelihood.as_ref(),
        Some(p.likelihood.setup()),
        &LaplaceOptions::default(),
    )
    .unwrap();
    assert!(lap.converged, "gradient norm {}", lap.gradient_norm_at_mode);
    lap.covariance.require_positive_definite().unwrap();
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(EllipticForward::new(4, &[0.5], |_| 1.0).is_err());
    assert!(EllipticForward::new(16, &[1.0], |_| 1.0).is_err());
    assert!(elliptic_problem(&EllipticConfig { snr: 0.0, ..small() }).is_err());
}
