use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ridgecert::linalg::{
    build_projector, generalized_eigendecomposition, minimal_rank, reconstruction_error, RankRProjector, SpdMatrix,
};

fn square(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v))
}

/// `(Γ, H)` with `Γ` well conditioned and `H` positive semidefinite of any rank.
fn pair() -> impl Strategy<Value = (SpdMatrix, SpdMatrix)> {
    (2usize..7)
        .prop_flat_map(|d| (square(d), square(d), 0..=d))
        .prop_map(|(b, c, rank)| {
            let d = b.nrows();
            let gamma = &b * b.transpose() + DMatrix::identity(d, d) * 0.5;
            let c = c.columns(0, rank).into_owned();
            let h = &c * c.transpose();
            (SpdMatrix::new(gamma).unwrap(), SpdMatrix::new(h).unwrap())
        })
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_is_gamma_orthonormal_and_solves_the_pencil((gamma, h) in pair()) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let v = spec.basis();
        let d = spec.dim();
        let gram = v.transpose() * gamma.matrix() * v - DMatrix::identity(d, d);
        prop_assert!(max_abs(&gram) < 1e-9);
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(spec.eigenvalues()));
        let residual = h.matrix() * v - gamma.matrix() * v * lambda;
        prop_assert!(max_abs(&residual) < 1e-8 * h.spectral_norm().max(1.0));
        prop_assert!(spec.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(spec.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn projector_is_idempotent_and_gamma_symmetric((gamma, h) in pair(), frac in 0.0f64..=1.0) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let r = (frac * spec.dim() as f64).round() as usize;
        let p = build_projector(&spec, r).unwrap();
        let m = p.matrix();
        prop_assert!(max_abs(&(&m * &m - &m)) < 1e-9);
        let gp = gamma.matrix() * &m;
        prop_assert!(max_abs(&(&gp - gp.transpose())) < 1e-8 * gamma.spectral_norm());
        prop_assert_eq!(p.rank(), r);
    }

    #[test]
    fn apply_and_complement_sum_to_identity(
        (gamma, h) in pair(),
        frac in 0.0f64..=1.0,
        seed in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let r = (frac * spec.dim() as f64).round() as usize;
        let p = build_projector(&spec, r).unwrap();
        let x = DVector::from_iterator(spec.dim(), seed.into_iter().take(spec.dim()));
        let back = p.apply(&x) + p.apply_complement(&x);
        prop_assert!((back - &x).amax() < 1e-10 * x.amax().max(1.0));
    }

    #[test]
    fn completion_is_gamma_orthonormal((gamma, h) in pair(), frac in 0.0f64..=1.0) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let d = spec.dim();
        let r = (frac * d as f64).round() as usize;
        let p = build_projector(&spec, r).unwrap();
        let w = p.complement_basis().unwrap();
        prop_assert_eq!(w.ncols(), d - r);
        let full = DMatrix::from_fn(d, d, |i, j| if j < r { p.informed_basis()[(i, j)] } else { w[(i, j - r)] });
        let gram = full.transpose() * gamma.matrix() * &full - DMatrix::identity(d, d);
        prop_assert!(max_abs(&gram) < 1e-9);
    }

    #[test]
    fn reconstruction_error_is_the_tail_and_optimal(
        (gamma, h) in pair(),
        frac in 0.0f64..=1.0,
        other in square(6),
    ) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let d = spec.dim();
        let r = (frac * d as f64).round() as usize;
        let p = build_projector(&spec, r).unwrap();
        let err = reconstruction_error(&p, &h, &gamma).unwrap();
        let scale = spec.tail_sum(0).max(1.0);
        prop_assert!((err - spec.tail_sum(r)).abs() < 1e-8 * scale);
        if r > 0 {
            let basis = other.view((0, 0), (d, r)).into_owned();
            if let Ok(q) = RankRProjector::from_basis(&basis, &gamma) {
                prop_assert!(reconstruction_error(&q, &h, &gamma).unwrap() >= err - 1e-9 * scale);
            }
        }
    }

    #[test]
    fn minimal_rank_meets_tolerance_and_is_monotone((gamma, h) in pair(), eps in 1e-4f64..10.0) {
        let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
        let r = minimal_rank(&spec, 1.0, eps).unwrap();
        prop_assert!(0.5 * spec.tail_sum(r) <= eps);
        if r > 0 {
            prop_assert!(0.5 * spec.tail_sum(r - 1) > eps);
        }
        prop_assert!(minimal_rank(&spec, 1.0, 2.0 * eps).unwrap() <= r);
    }
}

#[test]
fn identity_pencil_hand_values() {
    let h = SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap();
    let gamma = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    let spec = generalized_eigendecomposition(&h, &gamma).unwrap();
    assert!((spec.eigenvalues()[0] - 2.0).abs() < 1e-14);
    assert!((spec.eigenvalues()[1] - 1.0).abs() < 1e-14);
    assert!((spec.tail_sum(1) - 1.0).abs() < 1e-14);
}

#[test]
fn projector_round_trips_through_its_document() {
    let h = SpdMatrix::from_diagonal(&[3.0, 2.0, 1.0]).unwrap();
    let gamma = SpdMatrix::from_diagonal(&[1.0, 2.0, 4.0]).unwrap();
    let p = build_projector(&generalized_eigendecomposition(&h, &gamma).unwrap(), 2).unwrap();
    let json = serde_json::to_string(&p.to_document()).unwrap();
    let q = RankRProjector::from_document(&serde_json::from_str(&json).unwrap(), &gamma).unwrap();
    assert!(p.distance(&q).unwrap() < 1e-12);
}
