use std::f64::consts::PI;

use hmix_core::spectral::{lambda_of_nu, Perturbation};
use hmix_core::{nu_of_lambda, CasimirPoint, Error, SpectralModel, SymMatrix};
use proptest::prelude::*;

fn line(genus: u32, g: f64, perturbation: Perturbation) -> SpectralModel {
    SpectralModel::new(genus, SymMatrix::from_row_major(1, vec![g]).unwrap(), perturbation, 0.1, None).unwrap()
}

#[test]
fn casimir_examples() {
    assert_eq!(nu_of_lambda(0.0).unwrap(), 1.0);
    assert_eq!(nu_of_lambda(3.0 / 16.0).unwrap(), 0.5);
    assert!(matches!(nu_of_lambda(0.25), Err(Error::Domain(_))));
    assert!(matches!(nu_of_lambda(-1e-3), Err(Error::Domain(_))));
    let p = CasimirPoint::from_nu(0.5).unwrap();
    assert_eq!(p.lambda, 3.0 / 16.0);
}

#[test]
fn lambda0_examples() {
    let m = line(2, 1.0, Perturbation::None);
    assert_eq!(m.lambda0(&[0.0]).unwrap(), 0.0);
    // ½·(2π/(g−1))·ω² at ω = 0.1
    assert!((m.lambda0(&[0.1]).unwrap() - PI * 0.01).abs() <= 1e-15);
    let q = line(2, 1.0, Perturbation::Quartic { coef: 1.0 });
    assert!((q.lambda0(&[0.1]).unwrap() - (PI * 0.01 + 1e-4)).abs() <= 1e-15);
    assert!(matches!(m.lambda0(&[0.49]), Err(Error::Domain(_))));
    assert!(matches!(m.lambda0(&[0.1, 0.0]), Err(Error::Domain(_))));
}

#[test]
fn hessian_examples() {
    let m = line(2, 1.0, Perturbation::None);
    assert!((m.hessian_mixing().get(0, 0) - 4.0 * PI).abs() <= 1e-14);
    let m = SpectralModel::quadratic(3, SymMatrix::diagonal(&[2.0, 1.0]), 0.1).unwrap();
    let h = m.hessian_mixing();
    assert!((h.get(0, 0) - 4.0 * PI).abs() <= 1e-14 && (h.get(1, 1) - 2.0 * PI).abs() <= 1e-14);
    assert_eq!(h.get(0, 1), 0.0);
    let m = SpectralModel::quadratic(2, SymMatrix::identity(2), 0.1).unwrap();
    assert!((m.hessian_mixing().get(1, 1) - 4.0 * PI).abs() <= 1e-14);
}

#[test]
fn sigma_examples() {
    assert_eq!(SpectralModel::quadratic(2, SymMatrix::identity(3), 0.1).unwrap().sigma(), 1.0);
    assert_eq!(line(2, 4.0, Perturbation::None).sigma(), 0.5);
    assert_eq!(SpectralModel::quadratic(4, SymMatrix::identity(4), 0.1).unwrap().sigma(), 1.0);
}

#[test]
fn invalid_models_are_rejected() {
    let neg = SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
    let e = SpectralModel::quadratic(2, neg, 0.1).unwrap_err();
    assert!(e.to_string().contains("gram not positive definite"));
    // a negative quartic drives λ₀ below 0 away from the origin
    let e = SpectralModel::new(2, SymMatrix::identity(1), Perturbation::Quartic { coef: -200.0 }, 0.1, Some(vec![0.2]))
        .unwrap_err();
    assert!(e.to_string().contains("positivity sweep failed"), "{e}");
    assert!(SpectralModel::quadratic(1, SymMatrix::identity(1), 0.1).is_err());
    assert!(SpectralModel::quadratic(2, SymMatrix::identity(5), 0.1).is_err());
}

#[test]
fn default_domain_leaves_a_margin_below_a_quarter() {
    for d in 1..=3 {
        let m = SpectralModel::quadratic(2, SymMatrix::identity(d), 0.1).unwrap();
        let corner: Vec<f64> = m.domain_u().to_vec();
        let top = m.lambda0(&corner).unwrap();
        assert!(top < 0.25 * 0.9 + 1e-12 && top > 0.2, "d={d}: {top}");
    }
}

fn spd2() -> impl Strategy<Value = SymMatrix> {
    (0.3f64..3.0, 0.3f64..3.0, -0.9f64..0.9).prop_map(|(a, b, r)| {
        let off = r * (a * b).sqrt();
        SymMatrix::from_row_major(2, vec![a, off, off, b]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn casimir_round_trip(l in 0.0f64..0.25) {
        let nu = nu_of_lambda(l).unwrap();
        prop_assert!((lambda_of_nu(nu) - l).abs() <= 1e-14);
    }

    #[test]
    fn nu_is_decreasing(a in 0.0f64..0.2499, b in 0.0f64..0.2499) {
        prop_assume!(a < b);
        prop_assert!(nu_of_lambda(a).unwrap() > nu_of_lambda(b).unwrap());
    }

    #[test]
    fn finite_difference_hessian_matches(genus in 2u32..6, gram in spd2(), c in 0.0f64..5.0) {
        let m = SpectralModel::new(genus, gram, Perturbation::RadialQuartic { coef: c }, 0.1, None).unwrap();
        let exact = m.hessian_lambda0();
        let mixing = m.hessian_mixing();
        let scale = exact.as_row_major().iter().fold(0.0f64, |s, x| s.max(x.abs()));
        for step in [5e-5, 1e-4] {
            let fd = m.fd_hessian(step);
            for (i, v) in fd.iter().enumerate() {
                prop_assert!((v - exact.as_row_major()[i]).abs() <= 1e-6 * scale);
                prop_assert!((2.0 * v - mixing.as_row_major()[i]).abs() <= 2e-6 * scale);
            }
        }
    }

    #[test]
    fn positive_away_from_the_origin(gram in spd2(), s in 0.01f64..1.0, t in 0.0f64..(2.0 * PI)) {
        let m = SpectralModel::quadratic(2, gram, 0.1).unwrap();
        let u = m.domain_u();
        let w = [s * u[0] * t.cos(), s * u[1] * t.sin()];
        prop_assert!(m.lambda0(&w).unwrap() > 0.0);
    }
}
