use std::f64::consts::PI;

use hmix_core::cover::{
    convergence_study, enumerate_characters, limit_density, limit_integral, small_x_limit, spectral_average,
    spectral_histogram, CharacterLattice, TestFunction,
};
use hmix_core::quad::{integrate_1d, AdaptiveOptions};
use hmix_core::spectral::{Monomial, Perturbation};
use hmix_core::{Error, SpectralModel, SymMatrix};
use proptest::prelude::*;

fn disk_model() -> SpectralModel {
    // λ₀ = π|ω|²
    SpectralModel::quadratic(2, SymMatrix::identity(2), 0.1).unwrap()
}

fn line_model() -> SpectralModel {
    SpectralModel::quadratic(2, SymMatrix::identity(1), 0.1).unwrap()
}

// integer count of a² + b² ≤ ε N²/π over centered residues
fn disk_count(n: i64, eps: f64) -> u64 {
    let lo = -(n / 2);
    let hi = lo + n;
    let mut c = 0;
    for a in lo..hi {
        for b in lo..hi {
            if PI * ((a * a + b * b) as f64) / ((n * n) as f64) <= eps {
                c += 1;
            }
        }
    }
    c
}

#[test]
fn lattice_sizes() {
    for n in 1..=10 {
        assert_eq!(enumerate_characters(&CharacterLattice::new(vec![n]).unwrap()).len(), n as usize);
    }
    let pts = enumerate_characters(&CharacterLattice::new(vec![2, 3]).unwrap());
    assert_eq!(pts.len(), 6);
    assert!(pts.iter().flatten().all(|&x| (-0.5..0.5).contains(&x)));
}

#[test]
fn trivial_cover_sees_only_the_bottom() {
    let m = disk_model();
    let l = CharacterLattice::new(vec![1, 1]).unwrap();
    let v = spectral_average(&m, &l, &|x| 3.0 + x, 0.05).unwrap();
    assert_eq!(v, 3.0);
}

#[test]
fn disk_average_matches_integer_count_and_area() {
    let m = disk_model();
    for n in [16u32, 32, 64, 128, 256] {
        let l = CharacterLattice::cubic(n, 2).unwrap();
        let v = spectral_average(&m, &l, &|_| 1.0, 0.05).unwrap();
        let count = disk_count(n as i64, 0.05);
        assert_eq!(v, count as f64 / (n as f64 * n as f64));
        assert!((v - 0.05).abs() <= 2.0 / n as f64);
        let h = spectral_histogram(&m, &l, 0.05).unwrap();
        assert_eq!(h.count, count);
        assert!(h.values.iter().all(|&x| x <= 0.05));
    }
}

#[test]
fn identity_on_a_line_matches_continuum_integral() {
    let m = line_model();
    let eps: f64 = 0.05;
    let l = CharacterLattice::new(vec![10_000]).unwrap();
    let v = spectral_average(&m, &l, &|x| x, eps).unwrap();
    // ∫_{π ω² ≤ ε} π ω² dω
    let exact = 2.0 * PI / 3.0 * (eps / PI).powf(1.5);
    assert!((v - exact).abs() <= 1e-3 * exact, "{v} vs {exact}");
}

#[test]
fn densities_in_closed_form() {
    let eps = 0.05;
    let grid: Vec<f64> = (1..=50).map(|i| eps * i as f64 / 50.0).collect();
    let t = limit_density(&disk_model(), eps, &grid).unwrap();
    assert!(t.exact);
    assert!(t.density.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    // λ₀ = π ω²: density x^{−1/2}/√π
    let t = limit_density(&line_model(), eps, &grid).unwrap();
    for (x, v) in t.x.iter().zip(&t.density) {
        assert!((v - 1.0 / (PI * x).sqrt()).abs() <= 1e-12 * v);
    }
    assert!((t.zeta[0] - small_x_limit(&line_model())).abs() <= 1e-12);
}

#[test]
fn radial_quartic_density_by_slices_matches_closed_form() {
    let eps = 0.05;
    let gram = SymMatrix::from_row_major(2, vec![1.0, 0.3, 0.3, 0.8]).unwrap();
    let c = 5.0;
    let closed = SpectralModel::new(2, gram.clone(), Perturbation::RadialQuartic { coef: c }, 0.1, None).unwrap();
    // (ωᵀGω)² = (ω₀² + 0.6ω₀ω₁ + 0.8ω₁²)² spelled out as monomials
    let g = [1.0, 0.6, 0.8];
    let mut terms = Vec::new();
    for (i, a) in g.iter().enumerate() {
        for (j, b) in g.iter().enumerate() {
            // exponents of ω₀ in term i: 2, 1, 0
            let e0 = (2 - i) + (2 - j);
            terms.push(Monomial { coef: c * a * b, exponents: vec![e0 as u32, (4 - e0) as u32] });
        }
    }
    let sliced = SpectralModel::new(2, gram, Perturbation::Polynomial { terms }, 0.1, None).unwrap();
    let grid = [1e-4, 0.01, 0.03, 0.05];
    let a = limit_density(&closed, eps, &grid).unwrap();
    let b = limit_density(&sliced, eps, &grid).unwrap();
    assert!(!b.exact);
    for (x, y) in a.zeta.iter().zip(&b.zeta) {
        assert!((x - y).abs() <= 1e-8 * x, "{x} vs {y}");
    }
}

#[test]
fn non_radial_sublevel_area_matches_chord_integral() {
    let eps: f64 = 0.05;
    let c = 20.0;
    let m = SpectralModel::new(2, SymMatrix::identity(2), Perturbation::Quartic { coef: c }, 0.1, None).unwrap();
    let area = limit_integral(&m, &|_| 1.0, eps).unwrap();
    // half-chord in ω₁ at fixed ω₀, from the quadratic in ω₁²
    let half_chord = |w0: f64| {
        let rest = eps - PI * w0 * w0 - c * w0.powi(4);
        if rest <= 0.0 {
            return 0.0;
        }
        let s = 2.0 * rest / (PI + (PI * PI + 4.0 * c * rest).sqrt());
        s.sqrt()
    };
    let r = {
        let s = 2.0 * eps / (PI + (PI * PI + 4.0 * c * eps).sqrt());
        s.sqrt()
    };
    // ω₀ = r sin φ keeps the square-root edge smooth
    let opts = AdaptiveOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_refinements: 10_000, nodes_per_axis: 10 };
    let chord = integrate_1d(-PI / 2.0, PI / 2.0, &[], &opts, |phi| 2.0 * half_chord(r * phi.sin()) * r * phi.cos()).unwrap();
    assert!((area - chord.value).abs() <= 1e-6 * area, "{area} vs {}", chord.value);
}

#[test]
fn limit_integral_matches_direct_torus_quadrature() {
    let eps = 0.05;
    let m = disk_model();
    let f = |x: f64| TestFunction::Linear.eval(x, eps);
    let via_density = limit_integral(&m, &f, eps).unwrap();
    // iterated Cartesian quadrature with breakpoints at the level-set crossings,
    // found by bisection on λ₀ itself
    let lambda = |p: [f64; 2]| PI * (p[0] * p[0] + p[1] * p[1]);
    let crossing = |g: &dyn Fn(f64) -> f64| {
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) <= eps { lo = mid } else { hi = mid }
        }
        lo
    };
    let opts = AdaptiveOptions { abs_tol: 1e-15, rel_tol: 1e-11, max_refinements: 10_000, nodes_per_axis: 10 };
    let r = crossing(&|w0| lambda([w0, 0.0]));
    let direct = integrate_1d(-r, r, &[0.0], &opts, |w0| {
        let h = crossing(&|w1| lambda([w0, w1]));
        integrate_1d(-h, h, &[], &opts, |w1| (eps - lambda([w0, w1])).max(0.0)).unwrap().value
    })
    .unwrap();
    assert!((via_density - direct.value).abs() <= 1e-6 * via_density, "{via_density} vs {}", direct.value);
    assert!((via_density - eps * eps / 2.0).abs() <= 1e-12);
}

#[test]
fn studies() {
    let eps = 0.05;
    let zero = convergence_study(&disk_model(), &|_| 0.0, eps, &[vec![8, 8], vec![16, 16]]).unwrap();
    assert!(zero.rows.iter().all(|r| r.abs_err == 0.0));
    assert!(zero.decay_exponent.is_none());

    let f = |x: f64| TestFunction::Linear.eval(x, eps);
    let r = convergence_study(&line_model(), &f, eps, &[vec![100], vec![1000], vec![10_000]]).unwrap();
    assert!(r.is_monotone(), "{:?}", r.rows);
    assert!(r.decay_exponent.unwrap() > 0.5);

    let bad = convergence_study(&line_model(), &f, eps, &[vec![100], vec![100]]);
    assert!(matches!(bad, Err(Error::Domain(_))));
}

#[test]
fn invalid_inputs() {
    let m = disk_model();
    let l = CharacterLattice::cubic(8, 2).unwrap();
    assert!(matches!(spectral_average(&m, &l, &|_| 1.0, 0.2), Err(Error::Domain(_))));
    assert!(matches!(spectral_average(&m, &CharacterLattice::new(vec![8]).unwrap(), &|_| 1.0, 0.05), Err(Error::Domain(_))));
    assert!(matches!(CharacterLattice::new(vec![0, 3]), Err(Error::Domain(m)) if m.contains("N_1")));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mass_is_the_sublevel_count(n in 1u32..80, eps in 0.001f64..0.1) {
        let m = disk_model();
        let l = CharacterLattice::cubic(n, 2).unwrap();
        let v = spectral_average(&m, &l, &|_| 1.0, eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, disk_count(n as i64, eps) as f64 / (n as f64 * n as f64));
    }
}
