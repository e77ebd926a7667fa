use hmix_core::ode::*;
use hmix_core::{nu_of_lambda, Error};
use num_complex::Complex64;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Classical RK4 in `u = ln t` on `(y, z = t y')`, started at `t0` from a
/// hand-derived short expansion; an independent route to the same solution.
fn rk4_oracle(mode: (f64, f64), lambda: f64, t0: f64, start: (Complex64, Complex64), t_end: f64, steps: usize) -> Complex64 {
    let (s, d2) = mode;
    let i = Complex64::new(0.0, 1.0);
    let rhs = |u: f64, y: Complex64, z: Complex64| {
        let t = u.exp();
        let th = -4.0 * lambda * t * t * y + 2.0 * i * s * t * z + i * s * t * y + d2 * y;
        let t2ypp = (th - (3.0 * t * t + 4.0) * z) / (t * t + 4.0);
        (z, z + t2ypp)
    };
    let (u0, u1) = (t0.ln(), t_end.ln());
    let h = (u1 - u0) / steps as f64;
    let (mut y, mut z) = (start.0, t0 * start.1);
    for k in 0..steps {
        let u = u0 + k as f64 * h;
        let (a1, b1) = rhs(u, y, z);
        let (a2, b2) = rhs(u + h / 2.0, y + h / 2.0 * a1, z + h / 2.0 * b1);
        let (a3, b3) = rhs(u + h / 2.0, y + h / 2.0 * a2, z + h / 2.0 * b2);
        let (a4, b4) = rhs(u + h, y + h * a3, z + h * b3);
        y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        z += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    y
}

fn richardson(f: impl Fn(usize) -> Complex64, steps: usize) -> Complex64 {
    let coarse = f(steps);
    let fine = f(2 * steps);
    fine + (fine - coarse) / 15.0
}

#[test]
fn master_solution_matches_rk4_oracle_scalar_case() {
    let lam = 0.0475;
    let mode = ModePair::new(0, 0).unwrap();
    let grid = TimeGrid::new(10.0, 1000).unwrap();
    let traj = solve_master(mode, lam, c(1.0), &grid).unwrap();
    let y10 = *traj.y().last().unwrap();
    // y = 1 − (λ/4) t² + O(t⁴) when m = n = 0
    let t0 = 1e-4;
    let start = (c(1.0 - lam / 4.0 * t0 * t0), c(-lam / 2.0 * t0));
    let oracle = richardson(|k| rk4_oracle((0.0, 0.0), lam, t0, start, 10.0, k), 20_000);
    assert!((y10 - oracle).norm() / oracle.norm() < 1e-8, "{y10} vs {oracle}");
}

#[test]
fn master_solution_matches_rk4_oracle_mixed_modes() {
    let lam = 0.05;
    let mode = ModePair::new(2, -2).unwrap();
    let grid = TimeGrid::new(100.0, 1000).unwrap();
    let traj = solve_master(mode, lam, c(1.0), &grid).unwrap();
    // k = 2, m + n = 0: y = t²(1 + a₂t²), a₂ = −(8 + 4λ)/48
    let t0 = 1e-3;
    let a2 = -(8.0 + 4.0 * lam) / 48.0;
    let start = (c(t0 * t0 * (1.0 + a2 * t0 * t0)), c(2.0 * t0 + 4.0 * a2 * t0.powi(3)));
    let scale = traj.y().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    for target in [1.0, 10.0, 100.0] {
        let idx = traj.grid().iter().position(|&t| (t - target).abs() < 1e-9 * target).expect("grid point");
        let t = traj.grid()[idx];
        let oracle = richardson(|k| rk4_oracle((0.0, 16.0), lam, t0, start, t, k), 20_000);
        assert!((traj.y()[idx] - oracle).norm() / scale < 1e-8, "t={t}: {} vs {oracle}", traj.y()[idx]);
    }
}

#[test]
fn coarse_steps_are_reported_as_convergence_failure() {
    let grid = TimeGrid::new(1e4, 4).unwrap();
    let r = solve_master(ModePair::new(0, 0).unwrap(), 0.04, c(1.0), &grid);
    assert!(matches!(r, Err(Error::Convergence { .. })), "{r:?}");
    assert!(solve_master(ModePair::new(0, 0).unwrap(), 0.25, c(1.0), &TimeGrid::new(10.0, 100).unwrap()).is_err());
}

#[test]
fn forcing_endpoint_identities() {
    let lam = 0.04;
    let grid = TimeGrid::new(100.0, 500).unwrap();
    let mode = ModePair::new(0, 0).unwrap();
    let traj = solve_master(mode, lam, c(1.0), &grid).unwrap();
    let f = assemble_forcing(mode, &traj, lam).unwrap();
    assert!((f.eval(0.0) - 0.16 * traj.y()[0]).norm() < 1e-12);

    // m + n ≠ 0 makes y'(0) nonzero; f'(0) by one-sided differences at 0
    let lam = 0.09;
    let nu = nu_of_lambda(lam).unwrap();
    let mode = ModePair::new(2, 2).unwrap();
    let traj = solve_master(mode, lam, Complex64::new(0.5, 0.25), &grid).unwrap();
    let f = assemble_forcing(mode, &traj, lam).unwrap();
    let h = 1e-4;
    let fp0 = (-3.0 * f.eval(0.0) + 4.0 * f.eval(h) - f.eval(2.0 * h)) / (2.0 * h);
    let expected = (4.0 - nu * nu) * traj.y_prime()[0];
    assert!(expected.norm() > 0.1);
    assert!((fp0 - expected).norm() < 1e-6 * expected.norm(), "{fp0} vs {expected}");
    assert!((f.eval(0.0) - 4.0 * lam * traj.y()[0]).norm() < 1e-12);
}

#[test]
fn forcing_envelope_plateaus_for_unequal_modes() {
    let lam = 0.05;
    let mode = ModePair::new(0, 4).unwrap();
    let traj = solve_master(mode, lam, c(1.0), &TimeGrid::new(1e4, 400).unwrap()).unwrap();
    let f = assemble_forcing(mode, &traj, lam).unwrap();
    let audit = forcing_decay_audit(&f, 1.0, 1e4);
    assert!(f.decay_c().is_finite() && f.decay_c() > 0.0);
    assert_eq!(audit.sup, f.decay_c());
    assert!(audit.bounded, "{audit:?}");
}

#[test]
fn pipeline_closes_and_regular_amplitude_matches_fit() {
    for (n, m, lam) in [(0, 0, 0.04), (2, -2, 0.05), (0, 4, 0.05)] {
        let mode = ModePair::new(n, m).unwrap();
        let nu = nu_of_lambda(lam).unwrap();
        let traj = solve_master(mode, lam, c(1.0), &TimeGrid::new(1e12, 1000).unwrap()).unwrap();
        let f = assemble_forcing(mode, &traj, lam).unwrap();
        assert!(euler_residual(&traj, &f, lam).unwrap() < 1e-6);
        let regular = regular_asymptotic_constant(nu, &f, &TailOptions::default()).unwrap();
        let fit = long_time_amplitude(&traj, nu, 1e10).unwrap();
        assert!((regular.value - fit).norm() < 1e-6 * fit.norm(), "{} vs {fit}", regular.value);
        let window = traj.window(1.0, 1e4).unwrap();
        let report = ratner_check(&window, regular.value, nu);
        assert!(report.bounded, "{report:?}");
        let a = asymptotic_constant(nu, &f, &TailOptions::default()).unwrap();
        assert!(a.value.norm() <= f.decay_c() / (2.0 * nu * nu));
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let grid = TimeGrid::new(100.0, 200).unwrap();
    let mode = ModePair::new(0, 0).unwrap();
    let traj = solve_master(mode, 0.04, c(1.0), &grid).unwrap();
    assert!(matches!(assemble_forcing(mode, &traj, 0.05), Err(Error::Consistency { .. })));
    assert!(assemble_forcing(ModePair::new(2, 0).unwrap(), &traj, 0.04).is_err());

    // a trajectory that does not satisfy the master relation
    let ts: Vec<f64> = (1..200).map(|i| i as f64 * 0.1).collect();
    let y: Vec<Complex64> = ts.iter().map(|t| c(t.sin())).collect();
    let yp: Vec<Complex64> = ts.iter().map(|t| c(t.cos())).collect();
    let bogus = Trajectory::from_samples(ts, y, yp, TrajectoryMeta::new(0.04, Some(mode)).unwrap()).unwrap();
    assert!(matches!(assemble_forcing(mode, &bogus, 0.04), Err(Error::Consistency { .. })));
}

fn power_forcing() -> ForcingProfile {
    ForcingProfile::from_fn(|r| if r >= 1.0 { c(r.powi(-2)) } else { c(0.0) }, 1.0)
        .unwrap()
        .with_breakpoints(vec![1.0])
}

#[test]
fn particular_solution_closed_form() {
    let nu: f64 = 0.5;
    let t: f64 = 2.0;
    let p = particular_solution(nu, &power_forcing(), t, &TailOptions::default()).unwrap();
    // ∫₂^∞ r^{-2.5} = 2^{-1.5}/1.5, ∫₁² r^{-1.5} = 2(1 − 2^{-0.5})
    let tail = 2f64.powf(-1.5) / 1.5;
    let head = 2.0 * (1.0 - 2f64.powf(-0.5));
    let exact = -(t.powf(-0.5)) * tail - t.powf(-1.5) * head;
    assert!((p.value.re - exact).abs() < 1e-8, "{} vs {exact}", p.value);
    assert!(p.error < 1e-8);
}

#[test]
fn particular_solution_is_linear_and_vanishes_for_zero() {
    let opts = TailOptions::default();
    let f = power_forcing();
    let f2 = ForcingProfile::from_fn(|r| if r >= 1.0 { c(2.0 * r.powi(-2)) } else { c(0.0) }, 2.0)
        .unwrap()
        .with_breakpoints(vec![1.0]);
    for t in [0.5, 1.5, 3.0] {
        let a = particular_solution(0.7, &f, t, &opts).unwrap().value;
        let b = particular_solution(0.7, &f2, t, &opts).unwrap().value;
        assert!((b - 2.0 * a).norm() < 1e-9 * a.norm().max(1e-12));
        assert_eq!(particular_solution(0.7, &ForcingProfile::zero(), t, &opts).unwrap().value, c(0.0));
    }
    assert_eq!(asymptotic_constant(0.3, &ForcingProfile::zero(), &opts).unwrap().value, c(0.0));
}

/// Composite Simpson oracle for ∫₁^∞ r^{-1/2} e^{-r} dr via r = 1 + s², which
/// removes nothing singular but spreads the decay; truncated at s = 8.
fn incomplete_gamma_half_at_one() -> f64 {
    let n = 200_000;
    let b = 8.0;
    let h = b / n as f64;
    let g = |s: f64| {
        let r = 1.0 + s * s;
        r.powf(-0.5) * (-r).exp() * 2.0 * s
    };
    let mut acc = g(0.0) + g(b);
    for k in 1..n {
        acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn asymptotic_constant_of_exponential_forcing() {
    let f = ForcingProfile::from_fn(|r| c((-r).exp()), (-1.0f64).exp()).unwrap();
    let a = asymptotic_constant(0.5, &f, &TailOptions::default()).unwrap();
    let oracle = -incomplete_gamma_half_at_one();
    assert!((a.value.re - oracle).abs() < 1e-9, "{} vs {oracle}", a.value);
    assert!(a.value.norm() <= f.decay_c() / (2.0 * 0.25));
}

#[test]
fn envelope_violation_is_detected() {
    assert!(ForcingProfile::from_fn(|r| c(1.0 / r.sqrt()), 1.0).is_err());
}

#[test]
fn formula_solves_the_euler_equation() {
    let nu: f64 = 0.8;
    let lam = (1.0 - nu * nu) / 4.0;
    let f = ForcingProfile::from_fn(|r| Complex64::new((-r).exp() * r, 0.3 * (-r).exp()), 1.0).unwrap();
    let pts: Vec<f64> = (0..=4000).map(|i| 0.5 * 10f64.powf(i as f64 / 2000.0)).collect();
    let p = particular_trajectory(nu, &f, &pts, &TailOptions::default()).unwrap();
    let r = euler_residual(&p, &f, lam).unwrap();
    assert!(r < 1e-6, "{r}");
    for &t in &[0.7, 3.0, 20.0] {
        let i = pts.iter().position(|&x| x >= t).unwrap();
        let direct = particular_solution(nu, &f, pts[i], &TailOptions::default()).unwrap().value;
        assert!((p.y()[i] - direct).norm() < 1e-9);
    }
}

#[test]
fn master_trajectory_differs_from_formula_by_regular_homogeneous_mode() {
    let lam = 0.04;
    let nu = nu_of_lambda(lam).unwrap();
    let mode = ModePair::new(0, 0).unwrap();
    let traj = solve_master(mode, lam, c(1.0), &TimeGrid::new(1e12, 1000).unwrap()).unwrap();
    let f = assemble_forcing(mode, &traj, lam).unwrap();
    let pts: Vec<f64> = traj.grid().iter().copied().filter(|&t| (1.0..=1e4).contains(&t)).collect();
    let p = particular_trajectory(nu, &f, &pts, &TailOptions::default()).unwrap();
    let (alpha, beta) = homogeneous_amplitudes(&traj, &p, nu).unwrap();
    let regular = regular_asymptotic_constant(nu, &f, &TailOptions::default()).unwrap().value;
    assert!((alpha - regular).norm() < 1e-6 * regular.norm(), "{alpha} vs {regular}");
    assert!(beta.norm() < 1e-6, "{beta}");
}
