//! `selftest`: the closed-form example checks of every module, plus parallel
//! sweeps and a seeded Monte Carlo cross-check whose outputs must not depend
//! on the worker count.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use hmix_core::cover::{enumerate_characters, TestFunction};
use hmix_core::laplace::{fit_expansion, gaussian_moment, geometric_grid, laplace_quadrature};
use hmix_core::mixing::{correlation_integral, leading_constant, theorem_a_coefficients};
use hmix_core::ode::{
    assemble_forcing, asymptotic_constant, euler_residual, particular_solution, ratner_check, solve_master,
    ForcingProfile, ModePair, TailOptions, TimeGrid, Trajectory, TrajectoryMeta,
};
use hmix_core::spectral::lambda_of_nu;
use hmix_core::{nu_of_lambda, CharacterLattice, MixingProblem, PhaseProblem, SpectralModel, SymMatrix};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::commands::{parse_orders, RunReport};
use crate::config::ModelConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, Outputs, Table};
use crate::parallel::{self, CounterRng};

/// Monte Carlo sample count of the sublevel-area cross-check.
pub const MC_SAMPLES: u64 = 1 << 20;
const MC_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub section: &'static str,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Default)]
struct Checks {
    section: &'static str,
    items: Vec<Check>,
}

impl Checks {
    fn holds(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.items.push(Check { section: self.section, name: name.to_string(), pass, detail: detail.into() });
    }

    fn close(&mut self, name: &str, value: f64, expected: f64, tol: f64) {
        let pass = (value - expected).abs() <= tol;
        self.holds(name, pass, format!("{value:?} vs {expected:?} (tol {tol:?})"));
    }

    /// Runs a section; an unexpected error is itself a failed check.
    fn section(&mut self, name: &'static str, body: impl FnOnce(&mut Self) -> hmix_core::Result<()>) {
        self.section = name;
        if let Err(e) = body(self) {
            self.holds("section completes", false, e.to_string());
        }
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn spectral(k: &mut Checks) -> hmix_core::Result<()> {
    k.close("nu(3/16) = 1/2", nu_of_lambda(3.0 / 16.0)?, 0.5, 0.0);
    k.holds("nu(1/4) is rejected", nu_of_lambda(0.25).is_err(), "open domain endpoint");
    let line = SpectralModel::quadratic(2, SymMatrix::identity(1), 0.1)?;
    k.close("lambda0(0) = 0", line.lambda0(&[0.0])?, 0.0, 0.0);
    let h = SpectralModel::quadratic(3, SymMatrix::diagonal(&[2.0, 1.0]), 0.1)?.hessian_mixing();
    k.close("g=3 diag(2,1): H_00 = 4pi", h.get(0, 0), 4.0 * PI, 1e-14);
    k.close("g=3 diag(2,1): H_11 = 2pi", h.get(1, 1), 2.0 * PI, 1e-14);
    k.close("g=3 diag(2,1): H_01 = 0", h.get(0, 1), 0.0, 0.0);
    let h = SpectralModel::quadratic(2, SymMatrix::identity(2), 0.1)?.hessian_mixing();
    k.close("g=2 I2: H = 4pi I", h.get(0, 0).max(h.get(1, 1)), 4.0 * PI, 1e-14);
    k.close("sigma(I4) = 1", SpectralModel::quadratic(2, SymMatrix::identity(4), 0.1)?.sigma(), 1.0, 0.0);
    Ok(())
}

fn ode(k: &mut Checks) -> hmix_core::Result<()> {
    let mode = ModePair::new(0, 0)?;
    let traj = solve_master(mode, 0.0, c(1.0), &TimeGrid::new(100.0, 200)?)?;
    let dev = traj.y().iter().map(|z| (z - c(1.0)).norm()).fold(0.0, f64::max);
    k.close("lambda=0, y0=1 gives y = 1", dev, 0.0, 1e-15);
    let f = assemble_forcing(mode, &traj, 0.0)?;
    k.close("y = 1 gives decay_c = 0", f.decay_c(), 0.0, 0.0);
    let fmax = traj.grid().iter().map(|&t| f.eval(t).norm()).fold(0.0, f64::max);
    k.close("y = 1 gives f = 0", fmax, 0.0, 1e-14);

    let ts: Vec<f64> = (0..=4000).map(|i| 10f64.powf(i as f64 / 2000.0)).collect();
    for nu in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        let lam = lambda_of_nu(nu);
        let e = nu - 1.0;
        let y = ts.iter().map(|t| c(t.powf(e))).collect();
        let yp = ts.iter().map(|t| c(e * t.powf(e - 1.0))).collect();
        let traj = Trajectory::from_samples(ts.clone(), y, yp, TrajectoryMeta::new(lam, None)?)?;
        let r = euler_residual(&traj, &ForcingProfile::zero(), lam)?;
        k.close(&format!("t^(nu-1) residual, nu = {nu}"), r, 0.0, 1e-10);
    }

    let lam = 0.1;
    let flat: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.1).collect();
    let traj = Trajectory::from_samples(flat, vec![c(2.0); 50], vec![c(0.0); 50], TrajectoryMeta::new(lam, None)?)?;
    let f = ForcingProfile::from_fn(move |_| c(4.0 * lam * 2.0), 1e9)?;
    k.close("constant y with f = 4 lambda y", euler_residual(&traj, &f, lam)?, 0.0, 0.0);

    let opts = TailOptions::default();
    let zero = ForcingProfile::zero();
    let p0 = particular_solution(0.7, &zero, 2.0, &opts)?.value.norm();
    k.close("particular solution of f = 0", p0, 0.0, 0.0);
    let power = |s: f64| {
        ForcingProfile::from_fn(move |r| if r >= 1.0 { c(s * r.powi(-2)) } else { c(0.0) }, s).map(|f| f.with_breakpoints(vec![1.0]))
    };
    let a = particular_solution(0.7, &power(1.0)?, 3.0, &opts)?.value;
    let b = particular_solution(0.7, &power(2.0)?, 3.0, &opts)?.value;
    k.close("particular solution is linear", (b - 2.0 * a).norm(), 0.0, 1e-9 * a.norm());
    k.close("asymptotic constant of f = 0", asymptotic_constant(0.3, &zero, &opts)?.value.norm(), 0.0, 0.0);

    let nu = 0.6;
    let amp = Complex64::new(0.3, 0.1);
    let ts: Vec<f64> = (0..=400).map(|i| 10f64.powf(i as f64 / 100.0)).collect();
    let meta = TrajectoryMeta::new(lambda_of_nu(nu), None)?;
    let exact: Vec<Complex64> = ts.iter().map(|t| amp * t.powf(nu - 1.0)).collect();
    let traj = Trajectory::from_samples(ts.clone(), exact.clone(), exact.clone(), meta)?;
    k.close("ratner sup on exact A t^(nu-1)", ratner_check(&traj, amp, nu).sup, 0.0, 1e-15);
    let offset: Vec<Complex64> = ts.iter().zip(&exact).map(|(t, z)| z + 1.0 / t).collect();
    let traj = Trajectory::from_samples(ts, offset.clone(), offset, meta)?;
    k.close("ratner sup with a 1/t offset", ratner_check(&traj, amp, nu).sup, 1.0, 1e-12);
    Ok(())
}

fn laplace(k: &mut Checks) -> hmix_core::Result<()> {
    let s = (2.0 * PI).sqrt();
    k.close("moment (0) = sqrt(2pi)", gaussian_moment(&[0]), s, 1e-15 * s);
    k.close("moment (4) = 3 sqrt(2pi)", gaussian_moment(&[4]), 3.0 * s, 1e-15 * s);
    let v = laplace_quadrature(&PhaseProblem::preset("gauss1d")?, 100.0)?.value;
    k.close("gauss1d at T = 100", v, (2.0 * PI / 100.0).sqrt(), 1e-10);
    let v = laplace_quadrature(&PhaseProblem::preset("gauss2d")?, 50.0)?.value;
    k.close("gauss2d at T = 50", v, 2.0 * PI / 50.0, 1e-10);
    let zeros: Vec<(f64, f64)> = geometric_grid(1e2, 1e4, 5)?.into_iter().map(|t| (t, 0.0)).collect();
    let fit = fit_expansion(&zeros, 1, 2)?;
    k.holds("fit of zero samples is zero", fit.c.iter().all(|&x| x == 0.0), format!("{:?}", fit.c));
    Ok(())
}

fn cover(k: &mut Checks) -> hmix_core::Result<()> {
    let two = enumerate_characters(&CharacterLattice::new(vec![2])?);
    k.holds("orders (2) give {0, -1/2}", two == vec![vec![0.0], vec![-0.5]], format!("{two:?}"));
    let six = enumerate_characters(&CharacterLattice::new(vec![2, 3])?).len();
    k.holds("orders (2,3) give 6 characters", six == 6, six.to_string());
    let counts: Vec<usize> = (1..=10).map(|n| CharacterLattice::new(vec![n]).map(|l| enumerate_characters(&l).len())).collect::<hmix_core::Result<_>>()?;
    k.holds("orders (N) give N characters", counts == (1..=10).collect::<Vec<_>>(), format!("{counts:?}"));
    let disk = SpectralModel::quadratic(2, SymMatrix::identity(2), 0.1)?;
    let v = hmix_core::cover::spectral_average(&disk, &CharacterLattice::new(vec![1, 1])?, &|x| 3.0 + x, 0.05)?;
    k.close("single character sees f(0)", v, 3.0, 0.0);
    let l = [CharacterLattice::cubic(8, 2)?, CharacterLattice::cubic(16, 2)?];
    let zero = parallel::convergence_study(&disk, &|_| 0.0, 0.05, &l)?;
    k.holds("zero test function has zero error", zero.rows.iter().all(|r| r.abs_err == 0.0), format!("{} rows", zero.rows.len()));
    Ok(())
}

fn mixing(k: &mut Checks) -> hmix_core::Result<()> {
    let line = SpectralModel::quadratic(2, SymMatrix::identity(1), 0.1)?;
    let width = line.domain_u()[0];
    let p = MixingProblem::constant(line.clone(), 1.0)?;
    k.close("T = 0 integrates the amplitude", correlation_integral(&p, 0.0)?.value, 2.0 * width, 1e-13);
    let z = MixingProblem::constant(line.clone(), 0.0)?;
    k.close("A = 0 integrates to 0", correlation_integral(&z, 30.0)?.value, 0.0, 0.0);
    let r = theorem_a_coefficients(&z, &geometric_grid(1e2, 1e4, 5)?, 2)?;
    k.holds("A = 0 has zero coefficients", r.coefficients.c.iter().all(|&x| x == 0.0), format!("{:?}", r.coefficients.c));
    k.close("leading constant with a0 = 0", leading_constant(&line, 0.0), 0.0, 0.0);
    let g3 = SpectralModel::quadratic(3, SymMatrix::identity(1), 0.1)?;
    k.close("leading constant g=3, d=1, a0=2", leading_constant(&g3, 2.0), 2.0, 1e-15);
    Ok(())
}

fn config(k: &mut Checks) -> hmix_core::Result<()> {
    let ok: Result<ModelConfig, _> = serde_json::from_str(r#"{"genus":2,"rank_d":1,"gram":[1],"gap_delta":0.1}"#);
    let built = ok.map_err(|e| e.to_string()).and_then(|c| c.build().map_err(|e| e.to_string()));
    k.holds("genus 2, rank 1, gram [1] loads", built.is_ok(), built.err().unwrap_or_default());
    let neg = ModelConfig {
        genus: 2,
        rank_d: 2,
        gram: vec![1.0, 2.0, 2.0, 1.0],
        perturbation: Default::default(),
        gap_delta: 0.1,
        domain_u: None,
    };
    let msg = neg.build().map(|_| String::new()).unwrap_or_else(|e| e.to_string());
    k.holds("indefinite gram is rejected", msg.contains("gram not positive definite"), msg);
    let msg = parse_orders("0,3")
        .and_then(|o| CharacterLattice::new(o).map_err(CliError::invariant))
        .map(|_| String::new())
        .unwrap_or_else(|e| e.to_string());
    k.holds("order 0 is rejected by name", msg.contains("N_1"), msg);
    Ok(())
}

pub struct Sweeps {
    pub cover: Table,
    pub laplace: Table,
}

/// Work that runs on the pool and feeds the byte-compared outputs.
fn parallel_sweeps(k: &mut Checks, seed: u64) -> hmix_core::Result<Sweeps> {
    k.section = "parallel";
    let eps = 0.05;
    let disk = SpectralModel::quadratic(2, SymMatrix::identity(2), 0.1)?;
    let one = |x: f64| TestFunction::One.eval(x, eps);
    let lattices: Vec<CharacterLattice> = [16, 32, 64, 128, 256].iter().map(|&n| CharacterLattice::cubic(n, 2)).collect::<hmix_core::Result<_>>()?;
    let study = parallel::convergence_study(&disk, &one, eps, &lattices)?;
    let mut cover = Table::new(&["min_n", "empirical", "limit", "abs_err"]);
    for r in &study.rows {
        cover.push(vec![r.min_n.to_string(), fmt_f64(r.empirical), fmt_f64(r.limit), fmt_f64(r.abs_err)]);
        k.holds(
            &format!("disk count within 2/N at N = {}", r.min_n),
            r.abs_err <= 2.0 / r.min_n as f64,
            format!("{:?}", r.abs_err),
        );
    }
    let top = lattices.last().expect("lattices");
    let sequential = hmix_core::cover::spectral_average(&disk, top, &one, eps)?;
    let par = study.rows.last().map_or(f64::NAN, |r| r.empirical);
    k.holds("parallel sweep equals the sequential sum", par.to_bits() == sequential.to_bits(), format!("{par:?} vs {sequential:?}"));

    // hits of λ₀ ≤ ε for uniform ω on the fundamental domain; the area is ε
    let rng = CounterRng::new(seed, MC_STREAM);
    let hits = parallel::monte_carlo_hits(&rng, 2, MC_SAMPLES, &|w| disk.lambda0_raw(w) <= eps);
    let p = hits as f64 / MC_SAMPLES as f64;
    let sd = (eps * (1.0 - eps) / MC_SAMPLES as f64).sqrt();
    k.holds("Monte Carlo sublevel area within 5 sd", (p - eps).abs() <= 5.0 * sd, format!("{hits} hits, {p:?} vs {eps:?} (sd {sd:?})"));
    k.holds("Monte Carlo agrees with the lattice sum", (p - par).abs() <= 5.0 * sd + 2.0 / 256.0, format!("{p:?} vs {par:?}"));

    let problem = PhaseProblem::preset("gauss1d")?;
    let grid = geometric_grid(1e2, 1e4, 10)?;
    let samples = parallel::laplace_samples(&problem, &grid)?;
    let mut laplace = Table::new(&["T", "I_quadrature", "I_reconstructed", "abs_err"]);
    let mut worst: f64 = 0.0;
    for &(t, i) in &samples {
        let exact = (2.0 * PI / t).sqrt();
        worst = worst.max((i - exact).abs() / exact);
        laplace.push_f64(&[t, i, exact, (i - exact).abs()]);
    }
    k.close("gauss1d sweep matches sqrt(2pi/T)", worst, 0.0, 1e-10);
    Ok(Sweeps { cover, laplace })
}

pub struct SelftestArgs {
    pub out_dir: PathBuf,
    pub seed: u64,
}

pub fn run_checks(seed: u64) -> (Vec<Check>, Option<Sweeps>) {
    let mut k = Checks::default();
    k.section("spectral", spectral);
    k.section("ode", ode);
    k.section("laplace", laplace);
    k.section("cover", cover);
    k.section("mixing", mixing);
    k.section("config", config);
    let sweeps = match parallel_sweeps(&mut k, seed) {
        Ok(s) => Some(s),
        Err(e) => {
            k.holds("section completes", false, e.to_string());
            None
        }
    };
    (k.items, sweeps)
}

pub fn run_selftest(a: &SelftestArgs) -> Result<RunReport, CliError> {
    let config = json!({ "mc_samples": MC_SAMPLES, "mc_stream": MC_STREAM });
    let (checks, sweeps) = run_checks(a.seed);
    let dir: &Path = &a.out_dir;
    let mut outputs = Outputs::default();
    outputs.write_json(&dir.join("selftest.json"), &checks)?;
    if let Some(s) = sweeps {
        outputs.write_table(&dir.join("selftest_cover.csv"), &s.cover)?;
        outputs.write_table(&dir.join("selftest_laplace.csv"), &s.laplace)?;
    }
    let failures: Vec<String> =
        checks.iter().filter(|c| !c.pass).map(|c| format!("{}: {}: {}", c.section, c.name, c.detail)).collect();
    let lines: Vec<String> =
        checks.iter().map(|c| format!("{} {}: {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.section, c.name, c.detail)).collect();
    let summary = json!({ "checks": checks.len(), "failed": failures.len(), "lines": lines });
    Ok(RunReport {
        subcommand: "selftest",
        config,
        outputs,
        manifest: dir.join("selftest.manifest.json"),
        summary,
        failures,
    })
}
