//! Laplace-type integrals `I(T) = ∫_U e^{T v(ξ)} a(ξ) dξ` with a single
//! non-degenerate maximum `v(0) = 0`, and their expansions
//! `I(T) ~ Σ_j c_j T^{−j−d/2}`.
//!
//! With a Morse chart `ρ` making the phase exactly `−|θ|²/2` and
//! `b(θ) = a(ρ(θ))·det Dρ(θ)·√det H` (so `b(0) = a(0)`),
//! `c_j = (det H)^{−1/2} Σ_{|k|=2j} (D^k b(0)/k!)·M(k)` with `M` the Gaussian
//! moments. Charts are built for quadratic phases, radial phases
//! `v = φ(½ξᵀHξ)`, and arbitrary one-dimensional phases.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::chebyshev::{multi_indices, taylor_1d_calibrated, taylor_tensor_calibrated};
use crate::error::{Error, Result};
use crate::extrapolate::neville_to_zero;
use crate::linalg::{Cholesky, SymMatrix};
use crate::quad::{dyadic_breakpoints, integrate_tensor, AdaptiveOptions, Estimate};
#[allow(unused_imports)]
use num_traits::Float;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Largest expansion order `laplace_expand` computes.
pub const MAX_ORDER: usize = 4;
const TAYLOR_LEVELS: usize = 4;

/// `∫ e^{−|θ|²/2} θ^k dθ = Π √(2π)(k_i − 1)!!`, zero if any `k_i` is odd.
pub fn gaussian_moment(k: &[usize]) -> f64 {
    let mut m = 1.0;
    for &ki in k {
        if ki % 2 == 1 {
            return 0.0;
        }
        let mut df = 1.0;
        let mut j = ki as i64 - 1;
        while j > 1 {
            df *= j as f64;
            j -= 2;
        }
        m *= (2.0 * PI).sqrt() * df;
    }
    m
}

/// How a Morse chart is obtained for the phase.
#[derive(Clone)]
pub enum MorseClass {
    /// `v = −½ξᵀHξ` exactly.
    Quadratic,
    /// `v = φ(q)`, `q = ½ξᵀHξ`, with `φ(0) = 0`, `φ'(0) = −1`, `φ' < 0`.
    /// `psi_inverse` is the inverse of `−φ`; solved numerically when absent.
    Radial { phi: RadialFn, phi_prime: RadialFn, psi_inverse: Option<RadialFn> },
    /// `d = 1`, any `v` with `v' < 0` on `(0, U]` and `v' > 0` on `[−U, 0)`.
    OneDimensional { v_prime: RadialFn },
    /// No explicit chart; only quadrature and fitting apply.
    General,
}

impl fmt::Debug for MorseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MorseClass::Quadratic => "Quadratic",
            MorseClass::Radial { .. } => "Radial",
            MorseClass::OneDimensional { .. } => "OneDimensional",
            MorseClass::General => "General",
        })
    }
}

/// `∫_U e^{T v} a` on the box `U = Π [−w_i, w_i]`.
#[derive(Clone)]
pub struct PhaseProblem {
    v: ScalarField,
    a: ScalarField,
    hessian: SymMatrix,
    chol: Cholesky,
    half_widths: Vec<f64>,
    class: MorseClass,
}

impl fmt::Debug for PhaseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseProblem")
            .field("dim", &self.dim())
            .field("hessian", &self.hessian)
            .field("half_widths", &self.half_widths)
            .field("class", &self.class)
            .finish()
    }
}

fn unit_amplitude() -> ScalarField {
    Arc::new(|_: &[f64]| 1.0)
}

impl PhaseProblem {
    /// `v = −½ξᵀHξ`.
    pub fn quadratic(hessian: SymMatrix, half_widths: Vec<f64>) -> Result<Self> {
        let h = hessian.clone();
        let v: ScalarField = Arc::new(move |x: &[f64]| -0.5 * h.quadratic_form(x));
        Self::build(v, hessian, half_widths, MorseClass::Quadratic)
    }

    /// `v = φ(½ξᵀHξ)`.
    pub fn radial(
        hessian: SymMatrix,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_inverse: Option<RadialFn>,
        half_widths: Vec<f64>,
    ) -> Result<Self> {
        let phi: RadialFn = Arc::new(phi);
        let phi_prime: RadialFn = Arc::new(phi_prime);
        if phi(0.0).abs() > 1e-14 || (phi_prime(0.0) + 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("radial profile needs phi(0) = 0 and phi'(0) = -1".into()));
        }
        let h = hessian.clone();
        let p = phi.clone();
        let v: ScalarField = Arc::new(move |x: &[f64]| p(0.5 * h.quadratic_form(x)));
        Self::build(v, hessian, half_widths, MorseClass::Radial { phi, phi_prime, psi_inverse })
    }

    /// A one-dimensional phase with curvature `h = −v''(0)` on `[−w, w]`.
    pub fn one_dimensional(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        curvature: f64,
        half_width: f64,
    ) -> Result<Self> {
        let hessian = SymMatrix::from_row_major(1, vec![curvature])?;
        let v: ScalarField = Arc::new(move |x: &[f64]| v(x[0]));
        Self::build(v, hessian, vec![half_width], MorseClass::OneDimensional { v_prime: Arc::new(v_prime) })
    }

    /// A phase without an explicit chart; `hessian` must equal `−D²v(0)`.
    pub fn general(
        v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        hessian: SymMatrix,
        half_widths: Vec<f64>,
    ) -> Result<Self> {
        Self::build(Arc::new(v), hessian, half_widths, MorseClass::General)
    }

    /// Named presets with `a ≡ 1`: `gauss1d`, `gauss2d` (`v = −|ξ|²/2` on
    /// `[−8, 8]^d`) and `quartic1d` (`v = −ξ²/2 − ξ⁴/4`).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gauss1d" => Self::quadratic(SymMatrix::identity(1), vec![8.0]),
            "gauss2d" => Self::quadratic(SymMatrix::identity(2), vec![8.0, 8.0]),
            "quartic1d" => Self::radial(
                SymMatrix::identity(1),
                |q| -q - q * q,
                |q| -1.0 - 2.0 * q,
                Some(Arc::new(|x: f64| 2.0 * x / (1.0 + (1.0 + 4.0 * x).sqrt()))),
                vec![8.0],
            ),
            other => Err(Error::Domain(format!("unknown preset '{other}' (gauss1d, gauss2d, quartic1d)"))),
        }
    }

    fn build(v: ScalarField, hessian: SymMatrix, half_widths: Vec<f64>, class: MorseClass) -> Result<Self> {
        let d = hessian.dim();
        if half_widths.len() != d || half_widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidModel(format!("need {d} positive half-widths, got {half_widths:?}")));
        }
        let chol = hessian
            .cholesky()
            .ok_or_else(|| Error::InvalidModel("hessian H = -D^2 v(0) is not positive definite".into()))?;
        let problem = Self { v, a: unit_amplitude(), hessian, chol, half_widths, class };
        problem.validate()?;
        Ok(problem)
    }

    /// Replaces the amplitude (default `a ≡ 1`).
    pub fn with_amplitude(mut self, a: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.a = Arc::new(a);
        self
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        let zero = vec![0.0; d];
        let v0 = (self.v)(&zero);
        if v0.abs() > 1e-14 {
            return Err(Error::InvalidModel(format!("v(0) = {v0:e}, expected 0")));
        }
        // central second differences at 0
        let h = 1e-4;
        let mut x = zero.clone();
        for i in 0..d {
            for j in i..d {
                let mut eval = |si: f64, sj: f64| {
                    x.iter_mut().for_each(|v| *v = 0.0);
                    x[i] += si * h;
                    x[j] += sj * h;
                    (self.v)(&x)
                };
                let fd = if i == j {
                    (eval(1.0, 0.0) - 2.0 * v0 + eval(-1.0, 0.0)) / (h * h)
                } else {
                    (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h)
                };
                let expected = -self.hessian.get(i, j);
                let scale = self.hessian.get(i, i).abs().max(self.hessian.get(j, j).abs());
                if (fd - expected).abs() > 1e-6 * scale {
                    return Err(Error::InvalidModel(format!(
                        "finite-difference -D^2 v(0)[{i}][{j}] = {:.8e} does not match hessian {:.8e}",
                        -fd, -expected
                    )));
                }
            }
        }
        let per_axis = match d {
            1 => 401,
            2 => 41,
            3 => 15,
            4 => 9,
            _ => 5,
        };
        let total = (per_axis as u64).pow(d as u32);
        for flat in 0..total {
            let mut r = flat;
            let mut at_origin = true;
            for (i, xi) in x.iter_mut().enumerate() {
                let idx = (r % per_axis as u64) as f64;
                r /= per_axis as u64;
                *xi = self.half_widths[i] * (2.0 * idx / (per_axis - 1) as f64 - 1.0);
                at_origin &= *xi == 0.0;
            }
            if at_origin {
                continue;
            }
            let val = (self.v)(&x);
            if !(val < 0.0) {
                return Err(Error::InvalidModel(format!("phase is not negative away from 0: v({x:?}) = {val}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn hessian(&self) -> &SymMatrix {
        &self.hessian
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn class(&self) -> &MorseClass {
        &self.class
    }

    pub fn phase(&self, xi: &[f64]) -> f64 {
        (self.v)(xi)
    }

    pub fn amplitude(&self, xi: &[f64]) -> f64 {
        (self.a)(xi)
    }

    fn inside(&self, xi: &[f64]) -> bool {
        xi.iter().zip(&self.half_widths).all(|(x, w)| x.abs() <= *w)
    }

    /// `b(θ)` for the explicit chart, NaN where the chart is undefined.
    fn pushforward(&self, theta: &[f64], xi: &mut [f64]) -> f64 {
        let d = self.dim();
        match &self.class {
            MorseClass::Quadratic => {
                self.chol.whiten(theta, xi);
                if !self.inside(xi) {
                    return f64::NAN;
                }
                (self.a)(xi)
            }
            MorseClass::Radial { phi, phi_prime, psi_inverse } => {
                let x = 0.5 * theta.iter().map(|t| t * t).sum::<f64>();
                if x == 0.0 {
                    xi.iter_mut().for_each(|v| *v = 0.0);
                    return (self.a)(xi);
                }
                let w = match psi_inverse {
                    Some(inv) => inv(x),
                    None => invert_increasing(|q| -phi(q), |q| -phi_prime(q), x, x),
                };
                if !(w > 0.0) {
                    return f64::NAN;
                }
                let g = (w / x).sqrt();
                let scaled: Vec<f64> = theta.iter().map(|t| g * t).collect();
                self.chol.whiten(&scaled, xi);
                if !self.inside(xi) {
                    return f64::NAN;
                }
                let w_prime = -1.0 / phi_prime(w);
                (self.a)(xi) * (w / x).powf(0.5 * (d as f64 - 2.0)) * w_prime
            }
            MorseClass::OneDimensional { v_prime } => {
                let t = theta[0];
                if t == 0.0 {
                    xi[0] = 0.0;
                    return (self.a)(xi);
                }
                let h = self.hessian.get(0, 0);
                let s = t.signum();
                // solve −2v(s·r) = θ² for r > 0
                let r = invert_increasing(
                    |r| -2.0 * (self.v)(&[s * r]),
                    |r| -2.0 * s * v_prime(s * r),
                    t * t,
                    t.abs() / h.sqrt(),
                );
                xi[0] = s * r;
                if !(r > 0.0) || !self.inside(xi) {
                    return f64::NAN;
                }
                (self.a)(xi) * (-t / v_prime(xi[0])) * h.sqrt()
            }
            MorseClass::General => f64::NAN,
        }
    }
}

/// Root of `g(q) = target` for increasing `g` with `g(0) = 0`, by Newton
/// steps safeguarded with bisection on an expanding bracket. NaN on failure.
pub(crate) fn invert_increasing(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, target: f64, guess: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = guess.max(f64::MIN_POSITIVE);
    let mut expansions = 0;
    while !(g(hi) >= target) {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 || !g(hi).is_finite() {
            return f64::NAN;
        }
    }
    let mut q = guess.clamp(lo, hi);
    for _ in 0..100 {
        let r = g(q) - target;
        if r == 0.0 {
            return q;
        }
        if r > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        let step = r / dg(q);
        let mut next = q - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - q).abs() <= 4.0 * f64::EPSILON * q.abs() {
            return next;
        }
        q = next;
    }
    q
}

/// Relative tolerance used by [`laplace_quadrature`].
pub const QUADRATURE_REL_TOL: f64 = 1e-12;

/// `∫_U e^{T v(ξ)} a(ξ) dξ` by globally adaptive Gauss–Legendre panels on
/// dyadic breakpoints at the scale `1/√(T H_ii)` around the maximum.
pub fn laplace_quadrature(problem: &PhaseProblem, t_value: f64) -> Result<Estimate<f64>> {
    laplace_quadrature_with(problem, t_value, QUADRATURE_REL_TOL)
}

pub fn laplace_quadrature_with(problem: &PhaseProblem, t_value: f64, rel_tol: f64) -> Result<Estimate<f64>> {
    if !(t_value >= 1.0 && t_value.is_finite()) {
        return Err(Error::Domain(format!("T must be finite and >= 1, got {t_value}")));
    }
    let breakpoints: Vec<Vec<f64>> = (0..problem.dim())
        .map(|i| {
            let w = problem.half_widths[i];
            dyadic_breakpoints(-w, w, 1.0 / (t_value * problem.hessian.get(i, i)).sqrt())
        })
        .collect();
    let opts = AdaptiveOptions { abs_tol: 0.0, rel_tol, max_refinements: 200_000, nodes_per_axis: 12 };
    integrate_tensor(&breakpoints, &opts, |x| (t_value * (problem.v)(x)).exp() * (problem.a)(x))
}

/// Coefficients `c_0 … c_N` of `Σ c_j T^{−j−d/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionCoefficients {
    pub dim: usize,
    pub order_n: usize,
    pub c: Vec<f64>,
    /// Per-coefficient error estimates.
    pub errors: Vec<f64>,
    /// Largest `|I(T) − Σ c_j T^{−j−d/2}|` over the samples (0 when not fitted).
    pub fit_residual: f64,
    pub t_grid_used: Vec<f64>,
}

impl ExpansionCoefficients {
    /// `Σ_{j ≤ terms} c_j T^{−j−d/2}` using the first `terms` coefficients.
    pub fn reconstruct_with(&self, t_value: f64, terms: usize) -> f64 {
        let base = t_value.powf(-0.5 * self.dim as f64);
        self.c.iter().take(terms).enumerate().map(|(j, c)| c * base * t_value.powi(-(j as i32))).sum()
    }

    pub fn reconstruct(&self, t_value: f64) -> f64 {
        self.reconstruct_with(t_value, self.c.len())
    }
}

/// Expansion coefficients from the explicit Morse chart of the problem's class.
pub fn laplace_expand(problem: &PhaseProblem, order_n: usize) -> Result<ExpansionCoefficients> {
    if order_n > MAX_ORDER {
        return Err(Error::Domain(format!("order {order_n} exceeds the supported maximum {MAX_ORDER}")));
    }
    let d = problem.dim();
    match problem.class {
        MorseClass::General => {
            return Err(Error::UnsupportedClass(format!("general {d}-dimensional phase")));
        }
        MorseClass::OneDimensional { .. } if d != 1 => {
            return Err(Error::UnsupportedClass(String::from("one-dimensional chart with d != 1")));
        }
        _ => {}
    }
    let delta = chart_half_width(problem)?;
    let max_deg = 2 * order_n;
    let norm = 1.0 / problem.hessian.determinant().sqrt();
    let mut xi = vec![0.0; d];
    let mut c = Vec::with_capacity(order_n + 1);
    let mut errors = Vec::with_capacity(order_n + 1);
    if d == 1 {
        let (b, err) = taylor_1d_calibrated(|t| problem.pushforward(&[t], &mut xi), delta, max_deg, TAYLOR_LEVELS);
        for j in 0..=order_n {
            let m = gaussian_moment(&[2 * j]);
            c.push(norm * b[2 * j] * m);
            errors.push(norm * err[2 * j] * m);
        }
    } else {
        let b = taylor_tensor_calibrated(|t| problem.pushforward(t, &mut xi), d, delta, max_deg, TAYLOR_LEVELS);
        for j in 0..=order_n {
            let mut cj = 0.0;
            let mut ej = 0.0;
            for k in multi_indices(d, 2 * j) {
                let m = gaussian_moment(&k);
                if m != 0.0 {
                    cj += b.get(&k) * m;
                    ej += b.error(&k) * m;
                }
            }
            c.push(norm * cj);
            errors.push(norm * ej);
        }
    }
    Ok(ExpansionCoefficients { dim: d, order_n, c, errors, fit_residual: 0.0, t_grid_used: Vec::new() })
}

/// Largest `δ ≤ 1/2` such that the chart is defined and lands in `U` on the
/// corners and axis ends of `[−δ, δ]^d`.
fn chart_half_width(problem: &PhaseProblem) -> Result<f64> {
    let d = problem.dim();
    let mut xi = vec![0.0; d];
    let mut delta: f64 = 0.5;
    for _ in 0..30 {
        let mut ok = true;
        let mut theta = vec![0.0; d];
        for corner in 0..(1usize << d) {
            for (i, t) in theta.iter_mut().enumerate() {
                *t = if corner >> i & 1 == 1 { delta } else { -delta };
            }
            ok &= problem.pushforward(&theta, &mut xi).is_finite();
        }
        for i in 0..d {
            for s in [-1.0, 1.0] {
                theta.iter_mut().for_each(|t| *t = 0.0);
                theta[i] = s * delta;
                ok &= problem.pushforward(&theta, &mut xi).is_finite();
            }
        }
        if ok {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    Err(Error::UnsupportedClass(String::from("the Morse chart is undefined near 0 for this problem")))
}

/// Sequential extraction of `c_0 … c_N` from samples `(T, I(T))`.
///
/// For each order `j` the normalized residual
/// `g_j(T) = T^j (T^{d/2} I(T) − Σ_{i<j} c_i T^{−i})` is extrapolated to
/// `1/T → 0` by Neville's scheme on geometric ladders of up to five points
/// spanning one decade; the window and degree with the smallest
/// consecutive-degree disagreement win.
pub fn fit_expansion(samples: &[(f64, f64)], dim: usize, order_n: usize) -> Result<ExpansionCoefficients> {
    let mut s: Vec<(f64, f64)> = samples.to_vec();
    if s.iter().any(|&(t, i)| !(t > 0.0 && t.is_finite() && i.is_finite())) {
        return Err(Error::Domain("samples need finite T > 0 and finite values".into()));
    }
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s.len() < 2 * (order_n + 1) {
        return Err(Error::Grid(format!("{} samples cannot determine {} coefficients", s.len(), order_n + 1)));
    }
    let (t_lo, t_hi) = (s[0].0, s[s.len() - 1].0);
    if t_hi < 100.0 * t_lo * (1.0 - 1e-12) {
        return Err(Error::Grid(format!("samples span [{t_lo}, {t_hi}], less than two decades")));
    }
    let half_d = 0.5 * dim as f64;
    let g0: Vec<f64> = s.iter().map(|&(t, i)| t.powf(half_d) * i).collect();
    let g0_scale = g0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut c: Vec<f64> = Vec::with_capacity(order_n + 1);
    let mut errors = Vec::with_capacity(order_n + 1);
    for j in 0..=order_n {
        let g: Vec<f64> = s
            .iter()
            .zip(&g0)
            .map(|(&(t, _), &g)| {
                let partial: f64 = c.iter().enumerate().map(|(i, ci)| ci * t.powi(-(i as i32))).sum();
                (g - partial) * t.powi(j as i32)
            })
            .collect();
        let (value, err, noise) = extrapolate_best(&s, &g, j, g0_scale);
        let stable = err <= (1e-3 * value.abs()).max(noise);
        if !stable {
            return Err(Error::Conditioning { order: j, last_stable: j.checked_sub(1) });
        }
        c.push(value);
        errors.push(err);
    }
    let coeffs = ExpansionCoefficients {
        dim,
        order_n,
        c,
        errors,
        fit_residual: 0.0,
        t_grid_used: s.iter().map(|p| p.0).collect(),
    };
    let fit_residual = s.iter().fold(0.0f64, |m, &(t, i)| m.max((i - coeffs.reconstruct(t)).abs()));
    Ok(ExpansionCoefficients { fit_residual, ..coeffs })
}

/// Best `(value, error, noise floor)` over one-decade windows and Neville
/// degrees 1..=4. The error of an estimate is the larger of its change
/// from the previous degree and its change from the same degree on the
/// neighbouring window, so isolated agreements of noisy values do not count.
fn extrapolate_best(s: &[(f64, f64)], g: &[f64], order: usize, g0_scale: f64) -> (f64, f64, f64) {
    let n = s.len();
    let mut table: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in 0..n {
        let end = s.partition_point(|p| p.0 <= 10.0 * s[start].0 * (1.0 + 1e-12));
        if end - start < 2 {
            continue;
        }
        // roundoff of g_j grows like T^j
        let noise = 1e3 * f64::EPSILON * g0_scale.max(f64::MIN_POSITIVE) * s[end - 1].0.powi(order as i32);
        let ests = (0..=4usize.min(end - start - 1))
            .map(|deg| {
                let idx = ladder(start, end, deg + 1);
                // Neville expects the point closest to the limit first
                let xs: Vec<f64> = idx.iter().rev().map(|&i| 1.0 / s[i].0).collect();
                let ys: Vec<f64> = idx.iter().rev().map(|&i| g[i]).collect();
                *neville_to_zero(&xs, &ys).last().expect("non-empty ladder")
            })
            .collect();
        table.push((noise, ests));
    }
    let mut best = (0.0, f64::INFINITY, f64::INFINITY);
    for w in 0..table.len() {
        let (noise, ref ests) = table[w];
        for deg in 1..ests.len() {
            let mut err = (ests[deg] - ests[deg - 1]).abs();
            let neighbour = if w + 1 < table.len() && table[w + 1].1.len() > deg {
                Some(w + 1)
            } else if w > 0 && table[w - 1].1.len() > deg {
                Some(w - 1)
            } else {
                None
            };
            match neighbour {
                Some(k) => err = err.max((ests[deg] - table[k].1[deg]).abs()),
                None => continue,
            }
            if err < best.1 || (err == best.1 && noise < best.2) {
                best = (ests[deg], err, noise);
            }
        }
    }
    best
}

/// `count` indices spread evenly over `[start, end)`, including both ends.
fn ladder(start: usize, end: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![end - 1];
    }
    let span = (end - 1 - start) as f64;
    let mut idx: Vec<usize> = (0..count).map(|k| start + (span * k as f64 / (count - 1) as f64).round() as usize).collect();
    idx.dedup();
    idx
}

/// Least-squares slope of `ln|I(T) − Σ_{j<terms} c_j T^{−j−d/2}|` against
/// `ln T` over the samples with `t_lo ≤ T ≤ t_hi`.
pub fn remainder_slope(samples: &[(f64, f64)], coeffs: &ExpansionCoefficients, terms: usize, t_lo: f64, t_hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|p| p.0 >= t_lo && p.0 <= t_hi)
        .map(|&(t, i)| (t.ln(), ((i - coeffs.reconstruct_with(t, terms)).abs() + 1e-300).ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `T` values from `t_min` to `t_max` (inclusive) at `per_decade` points per decade.
pub fn geometric_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min && per_decade >= 1) {
        return Err(Error::Grid(format!("bad T grid [{t_min}, {t_max}] at {per_decade} per decade")));
    }
    let k = ((t_max / t_min).log10() * per_decade as f64).round().max(1.0) as usize;
    Ok((0..=k).map(|i| if i == k { t_max } else { t_min * 10f64.powf(i as f64 / per_decade as f64) }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_follow_double_factorials() {
        let r = (2.0 * PI).sqrt();
        assert_eq!(gaussian_moment(&[0]), r);
        assert_eq!(gaussian_moment(&[1, 3]), 0.0);
        assert_eq!(gaussian_moment(&[4]), 3.0 * r);
        assert_eq!(gaussian_moment(&[2, 2]), r * r);
    }

    #[test]
    fn inverse_solver_matches_closed_form() {
        for x in [1e-12, 1e-3, 0.3, 5.0] {
            let q = invert_increasing(|q| q + q * q, |q| 1.0 + 2.0 * q, x, x);
            let exact = 2.0 * x / (1.0 + (1.0 + 4.0 * x).sqrt());
            assert!((q - exact).abs() <= 1e-15 * exact, "{x}: {q} vs {exact}");
        }
    }

    #[test]
    fn ladder_spans_window() {
        assert_eq!(ladder(3, 14, 3), vec![3, 8, 13]);
        assert_eq!(ladder(0, 5, 1), vec![4]);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let bad = SymMatrix::from_row_major(1, vec![-1.0]).unwrap();
        assert!(PhaseProblem::quadratic(bad, vec![1.0]).is_err());
        // wrong declared hessian
        let r = PhaseProblem::general(|x: &[f64]| -x[0] * x[0], SymMatrix::identity(1), vec![1.0]);
        assert!(r.is_err());
        // phase positive somewhere in U
        let r = PhaseProblem::general(|x: &[f64]| -0.5 * x[0] * x[0] + x[0].powi(4), SymMatrix::identity(1), vec![2.0]);
        assert!(r.is_err());
    }
}
