//! The eigenvalue branch `λ₀(ω)` near the trivial character, the Casimir
//! parameter map `λ ↔ ν`, and the constants derived from the Gram matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;


use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// `ν = √(1 − 4λ)` on the complementary-series range `0 ≤ λ < 1/4`.
pub fn nu_of_lambda(lambda: f64) -> Result<f64> {
    if !(0.0..0.25).contains(&lambda) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside [0, 1/4)"
        )));
    }
    Ok((1.0 - 4.0 * lambda).sqrt())
}

/// `λ(ν) = (1 − ν²)/4`.
pub fn lambda_of_nu(nu: f64) -> f64 {
    (1.0 - nu * nu) / 4.0
}

/// A Casimir eigenvalue together with its parameter, `λ = (1 − ν²)/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CasimirPoint {
    pub lambda: f64,
    pub nu: f64,
}

impl CasimirPoint {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        Ok(Self { lambda, nu: nu_of_lambda(lambda)? })
    }

    pub fn from_nu(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Domain(format!("nu = {nu} outside (0, 1]")));
        }
        Ok(Self { lambda: lambda_of_nu(nu), nu })
    }
}

/// One term `coef · Π ω_i^{exponents_i}` of a polynomial perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

/// Smooth correction added to the quadratic model of `λ₀`.
///
/// Every variant must vanish to second order at the origin; the model
/// constructor checks this numerically.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Perturbation {
    #[default]
    None,
    /// `coef · Σ ω_i⁴`
    Quartic { coef: f64 },
    /// `coef · (ωᵀ G ω)²`; keeps `λ₀` a function of the Gram form.
    RadialQuartic { coef: f64 },
    /// Arbitrary polynomial.
    Polynomial { terms: Vec<Monomial> },
}

impl Perturbation {
    fn eval(&self, omega: &[f64], gram: &SymMatrix) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Quartic { coef } => coef * omega.iter().map(|w| w.powi(4)).sum::<f64>(),
            Perturbation::RadialQuartic { coef } => {
                let q = gram.quadratic_form(omega);
                coef * q * q
            }
            Perturbation::Polynomial { terms } => terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.exponents
                            .iter()
                            .zip(omega)
                            .map(|(&e, w)| w.powi(e as i32))
                            .product::<f64>()
                })
                .sum(),
        }
    }

    fn add_gradient(&self, omega: &[f64], gram: &SymMatrix, out: &mut [f64]) {
        match self {
            Perturbation::None => {}
            Perturbation::Quartic { coef } => {
                for (o, w) in out.iter_mut().zip(omega) {
                    *o += 4.0 * coef * w.powi(3);
                }
            }
            Perturbation::RadialQuartic { coef } => {
                let q = gram.quadratic_form(omega);
                let mut gw = vec![0.0; omega.len()];
                gram.apply(omega, &mut gw);
                for (o, g) in out.iter_mut().zip(&gw) {
                    *o += 4.0 * coef * q * g;
                }
            }
            Perturbation::Polynomial { terms } => {
                for t in terms {
                    for (i, o) in out.iter_mut().enumerate() {
                        let ei = t.exponents.get(i).copied().unwrap_or(0);
                        if ei == 0 {
                            continue;
                        }
                        let mut p = t.coef * ei as f64;
                        for (j, (&e, w)) in t.exponents.iter().zip(omega).enumerate() {
                            let e = if j == i { e - 1 } else { e };
                            p *= w.powi(e as i32);
                        }
                        *o += p;
                    }
                }
            }
        }
    }

    fn check_dimension(&self, d: usize) -> Result<()> {
        if let Perturbation::Polynomial { terms } = self {
            for t in terms {
                if t.exponents.len() != d {
                    return Err(Error::InvalidModel(format!(
                        "polynomial term has {} exponents, model rank is {d}",
                        t.exponents.len()
                    )));
                }
                if !t.coef.is_finite() {
                    return Err(Error::InvalidModel("non-finite polynomial coefficient".into()));
                }
            }
        }
        Ok(())
    }
}

/// `λ₀` restricted to a function of `q = ωᵀ G ω`: `λ₀ = slope·q + curvature·q²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub slope: f64,
    pub curvature: f64,
}

impl RadialProfile {
    pub fn eval(&self, q: f64) -> f64 {
        self.slope * q + self.curvature * q * q
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.slope + 2.0 * self.curvature * q
    }

    /// Smallest `q ≥ 0` with `eval(q) = x`, if the profile reaches `x` while increasing.
    pub fn inverse(&self, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return Some(0.0);
        }
        if self.curvature == 0.0 {
            return Some(x / self.slope);
        }
        let disc = self.slope * self.slope + 4.0 * self.curvature * x;
        if disc < 0.0 {
            return None;
        }
        // numerically stable root of κq² + cq − x = 0
        let q = 2.0 * x / (self.slope + disc.sqrt());
        (self.derivative(q) > 0.0).then_some(q)
    }
}

/// Failure thresholds applied when a model is constructed.
const PERTURBATION_TOL: f64 = 1e-8;
const HESSIAN_REL_TOL: f64 = 1e-6;
const DEFAULT_CEILING: f64 = 0.25 * 0.9;

/// Analytic model of the bottom eigenvalue branch of the twisted Laplacian
/// on a genus-`g` surface, over a rank-`d` torus of characters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    genus: u32,
    gram: SymMatrix,
    perturbation: Perturbation,
    gap_delta: f64,
    domain_u: Vec<f64>,
}

impl SpectralModel {
    /// Validates every structural invariant: Gram positivity, second-order
    /// vanishing of the perturbation, the Hessian identity, and a grid sweep
    /// of `0 < λ₀ < 1/4` over `U \ {0}`.
    pub fn new(
        genus: u32,
        gram: SymMatrix,
        perturbation: Perturbation,
        gap_delta: f64,
        domain_u: Option<Vec<f64>>,
    ) -> Result<Self> {
        if genus < 2 {
            return Err(Error::InvalidModel(format!("genus {genus} < 2")));
        }
        let d = gram.dim();
        if d > 2 * genus as usize {
            return Err(Error::InvalidModel(format!("rank {d} exceeds 2g = {}", 2 * genus)));
        }
        if !gram.is_positive_definite() {
            return Err(Error::InvalidModel("gram not positive definite".into()));
        }
        if !(gap_delta > 0.0 && gap_delta.is_finite()) {
            return Err(Error::InvalidModel(format!("gap_delta = {gap_delta} must be positive")));
        }
        perturbation.check_dimension(d)?;
        let mut model = Self { genus, gram, perturbation, gap_delta, domain_u: Vec::new() };
        model.check_perturbation_order()?;
        model.domain_u = match domain_u {
            Some(u) => {
                if u.len() != d || u.iter().any(|&x| !(x > 0.0 && x <= 0.5)) {
                    return Err(Error::InvalidModel(
                        "domain_u needs one half-width in (0, 1/2] per coordinate".into(),
                    ));
                }
                u
            }
            None => model.default_domain(),
        };
        model.check_hessian()?;
        model.sweep()?;
        Ok(model)
    }

    /// Quadratic model `λ₀(ω) = (π/(g−1)) ωᵀGω` with the default box.
    pub fn quadratic(genus: u32, gram: SymMatrix, gap_delta: f64) -> Result<Self> {
        Self::new(genus, gram, Perturbation::None, gap_delta, None)
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn rank(&self) -> usize {
        self.gram.dim()
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn gap_delta(&self) -> f64 {
        self.gap_delta
    }

    /// Half-widths of the box `U` around the trivial character.
    pub fn domain_u(&self) -> &[f64] {
        &self.domain_u
    }

    /// `π/(g−1)`: half of the Hessian scale `2π/(g−1)`.
    pub fn quadratic_scale(&self) -> f64 {
        PI / (self.genus as f64 - 1.0)
    }

    pub fn contains(&self, omega: &[f64]) -> bool {
        omega.len() == self.rank() && omega.iter().zip(&self.domain_u).all(|(w, u)| w.abs() <= *u)
    }

    /// `λ₀(ω)` without domain checks; defined on all of `R^d`.
    pub fn lambda0_raw(&self, omega: &[f64]) -> f64 {
        self.quadratic_scale() * self.gram.quadratic_form(omega) + self.perturbation.eval(omega, &self.gram)
    }

    /// `λ₀(ω)` for `ω ∈ U`.
    pub fn lambda0(&self, omega: &[f64]) -> Result<f64> {
        if omega.len() != self.rank() {
            return Err(Error::Domain(format!(
                "omega has {} coordinates, model rank is {}",
                omega.len(),
                self.rank()
            )));
        }
        if !self.contains(omega) {
            return Err(Error::Domain("omega outside domain_u".into()));
        }
        let value = self.lambda0_raw(omega);
        if value >= 0.25 {
            return Err(Error::ModelValidity { value });
        }
        Ok(value)
    }

    /// `ν₀(ω) = √(1 − 4λ₀(ω))`.
    pub fn nu0(&self, omega: &[f64]) -> Result<f64> {
        nu_of_lambda(self.lambda0(omega)?)
    }

    pub fn gradient(&self, omega: &[f64], out: &mut [f64]) {
        self.gram.apply(omega, out);
        let s = 2.0 * self.quadratic_scale();
        for o in out.iter_mut() {
            *o *= s;
        }
        self.perturbation.add_gradient(omega, &self.gram, out);
    }

    /// `D²λ₀(0) = (2π/(g−1))·G`.
    pub fn hessian_lambda0(&self) -> SymMatrix {
        self.gram.scaled(2.0 * self.quadratic_scale())
    }

    /// `H = D²(1 − ν₀)(0) = 2·D²λ₀(0) = (4π/(g−1))·G`.
    pub fn hessian_mixing(&self) -> SymMatrix {
        self.gram.scaled(4.0 * self.quadratic_scale())
    }

    /// `σ = (det G)^{−1/2}`.
    pub fn sigma(&self) -> f64 {
        1.0 / self.gram.determinant().sqrt()
    }

    /// `λ₀ = F(ωᵀGω)` when the perturbation preserves the Gram form.
    pub fn radial_profile(&self) -> Option<RadialProfile> {
        let slope = self.quadratic_scale();
        match self.perturbation {
            Perturbation::None => Some(RadialProfile { slope, curvature: 0.0 }),
            Perturbation::RadialQuartic { coef } => Some(RadialProfile { slope, curvature: coef }),
            _ => None,
        }
    }

    /// Central-difference Hessian of `λ₀` at the origin, row-major.
    pub fn fd_hessian(&self, step: f64) -> Vec<f64> {
        let d = self.rank();
        let mut h = vec![0.0; d * d];
        let mut p = vec![0.0; d];
        let f0 = self.lambda0_raw(&p);
        for i in 0..d {
            for j in 0..d {
                let v = if i == j {
                    p[i] = step;
                    let fp = self.lambda0_raw(&p);
                    p[i] = -step;
                    let fm = self.lambda0_raw(&p);
                    p[i] = 0.0;
                    (fp - 2.0 * f0 + fm) / (step * step)
                } else {
                    let mut eval = |si: f64, sj: f64| {
                        p[i] = si * step;
                        p[j] = sj * step;
                        let v = self.lambda0_raw(&p);
                        p[i] = 0.0;
                        p[j] = 0.0;
                        v
                    };
                    (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                        / (4.0 * step * step)
                };
                h[i * d + j] = v;
            }
        }
        h
    }

    fn check_perturbation_order(&self) -> Result<()> {
        let d = self.rank();
        let origin = vec![0.0; d];
        if self.perturbation.eval(&origin, &self.gram).abs() > PERTURBATION_TOL {
            return Err(Error::InvalidModel("perturbation does not vanish at 0".into()));
        }
        let mut grad = vec![0.0; d];
        self.perturbation.add_gradient(&origin, &self.gram, &mut grad);
        if grad.iter().any(|g| g.abs() > PERTURBATION_TOL) {
            return Err(Error::InvalidModel("perturbation gradient at 0 is nonzero".into()));
        }
        // Hessian of the perturbation by central differences of its gradient,
        // Richardson-extrapolated so an h² term from quartic parts cancels
        let mut p = vec![0.0; d];
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        let mut column = |j: usize, h: f64| {
            gp.iter_mut().for_each(|x| *x = 0.0);
            gm.iter_mut().for_each(|x| *x = 0.0);
            p[j] = h;
            self.perturbation.add_gradient(&p, &self.gram, &mut gp);
            p[j] = -h;
            self.perturbation.add_gradient(&p, &self.gram, &mut gm);
            p[j] = 0.0;
            gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>()
        };
        for j in 0..d {
            let coarse = column(j, 1e-4);
            let fine = column(j, 5e-5);
            for i in 0..d {
                if ((4.0 * fine[i] - coarse[i]) / 3.0).abs() > PERTURBATION_TOL {
                    return Err(Error::InvalidModel(
                        "perturbation changes the Hessian at 0 (must vanish to second order)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_hessian(&self) -> Result<()> {
        let exact = self.hessian_lambda0();
        let fd = self.fd_hessian(1e-4);
        let scale = exact.as_row_major().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in fd.iter().zip(exact.as_row_major()) {
            if (a - b).abs() > HESSIAN_REL_TOL * scale {
                return Err(Error::InvalidModel(format!(
                    "Hessian check failed: finite difference {a} vs 2π/(g−1)·gram {b}"
                )));
            }
        }
        Ok(())
    }

    fn default_domain(&self) -> Vec<f64> {
        let d = self.rank();
        let worst = max_sign_form(&self.gram);
        let mut u = (DEFAULT_CEILING / (self.quadratic_scale() * worst)).sqrt().min(0.5);
        let base = Self {
            domain_u: vec![u; d],
            ..self.clone()
        };
        let mut probe = base;
        for _ in 0..40 {
            probe.domain_u = vec![u; d];
            match probe.sweep_extremes() {
                (_, max) if max < DEFAULT_CEILING + 1e-12 => break,
                _ => u *= 0.9,
            }
        }
        vec![u; d]
    }

    fn sweep_points(&self) -> usize {
        match self.rank() {
            1 => 2001,
            2 => 141,
            3 => 31,
            4 => 13,
            _ => 5,
        }
    }

    /// (min over ω ≠ 0, max) of `λ₀` on the sweep grid of `U`.
    fn sweep_extremes(&self) -> (f64, f64) {
        let d = self.rank();
        let n = self.sweep_points();
        let mut idx = vec![0usize; d];
        let mut p = vec![0.0; d];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        loop {
            let mut zero = true;
            for k in 0..d {
                p[k] = self.domain_u[k] * (2.0 * idx[k] as f64 / (n - 1) as f64 - 1.0);
                if 2 * idx[k] + 1 != n {
                    zero = false;
                }
            }
            let v = self.lambda0_raw(&p);
            if !zero {
                lo = lo.min(v);
            }
            hi = hi.max(v);
            let mut k = 0;
            loop {
                if k == d {
                    return (lo, hi);
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn sweep(&self) -> Result<()> {
        let (lo, hi) = self.sweep_extremes();
        if !(lo > 0.0) {
            return Err(Error::InvalidModel(format!(
                "positivity sweep failed: lambda0 = {lo:.3e} at some omega != 0 in U"
            )));
        }
        if hi >= 0.25 {
            return Err(Error::InvalidModel(format!(
                "lambda0 reaches {hi:.4} >= 1/4 inside U; shrink domain_u"
            )));
        }
        Ok(())
    }

    /// Smallest sampled `λ₀` on the boundary of `U`.
    pub fn boundary_minimum(&self) -> f64 {
        let d = self.rank();
        let n: usize = match d {
            1 => 1,
            2 => 401,
            3 => 61,
            _ => 11,
        };
        let mut best = f64::INFINITY;
        let mut p = vec![0.0; d];
        for face in 0..d {
            for sign in [-1.0, 1.0] {
                let free = d - 1;
                let count = n.pow(free as u32);
                for flat in 0..count {
                    let mut r = flat;
                    let mut slot = 0;
                    for k in 0..d {
                        if k == face {
                            p[k] = sign * self.domain_u[k];
                            continue;
                        }
                        let i = r % n;
                        r /= n;
                        slot += 1;
                        p[k] = self.domain_u[k] * (2.0 * i as f64 / (n - 1).max(1) as f64 - 1.0);
                    }
                    debug_assert_eq!(slot, free);
                    best = best.min(self.lambda0_raw(&p));
                }
            }
        }
        best
    }
}

/// `max_{s ∈ {±1}^d} sᵀ G s`, or the absolute-row-sum bound for large `d`.
fn max_sign_form(gram: &SymMatrix) -> f64 {
    let d = gram.dim();
    if d > 16 {
        return gram.as_row_major().iter().map(|x| x.abs()).sum();
    }
    let mut best = 0.0f64;
    let mut s = vec![0.0; d];
    for mask in 0..(1u32 << d) {
        for (k, sk) in s.iter_mut().enumerate() {
            *sk = if mask >> k & 1 == 1 { -1.0 } else { 1.0 };
        }
        best = best.max(gram.quadratic_form(&s));
    }
    best
}
