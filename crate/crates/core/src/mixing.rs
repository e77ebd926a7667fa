//! The model correlation integral `I(T) = ∫_U A(ω) e^{−T(1−ν₀(ω))} dω` in
//! `T = log t`, and the leading constant of its `T^{−j−d/2}` expansion.
//!
//! Everything is parameterized by `T`; `t = e^T` is never formed.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::laplace::{fit_expansion, ExpansionCoefficients, PhaseProblem, RadialFn, ScalarField};
use crate::quad::{dyadic_breakpoints, integrate_tensor, AdaptiveOptions, Estimate};
use crate::spectral::SpectralModel;

/// Relative tolerance of [`correlation_integral`].
pub const CORRELATION_REL_TOL: f64 = 1e-12;

/// `1 − ν = 4λ/(1 + √(1 − 4λ))`, free of cancellation for small `λ`.
pub fn one_minus_nu(lambda: f64) -> f64 {
    4.0 * lambda / (1.0 + (1.0 - 4.0 * lambda).sqrt())
}

/// A spectral model with the amplitude `A(ω)` standing for `A_ω(f₁, f₂)`.
#[derive(Clone)]
pub struct MixingProblem {
    model: SpectralModel,
    amplitude: ScalarField,
    vol_product: f64,
    constant: bool,
}

impl fmt::Debug for MixingProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixingProblem")
            .field("model", &self.model)
            .field("vol_product", &self.vol_product)
            .field("constant", &self.constant)
            .finish()
    }
}

impl MixingProblem {
    /// The constant amplitude `A ≡ vol(f₁)·vol(f̄₂)`.
    pub fn constant(model: SpectralModel, vol_product: f64) -> Result<Self> {
        if !vol_product.is_finite() {
            return Err(Error::Domain(format!("vol_product = {vol_product} must be finite")));
        }
        Ok(Self { model, amplitude: Arc::new(move |_: &[f64]| vol_product), vol_product, constant: true })
    }

    /// A smooth amplitude field; `vol_product` is taken as `A(0)`.
    pub fn with_amplitude(model: SpectralModel, amplitude: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let zero = alloc::vec![0.0; model.rank()];
        let a0 = amplitude(&zero);
        if !a0.is_finite() {
            return Err(Error::Domain("amplitude is not finite at 0".into()));
        }
        Ok(Self { model, amplitude: Arc::new(amplitude), vol_product: a0, constant: false })
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn vol_product(&self) -> f64 {
        self.vol_product
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn amplitude(&self, omega: &[f64]) -> f64 {
        (self.amplitude)(omega)
    }

    /// The same integral as a Laplace problem: `v = ν₀ − 1`, `H = 2·D²λ₀(0)`.
    pub fn induced_phase_problem(&self) -> Result<PhaseProblem> {
        let model = self.model.clone();
        let h = model.hessian_mixing();
        let widths = model.domain_u().to_vec();
        let problem = if let Some(profile) = model.radial_profile() {
            // λ₀ = F(ωᵀGω) and ωᵀGω = q/(2s) with q = ½ωᵀHω, s = π/(g−1)
            let s = model.quadratic_scale();
            let lam = move |q: f64| profile.eval(q / (2.0 * s));
            let dlam = move |q: f64| profile.derivative(q / (2.0 * s)) / (2.0 * s);
            let inverse: Option<RadialFn> = (profile.curvature == 0.0).then(|| {
                // −φ(q) = 1 − √(1 − 2q) inverts to q = x − x²/2
                Arc::new(|x: f64| x - 0.5 * x * x) as RadialFn
            });
            PhaseProblem::radial(
                h,
                move |q| -one_minus_nu(lam(q)),
                move |q| -2.0 * dlam(q) / (1.0 - 4.0 * lam(q)).sqrt(),
                inverse,
                widths,
            )?
        } else if model.rank() == 1 {
            let m1 = model.clone();
            let m2 = model.clone();
            PhaseProblem::one_dimensional(
                move |w| -one_minus_nu(m1.lambda0_raw(&[w])),
                move |w| {
                    let mut g = [0.0];
                    m2.gradient(&[w], &mut g);
                    -2.0 * g[0] / (1.0 - 4.0 * m2.lambda0_raw(&[w])).sqrt()
                },
                h.get(0, 0),
                widths[0],
            )?
        } else {
            let m = model.clone();
            PhaseProblem::general(move |w: &[f64]| -one_minus_nu(m.lambda0_raw(w)), h, widths)?
        };
        let a = self.amplitude.clone();
        Ok(problem.with_amplitude(move |w: &[f64]| a(w)))
    }
}

/// `∫_U A(ω) e^{−T(1−ν₀(ω))} dω`, with panels refined dyadically toward 0 at
/// the scale `1/√(max(T,1)·H_ii)`.
pub fn correlation_integral(problem: &MixingProblem, t_log: f64) -> Result<Estimate<f64>> {
    if !(t_log >= 0.0 && t_log.is_finite()) {
        return Err(Error::Domain(format!("log t = {t_log} must be finite and >= 0")));
    }
    let model = &problem.model;
    let h = model.hessian_mixing();
    let breakpoints: Vec<Vec<f64>> = model
        .domain_u()
        .iter()
        .enumerate()
        .map(|(i, &w)| dyadic_breakpoints(-w, w, 1.0 / (t_log.max(1.0) * h.get(i, i)).sqrt()))
        .collect();
    let opts = AdaptiveOptions { abs_tol: 0.0, rel_tol: CORRELATION_REL_TOL, max_refinements: 200_000, nodes_per_axis: 12 };
    integrate_tensor(&breakpoints, &opts, |w| {
        let a = (problem.amplitude)(w);
        if a == 0.0 {
            return 0.0;
        }
        a * (-t_log * one_minus_nu(model.lambda0_raw(w))).exp()
    })
}

/// `((g−1)/2)^{d/2}·σ·a₀`.
pub fn leading_constant(model: &SpectralModel, a0: f64) -> f64 {
    let g = model.genus() as f64;
    (0.5 * (g - 1.0)).powf(0.5 * model.rank() as f64) * model.sigma() * a0
}

/// Fitted expansion and its comparison with the closed-form leading term.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremAReport {
    pub coefficients: ExpansionCoefficients,
    pub samples: Vec<(f64, f64)>,
    pub c0_fit: f64,
    pub c0_closed_form: f64,
    /// `|ĉ₀ − c₀|/|c₀|`; 0 when both vanish.
    pub rel_dev: f64,
}

/// Samples `correlation_integral` on `t_log_grid` and fits the expansion.
pub fn theorem_a_coefficients(problem: &MixingProblem, t_log_grid: &[f64], order_n: usize) -> Result<TheoremAReport> {
    let samples = t_log_grid
        .iter()
        .map(|&t| correlation_integral(problem, t).map(|e| (t, e.value)))
        .collect::<Result<Vec<_>>>()?;
    theorem_a_from_samples(problem, samples, order_n)
}

/// [`theorem_a_coefficients`] on precomputed samples.
pub fn theorem_a_from_samples(problem: &MixingProblem, samples: Vec<(f64, f64)>, order_n: usize) -> Result<TheoremAReport> {
    let coefficients = fit_expansion(&samples, problem.model.rank(), order_n)?;
    let c0_fit = coefficients.c[0];
    let c0_closed_form = leading_constant(&problem.model, problem.vol_product);
    let rel_dev = if c0_closed_form == 0.0 {
        if c0_fit == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        ((c0_fit - c0_closed_form) / c0_closed_form).abs()
    };
    Ok(TheoremAReport { coefficients, samples, c0_fit, c0_closed_form, rel_dev })
}
