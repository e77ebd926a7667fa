//! JSON configuration: spectral models, custom Laplace problems and
//! polynomial amplitudes.

use std::path::Path;
use std::sync::Arc;

use hmix_core::laplace::RadialFn;
use hmix_core::spectral::Monomial;
use hmix_core::{Perturbation, PhaseProblem, SpectralModel, SymMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// On-disk form of a [`SpectralModel`].
///
/// ```json
/// {"genus": 2, "rank_d": 1, "gram": [1.0],
///  "perturbation": {"preset": "quartic", "coef": 3.0},
///  "gap_delta": 0.1, "domain_u": [0.2]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub genus: u32,
    pub rank_d: usize,
    /// Row-major `d × d` Gram matrix.
    pub gram: Vec<f64>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    pub gap_delta: f64,
    #[serde(default)]
    pub domain_u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    #[default]
    None,
    /// `coef·Σ ω_i⁴`
    Quartic { coef: f64 },
    /// `coef·(ωᵀGω)²`
    RadialQuartic { coef: f64 },
    Polynomial { terms: Vec<MonomialConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialConfig {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

impl From<&MonomialConfig> for Monomial {
    fn from(m: &MonomialConfig) -> Self {
        Monomial { coef: m.coef, exponents: m.exponents.clone() }
    }
}

impl ModelConfig {
    /// Builds the model; every spectral-model invariant runs here.
    pub fn build(&self) -> Result<SpectralModel, CliError> {
        let d = self.rank_d;
        if d == 0 || self.gram.len() != d * d {
            return Err(CliError::Config(format!(
                "gram has {} entries but rank_d = {d} needs {}",
                self.gram.len(),
                d * d
            )));
        }
        let gram = SymMatrix::from_row_major(d, self.gram.clone()).map_err(CliError::invariant)?;
        let perturbation = match &self.perturbation {
            PerturbationConfig::None => Perturbation::None,
            PerturbationConfig::Quartic { coef } => Perturbation::Quartic { coef: *coef },
            PerturbationConfig::RadialQuartic { coef } => Perturbation::RadialQuartic { coef: *coef },
            PerturbationConfig::Polynomial { terms } => Perturbation::Polynomial { terms: terms.iter().map(Into::into).collect() },
        };
        SpectralModel::new(self.genus, gram, perturbation, self.gap_delta, self.domain_u.clone()).map_err(CliError::invariant)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{what} {} does not match the schema: {e}", path.display())))
}

pub fn read_model_config(path: &Path) -> Result<ModelConfig, CliError> {
    read_json(path, "model")
}

/// Parses and validates a model file.
pub fn load_model(path: &Path) -> Result<SpectralModel, CliError> {
    read_model_config(path)?.build()
}

/// A polynomial `Σ coef·Π ω_i^{e_i}`, used as a mixing amplitude or a
/// Laplace amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialConfig {
    pub terms: Vec<MonomialConfig>,
}

impl PolynomialConfig {
    pub fn check_dim(&self, d: usize) -> Result<(), CliError> {
        match self.terms.iter().find(|t| t.exponents.len() != d) {
            Some(t) => Err(CliError::Config(format!("amplitude term has {} exponents, expected {d}", t.exponents.len()))),
            None => Ok(()),
        }
    }

    pub fn into_fn(self) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
        move |w: &[f64]| {
            self.terms
                .iter()
                .map(|t| t.coef * t.exponents.iter().zip(w).map(|(&e, &x)| x.powi(e as i32)).product::<f64>())
                .sum()
        }
    }
}

/// Mixing amplitude: `const:<value>` or `json:<path>` holding a [`PolynomialConfig`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeSpec {
    Const(f64),
    Polynomial(PolynomialConfig),
}

impl AmplitudeSpec {
    pub fn parse(arg: &str) -> Result<Self, CliError> {
        if let Some(v) = arg.strip_prefix("const:") {
            let value: f64 = v.trim().parse().map_err(|_| CliError::Config(format!("amplitude constant '{v}' is not a number")))?;
            return Ok(Self::Const(value));
        }
        if let Some(p) = arg.strip_prefix("json:") {
            return Ok(Self::Polynomial(read_json(Path::new(p), "amplitude")?));
        }
        Err(CliError::Config(format!("amplitude '{arg}' must be const:<value> or json:<path>")))
    }
}

/// Custom Laplace problems. Phases are polynomials so they can live in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LaplaceConfig {
    /// `v = −½ξᵀHξ`.
    Quadratic {
        hessian: Vec<f64>,
        half_widths: Vec<f64>,
        #[serde(default)]
        amplitude: Option<PolynomialConfig>,
    },
    /// `v = φ(½ξᵀHξ)` with `φ(q) = −q + Σ_k phi[k−2]·q^k`.
    RadialPolynomial {
        hessian: Vec<f64>,
        phi: Vec<f64>,
        half_widths: Vec<f64>,
        #[serde(default)]
        amplitude: Option<PolynomialConfig>,
    },
    /// `v(ξ) = Σ_k coefs[k−2]·ξ^k` with `coefs[0] < 0`.
    Polynomial1d {
        coefs: Vec<f64>,
        half_width: f64,
        #[serde(default)]
        amplitude: Option<PolynomialConfig>,
    },
}

fn square(entries: &[f64]) -> Result<SymMatrix, CliError> {
    let d = (entries.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != entries.len() {
        return Err(CliError::Config(format!("hessian needs d*d entries, got {}", entries.len())));
    }
    SymMatrix::from_row_major(d, entries.to_vec()).map_err(CliError::invariant)
}

// Σ c_k x^{k+offset} and its derivative, as closures
fn power_series(coefs: Vec<f64>, offset: i32) -> (impl Fn(f64) -> f64 + Clone, impl Fn(f64) -> f64 + Clone) {
    let c = Arc::new(coefs);
    let c2 = c.clone();
    let value = move |x: f64| c.iter().enumerate().map(|(i, a)| a * x.powi(i as i32 + offset)).sum::<f64>();
    let deriv = move |x: f64| {
        c2.iter()
            .enumerate()
            .map(|(i, a)| {
                let k = i as i32 + offset;
                a * k as f64 * x.powi(k - 1)
            })
            .sum::<f64>()
    };
    (value, deriv)
}

impl LaplaceConfig {
    pub fn build(&self) -> Result<PhaseProblem, CliError> {
        let (problem, amplitude) = match self {
            Self::Quadratic { hessian, half_widths, amplitude } => {
                (PhaseProblem::quadratic(square(hessian)?, half_widths.clone()), amplitude)
            }
            Self::RadialPolynomial { hessian, phi, half_widths, amplitude } => {
                let (higher, dhigher) = power_series(phi.clone(), 2);
                (
                    PhaseProblem::radial(
                        square(hessian)?,
                        move |q| -q + higher(q),
                        move |q| -1.0 + dhigher(q),
                        None::<RadialFn>,
                        half_widths.clone(),
                    ),
                    amplitude,
                )
            }
            Self::Polynomial1d { coefs, half_width, amplitude } => {
                let curvature = -2.0 * coefs.first().copied().unwrap_or(0.0);
                if !(curvature > 0.0) {
                    return Err(CliError::Config("polynomial_1d needs a negative quadratic coefficient".into()));
                }
                let (v, dv) = power_series(coefs.clone(), 2);
                (PhaseProblem::one_dimensional(v, dv, curvature, *half_width), amplitude)
            }
        };
        let problem = problem.map_err(CliError::invariant)?;
        match amplitude {
            Some(a) => {
                a.check_dim(problem.dim())?;
                Ok(problem.with_amplitude(a.clone().into_fn()))
            }
            None => Ok(problem),
        }
    }
}

pub fn load_laplace_problem(path: &Path) -> Result<(LaplaceConfig, PhaseProblem), CliError> {
    let cfg: LaplaceConfig = read_json(path, "laplace problem")?;
    let problem = cfg.build()?;
    Ok((cfg, problem))
}

/// `ln t` for a decimal literal `t`, computed from mantissa and exponent so
/// that `t` itself is never formed (`1e4343` is fine).
pub fn log_of_decimal(s: &str) -> Result<f64, CliError> {
    let bad = || CliError::Config(format!("--t '{s}' is not a decimal number >= 1"));
    let s = s.trim();
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i64>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let m: f64 = mantissa.parse().map_err(|_| bad())?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(bad());
    }
    let log_t = m.ln() + exponent as f64 * std::f64::consts::LN_10;
    if !(log_t >= -1e-15) {
        return Err(bad());
    }
    Ok(log_t.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_logs() {
        assert_eq!(log_of_decimal("1").unwrap(), 0.0);
        assert!((log_of_decimal("1e4343").unwrap() - 4343.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!((log_of_decimal("2.5E3").unwrap() - 2500f64.ln()).abs() < 1e-12);
        assert!(log_of_decimal("0.5").is_err());
        assert!(log_of_decimal("-3").is_err());
        assert!(log_of_decimal("abc").is_err());
    }

    #[test]
    fn model_schema() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"genus":2,"rank_d":1,"gram":[1],"gap_delta":0.1}"#).unwrap();
        assert_eq!(cfg.perturbation, PerturbationConfig::None);
        assert_eq!(cfg.build().unwrap().rank(), 1);
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"genus":2,"rank_d":1,"gram":[1],"gap_delta":0.1,"perturbation":{"preset":"quartic","coef":2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.perturbation, PerturbationConfig::Quartic { coef: 2.0 });
        let bad = ModelConfig { rank_d: 2, ..cfg };
        assert!(bad.build().unwrap_err().to_string().contains("rank_d"));
    }
}
