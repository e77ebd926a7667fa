//! Characters of finite Abelian covers and the spectral measures of `λ₀`
//! on them.
//!
//! A cover with Galois group `Π Z/N_i` has characters at the rational torus
//! points `(a_1/N_1, …, a_d/N_d)`. Near the trivial character only the
//! `λ₀` branch lies below the gap, so the low spectrum is
//! `{λ₀(ω) : ω a character, λ₀(ω) ≤ ε}` and its normalized counting measure
//! converges to the pushforward of Lebesgue measure under `λ₀`, whose density
//! is written `x^{d/2−1} ζ̃(x)` with `ζ̃` bounded.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::laplace::invert_increasing;
use crate::quad::{integrate_1d, AdaptiveOptions, GaussLegendre};
use crate::spectral::{RadialProfile, SpectralModel};
use crate::sum::{pairwise_sum, CompensatedSum};
#[allow(unused_imports)]
use num_traits::Float;

/// Default cap on the number of characters in one lattice.
pub const DEFAULT_MAX_CHARACTERS: u64 = 1 << 28;
/// Characters per reduction block; blocks are summed in index order.
pub const BLOCK_SIZE: u64 = 1 << 14;

/// The character group `Π Z/N_i` of a finite Abelian cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterLattice {
    orders: Vec<u32>,
    size: u64,
}

impl CharacterLattice {
    pub fn new(orders: Vec<u32>) -> Result<Self> {
        Self::with_cap(orders, DEFAULT_MAX_CHARACTERS)
    }

    pub fn with_cap(orders: Vec<u32>, cap: u64) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::Domain("a lattice needs at least one order".into()));
        }
        if let Some(i) = orders.iter().position(|&n| n == 0) {
            return Err(Error::Domain(format!("order N_{} = 0 must be positive", i + 1)));
        }
        let requested = orders.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128));
        if requested > cap as u128 {
            return Err(Error::Size { requested, cap: cap as u128 });
        }
        Ok(Self { orders, size: requested as u64 })
    }

    /// `N = (n, …, n)` in dimension `d`.
    pub fn cubic(n: u32, d: usize) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn min_order(&self) -> u32 {
        self.orders.iter().copied().min().unwrap_or(0)
    }

    /// Centered representative in `[−1/2, 1/2)^d` of the character with flat
    /// index `index`; the first coordinate varies slowest.
    pub fn point(&self, index: u64, out: &mut [f64]) {
        let mut r = index;
        for (o, &n) in out.iter_mut().zip(&self.orders).rev() {
            let a = r % n as u64;
            r /= n as u64;
            *o = centered(a, n);
        }
    }

    pub fn block_count(&self) -> u64 {
        self.size.div_ceil(BLOCK_SIZE)
    }
}

fn centered(a: u64, n: u32) -> f64 {
    // 2a ≥ n means a/n ≥ 1/2
    if 2 * a >= n as u64 {
        (a as f64 - n as f64) / n as f64
    } else {
        a as f64 / n as f64
    }
}

/// All characters as centered torus points, in lexicographic index order.
pub fn enumerate_characters(lattice: &CharacterLattice) -> Vec<Vec<f64>> {
    let d = lattice.dim();
    (0..lattice.size())
        .map(|i| {
            let mut p = vec![0.0; d];
            lattice.point(i, &mut p);
            p
        })
        .collect()
}

/// Standard test functions on `[0, ε]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `1` on `[0, ε]`.
    One,
    /// `ε − x`, continuous and vanishing at the cut.
    Linear,
    /// `x` on `[0, ε]`.
    Identity,
    /// Smooth bump supported in `(0, ε)`.
    Bump,
}

impl TestFunction {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "one" => Some(Self::One),
            "linear" => Some(Self::Linear),
            "identity" => Some(Self::Identity),
            "bump" => Some(Self::Bump),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::One => "one",
            Self::Linear => "linear",
            Self::Identity => "identity",
            Self::Bump => "bump",
        }
    }

    pub fn eval(&self, x: f64, epsilon: f64) -> f64 {
        if !(0.0..=epsilon).contains(&x) {
            return 0.0;
        }
        match self {
            Self::One => 1.0,
            Self::Linear => epsilon - x,
            Self::Identity => x,
            Self::Bump => {
                let s = 2.0 * x / epsilon - 1.0;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
        }
    }
}

fn check_epsilon(model: &SpectralModel, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    if epsilon > model.gap_delta() {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} exceeds gap_delta = {}; higher branches would contribute",
            model.gap_delta()
        )));
    }
    let edge = model.boundary_minimum();
    if epsilon >= edge {
        return Err(Error::Domain(format!(
            "the sublevel set lambda0 <= {epsilon} reaches the boundary of U (boundary minimum {edge:.4e})"
        )));
    }
    Ok(())
}

/// Compensated partial sum of `f(λ₀(ω))` over the characters of block
/// `block` with `λ₀(ω) ≤ ε` (characters outside `U` are above the gap).
pub fn block_partial(
    model: &SpectralModel,
    lattice: &CharacterLattice,
    f: &dyn Fn(f64) -> f64,
    epsilon: f64,
    block: u64,
) -> CompensatedSum {
    let mut acc = CompensatedSum::new();
    let mut p = vec![0.0; lattice.dim()];
    let lo = block * BLOCK_SIZE;
    let hi = (lo + BLOCK_SIZE).min(lattice.size());
    for i in lo..hi {
        lattice.point(i, &mut p);
        if !model.contains(&p) {
            continue;
        }
        let x = model.lambda0_raw(&p);
        if x <= epsilon {
            acc.add(f(x));
        }
    }
    acc
}

/// Combines per-block partial sums (in block order) into the average.
pub fn combine_blocks(lattice: &CharacterLattice, blocks: &[CompensatedSum]) -> f64 {
    let mut total = CompensatedSum::new();
    for b in blocks {
        total.merge(b);
    }
    total.value() / lattice.size() as f64
}

/// `(1/|Gal|) Σ_{λ₀(ω) ≤ ε} f(λ₀(ω))`.
pub fn spectral_average(
    model: &SpectralModel,
    lattice: &CharacterLattice,
    f: &dyn Fn(f64) -> f64,
    epsilon: f64,
) -> Result<f64> {
    check_inputs(model, lattice, epsilon)?;
    let blocks: Vec<CompensatedSum> =
        (0..lattice.block_count()).map(|b| block_partial(model, lattice, f, epsilon, b)).collect();
    Ok(combine_blocks(lattice, &blocks))
}

/// Validates a lattice/ε pair before a sweep.
pub fn check_inputs(model: &SpectralModel, lattice: &CharacterLattice, epsilon: f64) -> Result<()> {
    if lattice.dim() != model.rank() {
        return Err(Error::Domain(format!(
            "lattice has dimension {}, model rank is {}",
            lattice.dim(),
            model.rank()
        )));
    }
    check_epsilon(model, epsilon)
}

/// The low spectrum of one cover below `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralHistogram {
    pub epsilon: f64,
    /// Eigenvalues `λ₀(ω) ≤ ε` in character order, each of weight `1/|Gal|`.
    pub values: Vec<f64>,
    pub total: u64,
    pub count: u64,
    pub mass: f64,
    pub mean: f64,
    pub second_moment: f64,
}

pub fn spectral_histogram(model: &SpectralModel, lattice: &CharacterLattice, epsilon: f64) -> Result<SpectralHistogram> {
    check_inputs(model, lattice, epsilon)?;
    let mut values = Vec::new();
    let mut p = vec![0.0; lattice.dim()];
    for i in 0..lattice.size() {
        lattice.point(i, &mut p);
        if model.contains(&p) {
            let x = model.lambda0_raw(&p);
            if x <= epsilon {
                values.push(x);
            }
        }
    }
    let n = lattice.size() as f64;
    let count = values.len() as u64;
    let mean = if count > 0 { pairwise_sum(&values) / count as f64 } else { 0.0 };
    let squares: Vec<f64> = values.iter().map(|x| x * x).collect();
    let second_moment = if count > 0 { pairwise_sum(&squares) / count as f64 } else { 0.0 };
    Ok(SpectralHistogram { epsilon, values, total: lattice.size(), count, mass: count as f64 / n, mean, second_moment })
}

/// `V_d`, the volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

/// `lim_{x→0} ζ̃(x) = (d/2)·V_d·s^{−d/2}/√det G` with `s = π/(g−1)`, the
/// same for every model since it only sees the Hessian.
pub fn small_x_limit(model: &SpectralModel) -> f64 {
    let d = model.rank() as f64;
    0.5 * d * unit_ball_volume(model.rank()) * model.quadratic_scale().powf(-0.5 * d) * model.sigma()
}

/// The density `x^{d/2−1} ζ̃(x)` of the pushforward of Lebesgue measure
/// under `λ₀`, sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub epsilon: f64,
    pub dim: usize,
    pub x: Vec<f64>,
    /// `ζ̃(x)`, bounded.
    pub zeta: Vec<f64>,
    /// Estimated absolute error of each `ζ̃(x)` (0 for closed forms).
    pub zeta_error: Vec<f64>,
    /// `x^{d/2−1} ζ̃(x)`.
    pub density: Vec<f64>,
    pub exact: bool,
}

/// Evaluates `ζ̃` either in closed form (radial models) or by slicing the
/// level sets along rays in whitened coordinates.
pub struct LevelSetDensity<'a> {
    model: &'a SpectralModel,
    epsilon: f64,
    kind: DensityKind,
}

enum DensityKind {
    Radial(RadialProfile),
    Rays { directions: Vec<(Vec<f64>, f64)> },
}

/// Most ray directions tried per level set in the sliced evaluator.
const MAX_ANGULAR_NODES: usize = 1 << 12;
const SLICE_REL_TOL: f64 = 1e-8;

impl<'a> LevelSetDensity<'a> {
    pub fn new(model: &'a SpectralModel, epsilon: f64) -> Result<Self> {
        check_epsilon(model, epsilon)?;
        let kind = match model.radial_profile() {
            Some(profile) => DensityKind::Radial(profile),
            None => DensityKind::Rays { directions: Vec::new() },
        };
        let mut density = Self { model, epsilon, kind };
        if let DensityKind::Rays { .. } = density.kind {
            density.refine_directions()?;
        }
        Ok(density)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, DensityKind::Radial(_))
    }

    /// `ζ̃(x)` for `0 < x ≤ ε`.
    pub fn zeta(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x <= self.epsilon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("x = {x} outside (0, {}]", self.epsilon)));
        }
        let d = self.model.rank();
        match &self.kind {
            DensityKind::Radial(profile) => {
                let q = profile
                    .inverse(x)
                    .ok_or_else(|| Error::Domain(format!("lambda0 profile does not reach {x}")))?;
                let half_d = 0.5 * d as f64;
                Ok(half_d * unit_ball_volume(d) * self.model.sigma() * (q / x).powf(half_d - 1.0) / profile.derivative(q))
            }
            DensityKind::Rays { directions } => self.ray_sum(directions, x),
        }
    }

    /// ρ(x) = (1/√det G) ∮ r^{d−1}/∂_r λ₀ du over unit directions `u` in the
    /// whitened frame where `ωᵀGω = |θ|²`; divided by `x^{d/2−1}`.
    fn ray_sum(&self, directions: &[(Vec<f64>, f64)], x: f64) -> Result<f64> {
        let d = self.model.rank();
        let mut acc = CompensatedSum::new();
        let mut grad = vec![0.0; d];
        let mut p = vec![0.0; d];
        for (e, weight) in directions {
            let g = |r: f64| {
                let w: Vec<f64> = e.iter().map(|c| c * r).collect();
                self.model.lambda0_raw(&w)
            };
            let r0 = (x / self.model.quadratic_scale()).sqrt();
            let r = invert_increasing(
                |r| g(r),
                |r| {
                    let w: Vec<f64> = e.iter().map(|c| c * r).collect();
                    let mut gr = vec![0.0; d];
                    self.model.gradient(&w, &mut gr);
                    gr.iter().zip(e).map(|(a, b)| a * b).sum()
                },
                x,
                r0,
            );
            if !r.is_finite() {
                return Err(Error::LevelSet(format!("no level-set crossing at x = {x} along a ray")));
            }
            for (pi, ei) in p.iter_mut().zip(e) {
                *pi = ei * r;
            }
            self.model.gradient(&p, &mut grad);
            let dr: f64 = grad.iter().zip(e).map(|(a, b)| a * b).sum();
            if !(dr > 0.0) {
                return Err(Error::LevelSet(format!("level set at x = {x} is not star-shaped about 0")));
            }
            acc.add(weight * r.powi(d as i32 - 1) / dr);
        }
        Ok(acc.value() * self.model.sigma() / x.powf(0.5 * d as f64 - 1.0))
    }

    /// Doubles the angular resolution until `ζ̃` at three probe levels
    /// agrees between consecutive resolutions.
    fn refine_directions(&mut self) -> Result<()> {
        let d = self.model.rank();
        if d > 3 {
            return Err(Error::UnsupportedClass(format!(
                "level-set slicing of a non-radial model is implemented for d <= 3, got d = {d}"
            )));
        }
        let probes = [self.epsilon * 1e-3, self.epsilon * 0.3, self.epsilon];
        let chol = self
            .model
            .gram()
            .cholesky()
            .ok_or_else(|| Error::InvalidModel("gram not positive definite".into()))?;
        let mut n = 16;
        let mut previous: Option<Vec<f64>> = None;
        while n <= MAX_ANGULAR_NODES {
            let dirs = sphere_rule(d, n, |u, out| chol.whiten(u, out));
            let values: Vec<f64> = probes.iter().map(|&x| self.ray_sum(&dirs, x)).collect::<Result<_>>()?;
            if let Some(prev) = &previous {
                let ok = prev.iter().zip(&values).all(|(a, b)| (a - b).abs() <= SLICE_REL_TOL * b.abs());
                if ok {
                    self.kind = DensityKind::Rays { directions: dirs };
                    return Ok(());
                }
            }
            previous = Some(values);
            n *= 2;
        }
        Err(Error::LevelSet("level-set slices did not converge in the angular resolution".into()))
    }
}

/// Directions `R^{−T} u` with cubature weights over the unit sphere `u ∈ S^{d−1}`.
fn sphere_rule(d: usize, n: usize, whiten: impl Fn(&[f64], &mut [f64])) -> Vec<(Vec<f64>, f64)> {
    let mut raw: Vec<(Vec<f64>, f64)> = Vec::new();
    match d {
        1 => {
            raw.push((vec![1.0], 1.0));
            raw.push((vec![-1.0], 1.0));
        }
        2 => {
            // periodic trapezoid in the angle
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                raw.push((vec![t.cos(), t.sin()], 2.0 * PI / n as f64));
            }
        }
        _ => {
            // Gauss-Legendre in cos(polar angle) times trapezoid in azimuth
            let gl = GaussLegendre::new(n / 2);
            for (z, wz) in gl.nodes().iter().zip(gl.weights()) {
                let s = (1.0 - z * z).sqrt();
                for k in 0..n {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    raw.push((vec![s * t.cos(), s * t.sin(), *z], wz * 2.0 * PI / n as f64));
                }
            }
        }
    }
    raw.into_iter()
        .map(|(u, w)| {
            let mut e = vec![0.0; d];
            whiten(&u, &mut e);
            (e, w)
        })
        .collect()
}

/// Tabulates `x^{d/2−1} ζ̃(x)` on `grid ⊂ (0, ε]`.
pub fn limit_density(model: &SpectralModel, epsilon: f64, grid: &[f64]) -> Result<DensityTable> {
    let density = LevelSetDensity::new(model, epsilon)?;
    let d = model.rank();
    let mut zeta = Vec::with_capacity(grid.len());
    for &x in grid {
        zeta.push(density.zeta(x)?);
    }
    let zeta_error = if density.is_exact() {
        vec![0.0; grid.len()]
    } else {
        zeta.iter().map(|z| SLICE_REL_TOL * z.abs()).collect()
    };
    let dens = grid.iter().zip(&zeta).map(|(x, z)| x.powf(0.5 * d as f64 - 1.0) * z).collect();
    Ok(DensityTable {
        epsilon,
        dim: d,
        x: grid.to_vec(),
        zeta,
        zeta_error,
        density: dens,
        exact: density.is_exact(),
    })
}

/// `∫_0^ε f(x) x^{d/2−1} ζ̃(x) dx`, integrated in `s = √x` so the integrand
/// `2 f(s²) ζ̃(s²) s^{d−1}` is smooth at 0.
pub fn limit_integral(model: &SpectralModel, f: &dyn Fn(f64) -> f64, epsilon: f64) -> Result<f64> {
    let density = LevelSetDensity::new(model, epsilon)?;
    let d = model.rank() as i32;
    let opts = AdaptiveOptions { abs_tol: 1e-15, rel_tol: 1e-11, max_refinements: 20_000, nodes_per_axis: 10 };
    let top = epsilon.sqrt();
    let mut failure = None;
    let est = integrate_1d(0.0, top, &[], &opts, |s| {
        if s == 0.0 {
            return 0.0;
        }
        match density.zeta(s * s) {
            Ok(z) => 2.0 * f(s * s) * z * s.powi(d - 1),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est.value)
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub orders: Vec<u32>,
    pub min_n: u32,
    pub empirical: f64,
    pub limit: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<StudyRow>,
    /// Least-squares `p` in `err ~ C·(min N)^{−p}` over rows with nonzero error.
    pub decay_exponent: Option<f64>,
}

impl ConvergenceReport {
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].abs_err <= w[0].abs_err)
    }
}

/// Compares `spectral_average` with the limit integral along a sequence of covers.
pub fn convergence_study(
    model: &SpectralModel,
    f: &dyn Fn(f64) -> f64,
    epsilon: f64,
    order_sequence: &[Vec<u32>],
) -> Result<ConvergenceReport> {
    let lattices: Vec<CharacterLattice> =
        order_sequence.iter().map(|o| CharacterLattice::new(o.clone())).collect::<Result<_>>()?;
    study_with(model, f, epsilon, &lattices, |lattice| spectral_average(model, lattice, f, epsilon))
}

/// [`convergence_study`] with a caller-supplied evaluator of the averages
/// (used to parallelize the sweeps).
pub fn study_with(
    model: &SpectralModel,
    f: &dyn Fn(f64) -> f64,
    epsilon: f64,
    lattices: &[CharacterLattice],
    mut average: impl FnMut(&CharacterLattice) -> Result<f64>,
) -> Result<ConvergenceReport> {
    if lattices.windows(2).any(|w| w[1].min_order() <= w[0].min_order()) {
        return Err(Error::Domain("order sequence must be strictly increasing in min N".into()));
    }
    let limit = limit_integral(model, f, epsilon)?;
    let mut rows = Vec::with_capacity(lattices.len());
    for lattice in lattices {
        let empirical = average(lattice)?;
        rows.push(StudyRow {
            orders: lattice.orders().to_vec(),
            min_n: lattice.min_order(),
            empirical,
            limit,
            abs_err: (empirical - limit).abs(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.abs_err > 0.0)
        .map(|r| ((r.min_n as f64).ln(), r.abs_err.ln()))
        .collect();
    let decay_exponent = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        -sxy / sxx
    });
    Ok(ConvergenceReport { rows, decay_exponent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_representatives() {
        let l = CharacterLattice::new(vec![2]).unwrap();
        assert_eq!(enumerate_characters(&l), vec![vec![0.0], vec![-0.5]]);
        let l = CharacterLattice::new(vec![5]).unwrap();
        let pts: Vec<f64> = enumerate_characters(&l).into_iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 0.2, 0.4, -0.4, -0.2]);
    }

    #[test]
    fn lexicographic_order() {
        let l = CharacterLattice::new(vec![2, 3]).unwrap();
        let pts = enumerate_characters(&l);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![0.0, 1.0 / 3.0]);
        assert_eq!(pts[3], vec![-0.5, 0.0]);
    }

    #[test]
    fn size_guard() {
        assert!(matches!(CharacterLattice::with_cap(vec![1000, 1000], 10_000), Err(Error::Size { .. })));
        assert!(matches!(CharacterLattice::new(vec![0, 3]), Err(Error::Domain(m)) if m.contains("N_1")));
        assert!(CharacterLattice::new(vec![u32::MAX, u32::MAX, u32::MAX]).is_err());
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn bump_is_supported_inside() {
        let f = TestFunction::Bump;
        assert_eq!(f.eval(0.0, 0.1), 0.0);
        assert_eq!(f.eval(0.1, 0.1), 0.0);
        assert!((f.eval(0.05, 0.1) - 1.0).abs() < 1e-15);
    }
}
