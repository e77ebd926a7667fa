//! The matrix-coefficient ODE.
//!
//! `y(t) = ⟨u_t e_n, e_m⟩` obeys the Volterra relation
//! `(t³+4t) y'(t) = ∫₀ᵗ h(s) ds` with
//! `h = −4λ s y + 2i(m+n) s y' + i(m+n) y + (m−n)² y / s`, and equivalently the
//! Euler equation `t²y'' + 3ty' + 4λy = f(t)` with
//! `f = −4y'' − 4y'/t + 2i(m+n)y' + i(m+n)y/t + (m−n)²y/t²`.
//!
//! The relation is integrated in `u = ln t` on the state `(y, J)` with
//! `J = (t³+4t)y'`, where it reads
//!
//! ```text
//! dy/du = J / (t² + 4)
//! dJ/du = −4λt²y + 2i(m+n) t J/(t²+4) + i(m+n) t y + (m−n)² y
//! ```
//!
//! and has no singularity. The solution regular at `t = 0` is a power series
//! `t^k Σ a_j t^j`, `k = |m−n|/2`, with radius of convergence 2; it supplies
//! the start values and the forcing near 0.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::quad::{integrate_1d, AdaptiveOptions, Estimate, GaussLegendre};
use crate::spectral::{lambda_of_nu, nu_of_lambda};
use crate::sum::ComplexSum;
#[allow(unused_imports)]
use num_traits::Float;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const SERIES_TERMS: usize = 72;
/// Default bound on the per-step Milne error estimate.
pub const DEFAULT_LOCAL_TOLERANCE: f64 = 1e-10;
/// Master relation residual above which a trajectory is rejected.
pub const CONSISTENCY_LIMIT: f64 = 1e-6;

/// A pair of `K`-weights `(n, m)`; both even.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePair {
    n: i64,
    m: i64,
}

impl ModePair {
    pub fn new(n: i64, m: i64) -> Result<Self> {
        if n % 2 != 0 || m % 2 != 0 {
            return Err(Error::Domain(format!("mode indices must be even, got n={n}, m={m}")));
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    fn sum(&self) -> f64 {
        (self.n + self.m) as f64
    }

    fn diff_sq(&self) -> f64 {
        let d = (self.m - self.n) as f64;
        d * d
    }

    /// Leading exponent `k = |m−n|/2` of the solution regular at 0.
    pub fn frobenius_exponent(&self) -> usize {
        ((self.m - self.n).unsigned_abs() / 2) as usize
    }
}

/// Power series `y = t^k Σ a_j t^j` of the solution regular at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrobeniusSeries {
    k: usize,
    coeffs: Vec<Complex64>,
    range: f64,
}

impl FrobeniusSeries {
    /// Series with leading coefficient `amplitude`: `y(0)` when `m = n`,
    /// otherwise the coefficient of `t^k` (the regular solution vanishes at 0).
    pub fn new(mode: ModePair, lambda: f64, amplitude: Complex64) -> Self {
        let k = mode.frobenius_exponent();
        let s = I * mode.sum();
        let kf = k as f64;
        let mut a = vec![ZERO; SERIES_TERMS];
        a[0] = amplitude;
        for j in 1..SERIES_TERMS {
            let q = j as f64 + kf;
            let mut num = s * (2.0 * q - 1.0) * a[j - 1];
            if j >= 2 {
                num -= ((q - 2.0) * q + 4.0 * lambda) * a[j - 2];
            }
            a[j] = num / (4.0 * j as f64 * (j as f64 + 2.0 * kf));
        }
        let range = truncation_range(&a);
        Self { k, coeffs: a, range }
    }

    pub fn exponent(&self) -> usize {
        self.k
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Largest `t ≤ 1/4` at which the truncated tail is below roundoff.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// `(y(t), y'(t))`.
    pub fn eval(&self, t: f64) -> (Complex64, Complex64) {
        let mut p = ZERO;
        let mut dp = ZERO;
        for (j, &c) in self.coeffs.iter().enumerate().rev() {
            p = p * t + c;
            if j > 0 {
                dp = dp * t + c * j as f64;
            }
        }
        // y = t^k p, y' = k t^{k-1} p + t^k p'
        let tk = t.powi(self.k as i32);
        let y = tk * p;
        let yp = if self.k == 0 {
            dp
        } else {
            (self.k as f64) * t.powi(self.k as i32 - 1) * p + tk * dp
        };
        (y, yp)
    }

    /// `y(0)` and `y'(0)`.
    pub fn at_zero(&self) -> (Complex64, Complex64) {
        match self.k {
            0 => (self.coeffs[0], self.coeffs[1]),
            1 => (ZERO, self.coeffs[0]),
            _ => (ZERO, ZERO),
        }
    }

    /// Coefficients `F_j` with `f(t) = t^k Σ F_j t^j`. The `t^{k−2}` and
    /// `t^{k−1}` terms of `f` cancel identically.
    pub fn forcing_coefficients(&self, mode: ModePair) -> Vec<Complex64> {
        let k = self.k as f64;
        let s = I * mode.sum();
        let a = &self.coeffs;
        (0..a.len() - 2)
            .map(|j| {
                let q1 = k + j as f64 + 1.0;
                let q2 = k + j as f64 + 2.0;
                4.0 * (k * k - q2 * q2) * a[j + 2] + s * (2.0 * q1 + 1.0) * a[j + 1]
            })
            .collect()
    }
}

fn truncation_range(a: &[Complex64]) -> f64 {
    let mut r: f64 = 0.25;
    for _ in 0..40 {
        let terms: Vec<f64> = a.iter().enumerate().map(|(j, c)| c.norm() * r.powi(j as i32)).collect();
        let head = terms.iter().fold(0.0f64, |m, &v| m.max(v));
        let tail = terms[terms.len() - 8..].iter().fold(0.0f64, |m, &v| m.max(v));
        if tail <= 1e-18 * head || head == 0.0 {
            return r;
        }
        r *= 0.5;
    }
    r
}

/// A grid `0, t_start, …, t_max` uniform in `ln t` after the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_max: f64,
    steps_per_decade: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, steps_per_decade: usize) -> Result<Self> {
        Self::with_start(1e-2, t_max, steps_per_decade)
    }

    pub fn with_start(t_start: f64, t_max: f64, steps_per_decade: usize) -> Result<Self> {
        if !(t_start > 0.0 && t_start.is_finite() && t_max.is_finite()) || t_max <= t_start {
            return Err(Error::Grid(format!("need 0 < t_start < t_max, got {t_start} and {t_max}")));
        }
        if steps_per_decade < 4 {
            return Err(Error::Grid(format!("steps per decade must be at least 4, got {steps_per_decade}")));
        }
        Ok(Self { t_start, t_max, steps_per_decade })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn steps_per_decade(&self) -> usize {
        self.steps_per_decade
    }

    fn intervals(&self) -> usize {
        ((self.t_max / self.t_start).log10() * self.steps_per_decade as f64).ceil().max(1.0) as usize
    }

    /// Step in `u = ln t`; at most `ln 10 / steps_per_decade`.
    pub fn log_step(&self) -> f64 {
        (self.t_max / self.t_start).ln() / self.intervals() as f64
    }

    /// The grid points, starting with `0` and ending exactly at `t_max`.
    pub fn points(&self) -> Vec<f64> {
        let k = self.intervals();
        let h = self.log_step();
        let mut pts = Vec::with_capacity(k + 2);
        pts.push(0.0);
        for i in 0..k {
            pts.push(self.t_start * (i as f64 * h).exp());
        }
        pts.push(self.t_max);
        pts
    }
}

/// Parameters a trajectory was computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMeta {
    pub lambda: f64,
    pub nu: f64,
    pub mode: Option<ModePair>,
}

impl TrajectoryMeta {
    pub fn new(lambda: f64, mode: Option<ModePair>) -> Result<Self> {
        Ok(Self { lambda, nu: nu_of_lambda(lambda)?, mode })
    }
}

/// Samples of `y` and `y'` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    y: Vec<Complex64>,
    y_prime: Vec<Complex64>,
    meta: TrajectoryMeta,
    series: Option<FrobeniusSeries>,
}

impl Trajectory {
    pub fn from_samples(
        grid: Vec<f64>,
        y: Vec<Complex64>,
        y_prime: Vec<Complex64>,
        meta: TrajectoryMeta,
    ) -> Result<Self> {
        if grid.is_empty() || grid.len() != y.len() || grid.len() != y_prime.len() {
            return Err(Error::Grid(format!(
                "grid, y and y' lengths differ or are empty ({}, {}, {})",
                grid.len(),
                y.len(),
                y_prime.len()
            )));
        }
        check_increasing(&grid)?;
        if grid[0] < 0.0 {
            return Err(Error::Grid(format!("grid starts at negative time {}", grid[0])));
        }
        if y.iter().chain(&y_prime).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Grid("trajectory samples must be finite".into()));
        }
        Ok(Self { grid, y, y_prime, meta, series: None })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn y_prime(&self) -> &[Complex64] {
        &self.y_prime
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    /// The regular series the trajectory was started from, if any.
    pub fn series(&self) -> Option<&FrobeniusSeries> {
        self.series.as_ref()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// The samples with `lo ≤ t ≤ hi`. The series is kept only while the
    /// window still reaches the origin.
    pub fn window(&self, lo: f64, hi: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.grid.len()).filter(|&i| self.grid[i] >= lo && self.grid[i] <= hi).collect();
        if idx.is_empty() {
            return Err(Error::Grid(format!("no samples in [{lo}, {hi}]")));
        }
        Ok(Self {
            grid: idx.iter().map(|&i| self.grid[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            y_prime: idx.iter().map(|&i| self.y_prime[i]).collect(),
            meta: self.meta,
            series: if self.grid[idx[0]] == 0.0 { self.series.clone() } else { None },
        })
    }

    /// Index of the first sample with `t > 0`.
    fn positive_start(&self) -> usize {
        self.grid.iter().position(|&t| t > 0.0).unwrap_or(self.grid.len())
    }
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    for w in grid.windows(2) {
        if !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite() {
            return Err(Error::Grid(format!("grid is not strictly increasing at {} -> {}", w[0], w[1])));
        }
    }
    Ok(())
}

/// Solves the master relation with `y0` as `y(0)` (`m = n`) or as the
/// leading Frobenius amplitude (`m ≠ n`, where the regular solution has
/// `y(0) = 0`), using the default local tolerance.
pub fn solve_master(mode: ModePair, lambda: f64, y0: Complex64, grid: &TimeGrid) -> Result<Trajectory> {
    solve_master_with_tolerance(mode, lambda, y0, grid, DEFAULT_LOCAL_TOLERANCE)
}

/// [`solve_master`] with an explicit bound on the Milne local error estimate
/// (relative to the running maximum of each state component).
pub fn solve_master_with_tolerance(
    mode: ModePair,
    lambda: f64,
    y0: Complex64,
    grid: &TimeGrid,
    local_tol: f64,
) -> Result<Trajectory> {
    let meta = TrajectoryMeta::new(lambda, Some(mode))?;
    let series = FrobeniusSeries::new(mode, lambda, y0);
    let pts = grid.points();
    let ts = &pts[1..];
    let h = grid.log_step();
    let startup = ts.len().min(5);
    if ts[startup - 1] > series.range() {
        return Err(Error::Grid(format!(
            "start-up points reach t = {:.3e}, beyond the series range {:.3e}; lower t_start or refine the grid",
            ts[startup - 1],
            series.range()
        )));
    }

    let s = mode.sum();
    let d2 = mode.diff_sq();
    let rhs = |t: f64, y: Complex64, j: Complex64| -> (Complex64, Complex64) {
        let w = t * t + 4.0;
        let dy = j / w;
        let dj = -4.0 * lambda * t * t * y + 2.0 * I * s * t * j / w + I * s * t * y + d2 * y;
        (dy, dj)
    };

    let n = ts.len();
    let mut ys = Vec::with_capacity(n);
    let mut js = Vec::with_capacity(n);
    let mut fy = Vec::with_capacity(n);
    let mut fj = Vec::with_capacity(n);
    for &t in &ts[..startup] {
        let (y, yp) = series.eval(t);
        let j = (t * t * t + 4.0 * t) * yp;
        let (a, b) = rhs(t, y, j);
        ys.push(y);
        js.push(j);
        fy.push(a);
        fj.push(b);
    }

    const AB: [f64; 5] = [1901.0, -2774.0, 2616.0, -1274.0, 251.0];
    const AM: [f64; 5] = [251.0, 646.0, -264.0, 106.0, -19.0];
    // Milne: corrector LTE ≈ C_am / (C_ab − C_am) · (corrected − predicted)
    let milne = (3.0 / 160.0) / (95.0 / 288.0 + 3.0 / 160.0);
    let c = h / 720.0;
    let mut scale_y = ys.iter().fold(0.0f64, |m, z: &Complex64| m.max(z.norm()));
    let mut scale_j = js.iter().fold(0.0f64, |m, z: &Complex64| m.max(z.norm()));
    let mut worst = 0.0f64;
    for i in startup..n {
        let t = ts[i];
        let mut py = ys[i - 1];
        let mut pj = js[i - 1];
        for (l, w) in AB.iter().enumerate() {
            py += c * w * fy[i - 1 - l];
            pj += c * w * fj[i - 1 - l];
        }
        let (gy, gj) = rhs(t, py, pj);
        let mut cy = ys[i - 1] + c * AM[0] * gy;
        let mut cj = js[i - 1] + c * AM[0] * gj;
        for l in 1..5 {
            cy += c * AM[l] * fy[i - l];
            cj += c * AM[l] * fj[i - l];
        }
        let (a, b) = rhs(t, cy, cj);
        scale_y = scale_y.max(cy.norm());
        scale_j = scale_j.max(cj.norm());
        let ey = milne * (cy - py).norm() / scale_y.max(f64::MIN_POSITIVE);
        let ej = milne * (cj - pj).norm() / scale_j.max(f64::MIN_POSITIVE);
        worst = worst.max(ey).max(ej);
        ys.push(cy);
        js.push(cj);
        fy.push(a);
        fj.push(b);
    }
    if !(worst <= local_tol) {
        return Err(Error::Convergence { achieved: worst, requested: local_tol });
    }

    let (y_zero, yp_zero) = series.at_zero();
    let mut y = Vec::with_capacity(n + 1);
    let mut y_prime = Vec::with_capacity(n + 1);
    y.push(y_zero);
    y_prime.push(yp_zero);
    for i in 0..n {
        let t = ts[i];
        y.push(ys[i]);
        y_prime.push(js[i] / (t * t * t + 4.0 * t));
    }
    let mut traj = Trajectory::from_samples(pts, y, y_prime, meta)?;
    traj.series = Some(series);
    Ok(traj)
}

/// Weights `w` with `Σ w_i v_i = p'(x)` for the interpolant `p` through
/// `(nodes_i, v_i)`.
fn lagrange_derivative_weights(nodes: &[f64], x: f64, out: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n {
        let mut total = 0.0;
        for l in 0..n {
            if l == i {
                continue;
            }
            let mut prod = 1.0 / (nodes[i] - nodes[l]);
            for m in 0..n {
                if m != i && m != l {
                    prod *= (x - nodes[m]) / (nodes[i] - nodes[m]);
                }
            }
            total += prod;
        }
        out[i] = total;
    }
}

fn lagrange_eval(nodes: &[f64], values: &[Complex64], x: f64) -> Complex64 {
    let mut acc = ZERO;
    for i in 0..nodes.len() {
        let mut w = 1.0;
        for m in 0..nodes.len() {
            if m != i {
                w *= (x - nodes[m]) / (nodes[i] - nodes[m]);
            }
        }
        acc += w * values[i];
    }
    acc
}

/// `y''` at each positive grid point, from 5-point Lagrange stencils of `y'`
/// in `u = ln t` (centered in the interior, one-sided at the ends).
fn second_derivative(ts: &[f64], yp: &[Complex64]) -> Vec<Complex64> {
    let n = ts.len();
    let us: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let mut w = [0.0; 5];
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2).min(n - 5);
            let nodes = &us[lo..lo + 5];
            lagrange_derivative_weights(nodes, us[i], &mut w);
            let mut d = ZERO;
            for l in 0..5 {
                d += w[l] * yp[lo + l];
            }
            d / ts[i]
        })
        .collect()
}

fn master_integrand(mode: ModePair, lambda: f64, t: f64, y: Complex64, yp: Complex64) -> Complex64 {
    // t·h(t), the u-derivative of J
    let s = mode.sum();
    -4.0 * lambda * t * t * y + 2.0 * I * s * t * t * yp + I * s * t * y + mode.diff_sq() * y
}

/// Sup-norm residual of `(t³+4t)y'(t) − (t₀³+4t₀)y'(t₀) − ∫_{t₀}^t h` over the
/// positive grid, relative to the size of the terms; integrals use cubic
/// Lagrange cells in `u`.
fn master_residual(traj: &Trajectory, mode: ModePair, lambda: f64) -> Result<f64> {
    let start = traj.positive_start();
    let ts = &traj.grid[start..];
    let n = ts.len();
    if n < 4 {
        return Err(Error::Grid("at least 4 positive grid points are needed".into()));
    }
    let us: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let q: Vec<Complex64> =
        (0..n).map(|i| master_integrand(mode, lambda, ts[i], traj.y[start + i], traj.y_prime[start + i])).collect();
    let jv: Vec<Complex64> = (0..n).map(|i| (ts[i].powi(3) + 4.0 * ts[i]) * traj.y_prime[start + i]).collect();
    let rule = GaussLegendre::new(3);
    let mut acc = ComplexSum::default();
    let mut abs_acc = 0.0;
    let mut worst = 0.0f64;
    for i in 0..n - 1 {
        let lo = i.saturating_sub(1).min(n - 4);
        let nodes = &us[lo..lo + 4];
        let vals = &q[lo..lo + 4];
        let cell = rule.integrate(us[i], us[i + 1], |u| lagrange_eval(nodes, vals, u));
        acc.add(cell);
        abs_acc += cell.norm();
        let r = (jv[i + 1] - jv[0] - acc.value()).norm();
        worst = worst.max(r);
    }
    let scale = jv.iter().fold(abs_acc, |m, z| m.max(z.norm()));
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
struct SampledForcing {
    /// `ln t` of the positive grid.
    us: Vec<f64>,
    values: Vec<Complex64>,
    t_first: f64,
    t_max: f64,
    /// `(k, F_j, range)`: `f = t^k Σ F_j t^j` on `[0, range]`.
    series: Option<(usize, Vec<Complex64>, f64)>,
}

impl SampledForcing {
    fn series_eval(k: usize, coeffs: &[Complex64], t: f64) -> Complex64 {
        let mut p = ZERO;
        for &c in coeffs.iter().rev() {
            p = p * t + c;
        }
        p * t.powi(k as i32)
    }

    fn cell_of(&self, u: f64) -> usize {
        let c = self.us.partition_point(|&x| x <= u);
        c.saturating_sub(1).min(self.us.len().saturating_sub(2))
    }

    fn window(&self, cell: usize) -> (usize, usize) {
        let n = self.us.len();
        let width = n.min(6);
        let lo = cell.saturating_sub(2).min(n - width);
        (lo, lo + width)
    }

    fn interp(&self, u: f64) -> Complex64 {
        let c = self.cell_of(u);
        if self.us[c] == u {
            return self.values[c];
        }
        let (lo, hi) = self.window(c);
        lagrange_eval(&self.us[lo..hi], &self.values[lo..hi], u)
    }

    fn eval(&self, t: f64) -> Complex64 {
        if let Some((k, coeffs, range)) = &self.series {
            if t <= *range {
                return Self::series_eval(*k, coeffs, t);
            }
        }
        if t < self.t_first || t > self.t_max {
            return ZERO;
        }
        if self.us.len() == 1 {
            return self.values[0];
        }
        self.interp(t.ln())
    }

    /// `∫_a^b r^p f(r) dr` within the support, with an error estimate.
    fn weighted_integral(&self, p: f64, a: f64, b: f64) -> Result<Estimate<Complex64>> {
        let mut total = ComplexSum::default();
        let mut error = 0.0;
        let mut lo = a;
        if let Some((k, coeffs, range)) = &self.series {
            if a < *range {
                let hi = b.min(*range);
                for (j, &c) in coeffs.iter().enumerate() {
                    if c == ZERO {
                        continue;
                    }
                    let e = p + (*k + j) as f64 + 1.0;
                    if e <= 0.0 && lo == 0.0 {
                        return Err(Error::Domain(format!("∫ r^{p} f diverges at 0")));
                    }
                    let piece = if e.abs() < 1e-300 { (hi / lo).ln() } else { (hi.powf(e) - lo.powf(e)) / e };
                    total.add(c * piece);
                }
                lo = hi;
            }
        } else if a < self.t_first {
            return Err(Error::Domain(format!(
                "forcing is only sampled from t = {}; cannot integrate from {a}",
                self.t_first
            )));
        }
        if b > lo && self.us.len() >= 2 {
            let (ua, ub) = (lo.ln(), b.ln());
            let fine = GaussLegendre::new(8);
            let coarse = GaussLegendre::new(6);
            let first = self.cell_of(ua);
            let last = self.cell_of(ub);
            for c in first..=last {
                let ca = ua.max(self.us[c]);
                let cb = ub.min(self.us[c + 1]);
                if cb <= ca {
                    continue;
                }
                let (wlo, whi) = self.window(c);
                let nodes = &self.us[wlo..whi];
                let vals = &self.values[wlo..whi];
                let g = |u: f64| ((p + 1.0) * u).exp() * lagrange_eval(nodes, vals, u);
                let v8 = fine.integrate(ca, cb, g);
                let v6 = coarse.integrate(ca, cb, g);
                total.add(v8);
                error += (v8 - v6).norm();
            }
        }
        Ok(Estimate { value: total.value(), error })
    }
}

type ForcingFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Zero,
    Function { f: ForcingFn, breakpoints: Vec<f64> },
    Sampled(SampledForcing),
}

/// A forcing `f(t)` with a certified envelope `|f(t)| ≤ decay_c / t` for `t ≥ 1`.
#[derive(Clone)]
pub struct ForcingProfile {
    source: Source,
    decay_c: f64,
}

impl fmt::Debug for ForcingProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Zero => "zero",
            Source::Function { .. } => "function",
            Source::Sampled(_) => "sampled",
        };
        f.debug_struct("ForcingProfile").field("kind", &kind).field("decay_c", &self.decay_c).finish()
    }
}

const AUDIT_DECADES: i32 = 6;
const AUDIT_PER_DECADE: i32 = 50;

impl ForcingProfile {
    pub fn zero() -> Self {
        Self { source: Source::Zero, decay_c: 0.0 }
    }

    /// Wraps an analytic forcing. The envelope is audited on a log grid over
    /// `[1, 10⁶]`.
    pub fn from_fn(f: impl Fn(f64) -> Complex64 + Send + Sync + 'static, decay_c: f64) -> Result<Self> {
        if !(decay_c >= 0.0 && decay_c.is_finite()) {
            return Err(Error::Domain(format!("decay constant must be finite and >= 0, got {decay_c}")));
        }
        for i in 0..=AUDIT_DECADES * AUDIT_PER_DECADE {
            let t = 10f64.powf(i as f64 / AUDIT_PER_DECADE as f64);
            let v = f(t);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Domain(format!("forcing is not finite at t = {t}")));
            }
            if t * v.norm() > decay_c * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "decay envelope violated at t = {t}: t|f| = {:.6e} > {decay_c:.6e}",
                    t * v.norm()
                )));
            }
        }
        Ok(Self { source: Source::Function { f: Arc::new(f), breakpoints: Vec::new() }, decay_c })
    }

    /// Declares points where an analytic forcing is not smooth, so
    /// integrals split there.
    pub fn with_breakpoints(mut self, points: Vec<f64>) -> Self {
        if let Source::Function { breakpoints, .. } = &mut self.source {
            *breakpoints = points;
            breakpoints.sort_by(f64::total_cmp);
        }
        self
    }

    pub fn decay_c(&self) -> f64 {
        self.decay_c
    }

    /// Largest `t` at which the forcing is known; `None` for analytic forcings.
    pub fn support_end(&self) -> Option<f64> {
        match &self.source {
            Source::Sampled(s) => Some(s.t_max),
            _ => None,
        }
    }

    /// Smallest `t` at which the forcing is known.
    pub fn support_start(&self) -> f64 {
        match &self.source {
            Source::Sampled(s) if s.series.is_none() => s.t_first,
            _ => 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match &self.source {
            Source::Zero => ZERO,
            Source::Function { f, .. } => f(t),
            Source::Sampled(s) => s.eval(t),
        }
    }

    /// `∫_a^b r^p f(r) dr`, `0 ≤ a < b`, within the support.
    pub fn weighted_integral(&self, p: f64, a: f64, b: f64) -> Result<Estimate<Complex64>> {
        if !(b > a) {
            return Ok(Estimate { value: ZERO, error: 0.0 });
        }
        if let Some(end) = self.support_end() {
            if b > end * (1.0 + 1e-14) {
                return Err(Error::Domain(format!("forcing is only known up to t = {end}, asked for {b}")));
            }
        }
        match &self.source {
            Source::Zero => Ok(Estimate { value: ZERO, error: 0.0 }),
            Source::Sampled(s) => s.weighted_integral(p, a, b.min(s.t_max)),
            Source::Function { f, breakpoints } => function_integral(f.as_ref(), breakpoints, p, a, b),
        }
    }
}

fn function_integral(
    f: &(dyn Fn(f64) -> Complex64 + Send + Sync),
    breakpoints: &[f64],
    p: f64,
    a: f64,
    b: f64,
) -> Result<Estimate<Complex64>> {
    let ub = b.ln();
    let ua = if a > 0.0 {
        a.ln()
    } else {
        if p <= -1.0 {
            return Err(Error::Domain(format!("∫ r^{p} f diverges at 0")));
        }
        // drop [0, e^{ua}]: its weight ∫ r^p dr is 1e-20 of the one at b
        ub - 46.0 / (p + 1.0)
    };
    let mut interior: Vec<f64> = breakpoints.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    let mut u = ua.ceil();
    while u < ub && interior.len() < 100_000 {
        interior.push(u);
        u += 1.0;
    }
    interior.sort_by(f64::total_cmp);
    interior.dedup();
    let opts = AdaptiveOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_refinements: 20_000, nodes_per_axis: 10 };
    integrate_1d(ua, ub, &interior, &opts, |u| ((p + 1.0) * u).exp() * f(u.exp()))
}

/// `f` from a master-equation trajectory: values on the positive grid (from
/// the regular series where it converges, from stencils elsewhere) and the
/// envelope constant `decay_c = sup_{t ≥ 1} t|f(t)|` over the grid.
pub fn assemble_forcing(mode: ModePair, traj: &Trajectory, lambda: f64) -> Result<ForcingProfile> {
    if traj.meta.mode.is_some_and(|m| m != mode) {
        return Err(Error::Domain("trajectory was computed for a different mode pair".into()));
    }
    let dl = (traj.meta.lambda - lambda).abs();
    if dl > 1e-15 {
        return Err(Error::Consistency { residual: dl, limit: 1e-15 });
    }
    let residual = master_residual(traj, mode, lambda)?;
    if residual > CONSISTENCY_LIMIT {
        return Err(Error::Consistency { residual, limit: CONSISTENCY_LIMIT });
    }
    let start = traj.positive_start();
    if start > 0 && traj.series.is_none() {
        return Err(Error::Grid("a grid through t = 0 needs the regular series".into()));
    }
    let ts = &traj.grid[start..];
    if ts.len() < 5 {
        return Err(Error::Grid("at least 5 positive grid points are needed for the stencils".into()));
    }
    let y = &traj.y[start..];
    let yp = &traj.y_prime[start..];
    let ypp = second_derivative(ts, yp);
    let series = traj.series.as_ref().map(|s| (s.exponent(), s.forcing_coefficients(mode), s.range()));
    let s = mode.sum();
    let d2 = mode.diff_sq();
    let values: Vec<Complex64> = (0..ts.len())
        .map(|i| {
            let t = ts[i];
            match &series {
                Some((k, coeffs, range)) if t <= *range => SampledForcing::series_eval(*k, coeffs, t),
                _ => {
                    -4.0 * ypp[i] - 4.0 * yp[i] / t + 2.0 * I * s * yp[i] + I * s * y[i] / t + d2 * y[i] / (t * t)
                }
            }
        })
        .collect();
    let decay_c = ts.iter().zip(&values).filter(|(t, _)| **t >= 1.0).fold(0.0f64, |m, (t, v)| m.max(t * v.norm()));
    Ok(ForcingProfile {
        source: Source::Sampled(SampledForcing {
            us: ts.iter().map(|t| t.ln()).collect(),
            values,
            t_first: ts[0],
            t_max: ts[ts.len() - 1],
            series,
        }),
        decay_c,
    })
}

/// `|t²y'' + 3ty' + 4λy − f(t)|` at each sample, `None` at `t = 0` and at the
/// two stencil-boundary points on each end.
pub fn pointwise_euler_residual(traj: &Trajectory, forcing: &ForcingProfile, lambda: f64) -> Result<Vec<Option<f64>>> {
    let start = traj.positive_start();
    let ts = &traj.grid[start..];
    let n = ts.len();
    if n < 5 {
        return Err(Error::Grid("at least 5 positive grid points are needed for the stencils".into()));
    }
    let y = &traj.y[start..];
    let yp = &traj.y_prime[start..];
    let ypp = second_derivative(ts, yp);
    let mut out = vec![None; traj.grid.len()];
    for i in 2..n - 2 {
        let t = ts[i];
        let r = t * t * ypp[i] + 3.0 * t * yp[i] + 4.0 * lambda * y[i] - forcing.eval(t);
        out[start + i] = Some(r.norm());
    }
    Ok(out)
}

/// `sup |t²y'' + 3ty' + 4λy − f| / (1 + sup|y|)` over interior grid points.
pub fn euler_residual(traj: &Trajectory, forcing: &ForcingProfile, lambda: f64) -> Result<f64> {
    let pointwise = pointwise_euler_residual(traj, forcing, lambda)?;
    let sup = pointwise.iter().flatten().fold(0.0f64, |m, &r| m.max(r));
    let ymax = traj.y.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(sup / (1.0 + ymax))
}

/// Truncation of the `[·, ∞)` integrals against the envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailOptions {
    /// Absolute bound the analytic tail estimate must meet.
    pub tolerance: f64,
    /// Largest admissible cutoff for analytic forcings.
    pub r_max: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, r_max: 1e30 }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Domain(format!("nu must lie in (0, 1], got {nu}")));
    }
    Ok(())
}

/// Cutoff `R ≥ lower` with `scale·decay_c·R^{−ν} ≤ tolerance`, and the bound at `R`.
fn choose_cutoff(forcing: &ForcingProfile, nu: f64, lower: f64, scale: f64, opts: &TailOptions) -> Result<(f64, f64)> {
    let c = scale * forcing.decay_c;
    let bound_at = |r: f64| c * r.powf(-nu);
    let r = match forcing.support_end() {
        Some(end) => end,
        None if c == 0.0 => lower,
        None => ((c / opts.tolerance).powf(1.0 / nu) * (1.0 + 1e-9)).max(lower).min(opts.r_max),
    };
    if r < lower.max(1.0) && c > 0.0 {
        return Err(Error::Domain(format!("forcing support ends at {r}, below the required {lower}")));
    }
    let bound = bound_at(r);
    if bound > opts.tolerance {
        return Err(Error::Truncation { bound, tolerance: opts.tolerance });
    }
    Ok((r, bound))
}

/// `Y(t) = −(t^{ν−1}/2ν)∫_t^∞ r^{−ν}f − (t^{−1−ν}/2ν)∫_0^t r^ν f`. The
/// reported error adds the tail bound `decay_c R^{−ν}/ν` (scaled by the
/// prefactor) to the quadrature estimate.
pub fn particular_solution(nu: f64, forcing: &ForcingProfile, t: f64, opts: &TailOptions) -> Result<Estimate<Complex64>> {
    check_nu(nu)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let (r, bound) = choose_cutoff(forcing, nu, t.max(1.0), 1.0 / nu, opts)?;
    let tail = if r > t { forcing.weighted_integral(-nu, t, r)? } else { Estimate { value: ZERO, error: 0.0 } };
    let head = forcing.weighted_integral(nu, 0.0, t)?;
    let pt = t.powf(nu - 1.0) / (2.0 * nu);
    let ph = t.powf(-1.0 - nu) / (2.0 * nu);
    Ok(Estimate { value: -pt * tail.value - ph * head.value, error: pt * (tail.error + bound) + ph * head.error })
}

/// `A = −(1/2ν)∫_1^∞ r^{−ν} f(r) dr`; the truncation at `R` is certified
/// below `decay_c R^{−ν}/(2ν²)`.
pub fn asymptotic_constant(nu: f64, forcing: &ForcingProfile, opts: &TailOptions) -> Result<Estimate<Complex64>> {
    check_nu(nu)?;
    let (r, bound) = choose_cutoff(forcing, nu, 1.0, 1.0 / (2.0 * nu * nu), opts)?;
    let integral = forcing.weighted_integral(-nu, 1.0, r)?;
    let p = 1.0 / (2.0 * nu);
    Ok(Estimate { value: -p * integral.value, error: p * integral.error + bound })
}

/// `(1/2ν)∫_0^∞ r^{−ν} f(r) dr`: the `t^{ν−1}` amplitude of the solution that
/// is regular at 0 (the particular solution above has none, and the
/// homogeneous `t^{−1−ν}` mode is excluded by regularity).
pub fn regular_asymptotic_constant(nu: f64, forcing: &ForcingProfile, opts: &TailOptions) -> Result<Estimate<Complex64>> {
    check_nu(nu)?;
    let (r, bound) = choose_cutoff(forcing, nu, 1.0, 1.0 / (2.0 * nu * nu), opts)?;
    let integral = forcing.weighted_integral(-nu, 0.0, r)?;
    let p = 1.0 / (2.0 * nu);
    Ok(Estimate { value: p * integral.value, error: p * integral.error + bound })
}

/// The particular solution and its derivative on `points` (positive,
/// increasing), via cumulative head/tail integrals. In
/// `P' = −((ν−1)t^{ν−2}/2ν) I_tail + ((ν+1)t^{−ν−2}/2ν) I_head` the `f(t)`
/// terms cancel.
pub fn particular_trajectory(
    nu: f64,
    forcing: &ForcingProfile,
    points: &[f64],
    opts: &TailOptions,
) -> Result<Trajectory> {
    check_nu(nu)?;
    check_increasing(points)?;
    let n = points.len();
    if n == 0 || points[0] <= 0.0 {
        return Err(Error::Grid("points must be positive and non-empty".into()));
    }
    let last = points[n - 1];
    let (r, _) = choose_cutoff(forcing, nu, last.max(1.0), 1.0 / nu, opts)?;
    let mut head = vec![ZERO; n];
    let mut acc = ComplexSum::default();
    acc.add(forcing.weighted_integral(nu, 0.0, points[0])?.value);
    head[0] = acc.value();
    for i in 1..n {
        acc.add(forcing.weighted_integral(nu, points[i - 1], points[i])?.value);
        head[i] = acc.value();
    }
    let mut tail = vec![ZERO; n];
    let mut acc = ComplexSum::default();
    if r > last {
        acc.add(forcing.weighted_integral(-nu, last, r)?.value);
    }
    tail[n - 1] = acc.value();
    for i in (0..n - 1).rev() {
        acc.add(forcing.weighted_integral(-nu, points[i], points[i + 1])?.value);
        tail[i] = acc.value();
    }
    let two_nu = 2.0 * nu;
    let y = (0..n)
        .map(|i| {
            let t = points[i];
            -(t.powf(nu - 1.0) / two_nu) * tail[i] - (t.powf(-1.0 - nu) / two_nu) * head[i]
        })
        .collect();
    let yp = (0..n)
        .map(|i| {
            let t = points[i];
            -((nu - 1.0) * t.powf(nu - 2.0) / two_nu) * tail[i] + ((nu + 1.0) * t.powf(-nu - 2.0) / two_nu) * head[i]
        })
        .collect();
    let meta = TrajectoryMeta { lambda: lambda_of_nu(nu), nu, mode: None };
    Trajectory::from_samples(points.to_vec(), y, yp, meta)
}

/// Size and trend of a positive profile over the top decade of its range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayAudit {
    pub sup: f64,
    pub t_at_sup: f64,
    /// Least-squares slope of `ln v` against `ln t` over the top decade.
    pub slope: f64,
    /// `slope < 0.05`.
    pub bounded: bool,
}

/// Slope threshold separating a plateau from growth.
pub const GROWTH_SLOPE: f64 = 0.05;

fn audit(ts: &[f64], vs: &[f64]) -> DecayAudit {
    let mut sup = 0.0;
    let mut t_at_sup = ts.first().copied().unwrap_or(0.0);
    for (&t, &v) in ts.iter().zip(vs) {
        if v > sup {
            sup = v;
            t_at_sup = t;
        }
    }
    let slope = match ts.last() {
        Some(&top) => {
            let pts: Vec<(f64, f64)> = ts
                .iter()
                .zip(vs)
                .filter(|(t, _)| **t >= top / 10.0)
                .map(|(t, v)| (t.ln(), (v + 1e-300).ln()))
                .collect();
            loglog_slope(&pts)
        }
        None => 0.0,
    };
    DecayAudit { sup, t_at_sup, slope, bounded: slope < GROWTH_SLOPE }
}

fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Audits `t|f(t)|` over `[t_lo, t_hi]`: on the sample grid for sampled
/// forcings, on a 100-per-decade grid otherwise.
pub fn forcing_decay_audit(forcing: &ForcingProfile, t_lo: f64, t_hi: f64) -> DecayAudit {
    let ts: Vec<f64> = match &forcing.source {
        Source::Sampled(s) => s.us.iter().map(|u| u.exp()).filter(|&t| t >= t_lo && t <= t_hi).collect(),
        _ => {
            let k = ((t_hi / t_lo).log10() * 100.0).ceil().max(1.0) as usize;
            (0..=k).map(|i| t_lo * (t_hi / t_lo).powf(i as f64 / k as f64)).collect()
        }
    };
    let vs: Vec<f64> = ts.iter().map(|&t| t * forcing.eval(t).norm()).collect();
    audit(&ts, &vs)
}

/// `t|y(t) − A t^{ν−1}|` over the samples with `t ≥ 1`.
pub fn ratner_check(traj: &Trajectory, a_const: Complex64, nu: f64) -> DecayAudit {
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (i, &t) in traj.grid.iter().enumerate() {
        if t >= 1.0 {
            ts.push(t);
            vs.push(t * (traj.y[i] - a_const * t.powf(nu - 1.0)).norm());
        }
    }
    audit(&ts, &vs)
}

/// Least-squares fit of `y(t)·t^{1−ν} ≈ α + β t^{−1} + γ t^{−2ν}` over the
/// samples with `t ≥ t_lo`; returns `α`.
pub fn long_time_amplitude(traj: &Trajectory, nu: f64, t_lo: f64) -> Result<Complex64> {
    let idx: Vec<usize> = (0..traj.grid.len()).filter(|&i| traj.grid[i] >= t_lo && traj.grid[i] > 0.0).collect();
    let ts: Vec<f64> = idx.iter().map(|&i| traj.grid[i]).collect();
    let cols = vec![
        vec![1.0; ts.len()],
        ts.iter().map(|t| 1.0 / t).collect(),
        ts.iter().map(|t| t.powf(-2.0 * nu)).collect(),
    ];
    let scaled: Vec<Complex64> = idx.iter().map(|&i| traj.y[i] * traj.grid[i].powf(1.0 - nu)).collect();
    let re: Vec<f64> = scaled.iter().map(|z| z.re).collect();
    let im: Vec<f64> = scaled.iter().map(|z| z.im).collect();
    let fail = || Error::Grid(format!("long-time fit is degenerate on t >= {t_lo} ({} samples)", ts.len()));
    let cr = least_squares(&cols, &re).ok_or_else(fail)?;
    let ci = least_squares(&cols, &im).ok_or_else(fail)?;
    Ok(Complex64::new(cr[0], ci[0]))
}

/// Amplitudes `(α, β)` of the homogeneous modes in `y − P ≈ α t^{ν−1} + β t^{−1−ν}`,
/// fitted by least squares on the common positive grid of `traj` and the
/// particular trajectory `particular`.
pub fn homogeneous_amplitudes(traj: &Trajectory, particular: &Trajectory, nu: f64) -> Result<(Complex64, Complex64)> {
    let mut ts = Vec::new();
    let mut diff = Vec::new();
    for (i, &t) in particular.grid.iter().enumerate() {
        if let Ok(j) = traj.grid.binary_search_by(|x| x.total_cmp(&t)) {
            ts.push(t);
            diff.push(traj.y[j] - particular.y[i]);
        }
    }
    let cols = vec![ts.iter().map(|t| t.powf(nu - 1.0)).collect(), ts.iter().map(|t| t.powf(-1.0 - nu)).collect()];
    let fail = || Error::Grid(format!("homogeneous fit is degenerate ({} shared samples)", ts.len()));
    let re: Vec<f64> = diff.iter().map(|z| z.re).collect();
    let im: Vec<f64> = diff.iter().map(|z| z.im).collect();
    let cr = least_squares(&cols, &re).ok_or_else(fail)?;
    let ci = least_squares(&cols, &im).ok_or_else(fail)?;
    Ok((Complex64::new(cr[0], ci[0]), Complex64::new(cr[1], ci[1])))
}
