//! Gauss–Legendre rules and global-adaptive tensor quadrature.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sum::{CompensatedSum, ComplexSum};
#[allow(unused_imports)]
use num_traits::Float;

/// Values that can be integrated: reals and complex numbers.
pub trait QuadValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
    /// Order-fixed compensated sum of a slice.
    fn sum_compensated(values: &[Self]) -> Self;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn sum_compensated(values: &[Self]) -> Self {
        values.iter().copied().collect::<CompensatedSum>().value()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn sum_compensated(values: &[Self]) -> Self {
        let mut s = ComplexSum::new();
        for &v in values {
            s.add(v);
        }
        s.value()
    }
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            let (_, d) = legendre_with_derivative(n, 0.0);
            nodes[n / 2] = 0.0;
            weights[n / 2] = 2.0 / (d * d);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b f` with this rule on a single panel.
    pub fn integrate<V: QuadValue>(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> V) -> V {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = V::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * (w * half);
        }
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tolerances and budget for the adaptive integrators.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Cap on the number of cell refinements.
    pub max_refinements: usize,
    /// Gauss–Legendre nodes per axis in each cell.
    pub nodes_per_axis: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { abs_tol: 0.0, rel_tol: 1e-12, max_refinements: 200_000, nodes_per_axis: 12 }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<V> {
    pub value: V,
    /// Sum of per-cell |coarse − refined| differences.
    pub error: f64,
}

#[derive(Debug, Clone)]
struct Cell<V> {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: V,
    error: f64,
    id: u64,
}

impl<V> PartialEq for Cell<V> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<V> Eq for Cell<V> {}
impl<V> PartialOrd for Cell<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Cell<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then_with(|| other.id.cmp(&self.id))
    }
}

fn tensor_rule<V: QuadValue>(
    rule: &GaussLegendre,
    lo: &[f64],
    hi: &[f64],
    f: &mut impl FnMut(&[f64]) -> V,
    point: &mut [f64],
) -> V {
    let d = lo.len();
    let n = rule.len();
    let mut idx = vec![0usize; d];
    let mut acc = V::default();
    let mut scale = 1.0;
    for k in 0..d {
        scale *= 0.5 * (hi[k] - lo[k]);
    }
    loop {
        let mut w = scale;
        for k in 0..d {
            let half = 0.5 * (hi[k] - lo[k]);
            let mid = 0.5 * (hi[k] + lo[k]);
            point[k] = mid + half * rule.nodes()[idx[k]];
            w *= rule.weights()[idx[k]];
        }
        acc = acc + f(point) * w;
        let mut k = 0;
        loop {
            if k == d {
                return acc;
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

fn evaluate_cell<V: QuadValue>(
    rule: &GaussLegendre,
    lo: &[f64],
    hi: &[f64],
    f: &mut impl FnMut(&[f64]) -> V,
    point: &mut [f64],
    id: u64,
) -> Cell<V> {
    let coarse = tensor_rule(rule, lo, hi, f, point);
    let d = lo.len();
    let mut fine = V::default();
    for corner in 0..(1usize << d) {
        let (clo, chi) = child_bounds(lo, hi, corner);
        fine = fine + tensor_rule(rule, &clo, &chi, f, point);
    }
    Cell { lo: lo.to_vec(), hi: hi.to_vec(), value: fine, error: (fine - coarse).magnitude(), id }
}

fn child_bounds(lo: &[f64], hi: &[f64], corner: usize) -> (Vec<f64>, Vec<f64>) {
    let d = lo.len();
    let mut clo = vec![0.0; d];
    let mut chi = vec![0.0; d];
    for k in 0..d {
        let mid = 0.5 * (lo[k] + hi[k]);
        if corner >> k & 1 == 0 {
            clo[k] = lo[k];
            chi[k] = mid;
        } else {
            clo[k] = mid;
            chi[k] = hi[k];
        }
    }
    (clo, chi)
}

/// Global-adaptive integration over the tensor grid spanned by per-axis
/// breakpoints. Each cell is estimated with the tensor rule and with its
/// `2^d` halves; the cell with the largest disagreement is split until the
/// summed disagreement meets the tolerance.
pub fn integrate_tensor<V: QuadValue>(
    breakpoints: &[Vec<f64>],
    options: &AdaptiveOptions,
    mut f: impl FnMut(&[f64]) -> V,
) -> Result<Estimate<V>> {
    let d = breakpoints.len();
    assert!(d >= 1);
    let rule = GaussLegendre::new(options.nodes_per_axis);
    let mut point = vec![0.0; d];
    let mut heap: BinaryHeap<Cell<V>> = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut idx = vec![0usize; d];
    if breakpoints.iter().any(|b| b.len() < 2) {
        return Ok(Estimate { value: V::default(), error: 0.0 });
    }
    loop {
        let lo: Vec<f64> = (0..d).map(|k| breakpoints[k][idx[k]]).collect();
        let hi: Vec<f64> = (0..d).map(|k| breakpoints[k][idx[k] + 1]).collect();
        heap.push(evaluate_cell(&rule, &lo, &hi, &mut f, &mut point, next_id));
        next_id += 1;
        let mut k = 0;
        let mut done = false;
        loop {
            if k == d {
                done = true;
                break;
            }
            idx[k] += 1;
            if idx[k] + 1 < breakpoints[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if done {
            break;
        }
    }

    let mut refinements = 0;
    loop {
        let (total, err, magnitude) = totals(&heap);
        let target = options.abs_tol.max(options.rel_tol * magnitude);
        if err <= target {
            return Ok(Estimate { value: total, error: err });
        }
        if refinements >= options.max_refinements {
            return Err(Error::Quadrature { achieved: err / magnitude.max(f64::MIN_POSITIVE) });
        }
        let worst = heap.pop().expect("heap is non-empty");
        for corner in 0..(1usize << d) {
            let (clo, chi) = child_bounds(&worst.lo, &worst.hi, corner);
            heap.push(evaluate_cell(&rule, &clo, &chi, &mut f, &mut point, next_id));
            next_id += 1;
        }
        refinements += 1;
    }
}

fn totals<V: QuadValue>(heap: &BinaryHeap<Cell<V>>) -> (V, f64, f64) {
    let mut cells: Vec<&Cell<V>> = heap.iter().collect();
    cells.sort_by_key(|c| c.id);
    let values: Vec<V> = cells.iter().map(|c| c.value).collect();
    let errs: CompensatedSum = cells.iter().map(|c| c.error).collect();
    let mags: CompensatedSum = cells.iter().map(|c| c.value.magnitude()).collect();
    (V::sum_compensated(&values), errs.value(), mags.value())
}

/// One-dimensional adaptive integral over `[a, b]` with optional interior breakpoints.
pub fn integrate_1d<V: QuadValue>(
    a: f64,
    b: f64,
    interior: &[f64],
    options: &AdaptiveOptions,
    mut f: impl FnMut(f64) -> V,
) -> Result<Estimate<V>> {
    let mut pts = vec![a];
    pts.extend(interior.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    integrate_tensor(&[pts], options, |x| f(x[0]))
}

/// Breakpoints `0, ±s, ±2s, ±4s, …` clipped to `[lo, hi]`: dyadic panels
/// concentrated at a peak of width `s` at the origin.
pub fn dyadic_breakpoints(lo: f64, hi: f64, scale: f64) -> Vec<f64> {
    let mut pts = Vec::new();
    pts.push(lo);
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    let mut r = scale;
    while r < hi || -r > lo {
        if -r > lo {
            neg.push(-r);
        }
        if r < hi {
            pos.push(r);
        }
        r *= 2.0;
    }
    neg.reverse();
    pts.extend(neg);
    if lo < 0.0 && hi > 0.0 {
        pts.push(0.0);
    }
    pts.extend(pos);
    pts.push(hi);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // exact for degree ≤ 15
        let v: f64 = rule.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4));
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10 * exact.abs());
        let wsum: f64 = rule.weights().iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.nodes()[2], 0.0);
        assert!((rule.weights()[2] - 128.0 / 225.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_gaussian_peak() {
        let t: f64 = 1e4;
        let pts = dyadic_breakpoints(-8.0, 8.0, 1.0 / t.sqrt());
        let est = integrate_tensor(&[pts], &AdaptiveOptions::default(), |x| (-t * x[0] * x[0] / 2.0).exp()).unwrap();
        let exact = (2.0 * PI / t).sqrt();
        assert!((est.value - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let est = integrate_1d(0.0, 1.0, &[], &AdaptiveOptions::default(), |x: f64| x.sqrt()).unwrap();
        assert!((est.value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn two_dimensional_product() {
        let opts = AdaptiveOptions { nodes_per_axis: 8, ..Default::default() };
        let pts = vec![-1.0, 0.0, 1.0];
        let est = integrate_tensor(&[pts.clone(), pts], &opts, |x| (x[0] + 1.0).exp() * x[1] * x[1]).unwrap();
        let exact = (2f64.exp() - 1.0) * (2.0 / 3.0);
        assert!((est.value - exact).abs() < 1e-12);
    }

    #[test]
    fn dyadic_points_are_sorted_and_bounded() {
        let p = dyadic_breakpoints(-1.0, 0.5, 0.01);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p[0], -1.0);
        assert_eq!(*p.last().unwrap(), 0.5);
        assert!(p.contains(&0.0));
    }
}
