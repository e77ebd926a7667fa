//! Taylor coefficients at the origin from Chebyshev interpolation.
//!
//! The interpolant of degree `n - 1` through first-kind Chebyshev nodes on
//! `[-δ, δ]^d` is converted to the monomial basis. First-kind nodes never
//! include the origin, so integrands with removable singularities there
//! (0/0 Jacobians of Morse charts) can be sampled directly.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;


/// Chebyshev first-kind nodes on `[-1, 1]`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| (PI * (j as f64 + 0.5) / n as f64).cos()).collect()
}

/// Chebyshev coefficients of the interpolant through values at `chebyshev_nodes(n)`.
fn chebyshev_transform(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            let c = 2.0 * s / n as f64;
            if k == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

/// Monomial coefficients `m[p]` of `Σ_k c_k T_k(s)`.
fn chebyshev_to_monomial(cheb: &[f64]) -> Vec<f64> {
    let n = cheb.len();
    let mut out = vec![0.0; n];
    let mut t_prev = vec![0.0; n];
    let mut t_cur = vec![0.0; n];
    t_prev[0] = 1.0;
    if n > 1 {
        t_cur[1] = 1.0;
    }
    for (p, o) in out.iter_mut().enumerate() {
        *o += cheb[0] * t_prev[p];
    }
    if n > 1 {
        for (p, o) in out.iter_mut().enumerate() {
            *o += cheb[1] * t_cur[p];
        }
    }
    for c in cheb.iter().skip(2) {
        let mut next = vec![0.0; n];
        for p in 0..n {
            if p > 0 {
                next[p] += 2.0 * t_cur[p - 1];
            }
            next[p] -= t_prev[p];
        }
        for (p, o) in out.iter_mut().enumerate() {
            *o += c * next[p];
        }
        t_prev = core::mem::replace(&mut t_cur, next);
    }
    out
}

/// Taylor coefficients `f^{(p)}(0)/p!` for `p < n` from an `n`-node
/// Chebyshev interpolant on `[-delta, delta]`.
pub fn taylor_1d(mut f: impl FnMut(f64) -> f64, delta: f64, n: usize) -> Vec<f64> {
    let nodes = chebyshev_nodes(n);
    let values: Vec<f64> = nodes.iter().map(|&s| f(delta * s)).collect();
    let mono = chebyshev_to_monomial(&chebyshev_transform(&values));
    mono.iter()
        .enumerate()
        .map(|(p, m)| m / delta.powi(p as i32))
        .collect()
}

const NODE_LADDER: [usize; 9] = [8, 12, 16, 20, 24, 32, 40, 48, 64];

/// Smallest node count from a fixed ladder whose two trailing Chebyshev
/// coefficients sit at roundoff level; high-degree noise coefficients are
/// what the monomial conversion amplifies.
pub fn resolved_node_count(mut f: impl FnMut(f64) -> f64, delta: f64, min_nodes: usize) -> usize {
    for &n in NODE_LADDER.iter().filter(|&&n| n >= min_nodes) {
        let nodes = chebyshev_nodes(n);
        let values: Vec<f64> = nodes.iter().map(|&s| f(delta * s)).collect();
        let cheb = chebyshev_transform(&values);
        let scale = cheb.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tail = cheb[n - 1].abs().max(cheb[n - 2].abs());
        if tail <= 32.0 * f64::EPSILON * scale {
            return n;
        }
    }
    NODE_LADDER[NODE_LADDER.len() - 1]
}

/// Taylor coefficients up to `max_order` with the interpolation half-width
/// calibrated per coefficient: `delta_max·2^{-k}` for `k < levels`, keeping
/// for each order the estimate where consecutive half-widths agree best.
///
/// Returns the coefficients and, per order, the disagreement used as the
/// error estimate.
pub fn taylor_1d_calibrated(
    mut f: impl FnMut(f64) -> f64,
    delta_max: f64,
    max_order: usize,
    levels: usize,
) -> (Vec<f64>, Vec<f64>) {
    let levels = levels.max(2);
    let estimates: Vec<Vec<f64>> = (0..levels)
        .map(|k| {
            let delta = delta_max / (1u64 << k) as f64;
            let n = resolved_node_count(&mut f, delta, max_order + 4);
            let mut c = taylor_1d(&mut f, delta, n);
            c.resize(max_order + 1, 0.0);
            c
        })
        .collect();
    let mut best = vec![0.0; max_order + 1];
    let mut err = vec![f64::INFINITY; max_order + 1];
    for p in 0..=max_order {
        for k in 0..levels - 1 {
            let diff = (estimates[k][p] - estimates[k + 1][p]).abs();
            if diff < err[p] {
                err[p] = diff;
                best[p] = estimates[k][p];
            }
        }
    }
    (best, err)
}

/// Dense tensor of Taylor coefficients `D^k f(0) / k!`, indexed by multi-index.
#[derive(Debug, Clone)]
pub struct TaylorTensor {
    dim: usize,
    n: usize,
    coeffs: Vec<f64>,
}

impl TaylorTensor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficient for multi-index `k`; zero beyond the interpolation degree.
    pub fn get(&self, k: &[usize]) -> f64 {
        debug_assert_eq!(k.len(), self.dim);
        if k.iter().any(|&ki| ki >= self.n) {
            return 0.0;
        }
        let mut flat = 0;
        for &ki in k.iter().rev() {
            flat = flat * self.n + ki;
        }
        self.coeffs[flat]
    }
}

/// Tensor version of [`taylor_1d`] on `[-delta, delta]^dim` with `n` nodes per axis.
pub fn taylor_tensor(
    mut f: impl FnMut(&[f64]) -> f64,
    dim: usize,
    delta: f64,
    n: usize,
) -> TaylorTensor {
    let nodes = chebyshev_nodes(n);
    let total = n.pow(dim as u32);
    let mut data = vec![0.0; total];
    let mut point = vec![0.0; dim];
    for (flat, slot) in data.iter_mut().enumerate() {
        let mut r = flat;
        for p in point.iter_mut() {
            *p = delta * nodes[r % n];
            r /= n;
        }
        *slot = f(&point);
    }
    // Transform along each axis in turn; axis `a` has stride n^a.
    for axis in 0..dim {
        let stride = n.pow(axis as u32);
        let mut line = vec![0.0; n];
        for base in 0..total {
            if (base / stride) % n != 0 {
                continue;
            }
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[base + j * stride];
            }
            let mono = chebyshev_to_monomial(&chebyshev_transform(&line));
            for (p, m) in mono.iter().enumerate() {
                data[base + p * stride] = m / delta.powi(p as i32);
            }
        }
    }
    TaylorTensor { dim, n, coeffs: data }
}

/// Taylor coefficients up to total order `max_order`, calibrated per
/// multi-index over half-widths `delta_max·2^{-k}` as in
/// [`taylor_1d_calibrated`].
#[derive(Debug, Clone)]
pub struct CalibratedTaylor {
    dim: usize,
    side: usize,
    values: Vec<f64>,
    errors: Vec<f64>,
}

impl CalibratedTaylor {
    fn flat(&self, k: &[usize]) -> Option<usize> {
        if k.iter().sum::<usize>() >= self.side {
            return None;
        }
        let mut flat = 0;
        for &ki in k.iter().rev() {
            flat = flat * self.side + ki;
        }
        Some(flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: &[usize]) -> f64 {
        self.flat(k).map_or(0.0, |i| self.values[i])
    }

    /// Disagreement between the two half-widths the value was taken from.
    pub fn error(&self, k: &[usize]) -> f64 {
        self.flat(k).map_or(f64::INFINITY, |i| self.errors[i])
    }
}

pub fn taylor_tensor_calibrated(
    mut f: impl FnMut(&[f64]) -> f64,
    dim: usize,
    delta_max: f64,
    max_order: usize,
    levels: usize,
) -> CalibratedTaylor {
    let levels = levels.max(2);
    let side = max_order + 1;
    let mut point = vec![0.0; dim];
    let tensors: Vec<TaylorTensor> = (0..levels)
        .map(|k| {
            let delta = delta_max / (1u64 << k) as f64;
            let mut n = max_order + 4;
            for axis in 0..dim {
                let m = resolved_node_count(
                    |x| {
                        point.iter_mut().for_each(|p| *p = 0.0);
                        point[axis] = x;
                        f(&point)
                    },
                    delta,
                    max_order + 4,
                );
                n = n.max(m);
            }
            taylor_tensor(&mut f, dim, delta, n)
        })
        .collect();
    let total = side.pow(dim as u32);
    let mut values = vec![0.0; total];
    let mut errors = vec![f64::INFINITY; total];
    let mut k = vec![0usize; dim];
    for flat in 0..total {
        let mut r = flat;
        for ki in k.iter_mut() {
            *ki = r % side;
            r /= side;
        }
        if k.iter().sum::<usize>() > max_order {
            continue;
        }
        for l in 0..levels - 1 {
            let diff = (tensors[l].get(&k) - tensors[l + 1].get(&k)).abs();
            if diff < errors[flat] {
                errors[flat] = diff;
                values[flat] = tensors[l].get(&k);
            }
        }
    }
    CalibratedTaylor { dim, side, values, errors }
}

/// All multi-indices of length `dim` with `|k| = order`, in lexicographic order.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    fill(&mut out, &mut current, 0, order);
    out
}

fn fill(out: &mut Vec<Vec<usize>>, current: &mut [usize], pos: usize, remaining: usize) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        fill(out, current, pos + 1, remaining - k);
    }
}
