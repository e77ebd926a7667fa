//! Polynomial extrapolation to the origin (Richardson via Neville's scheme).

use alloc::vec::Vec;

/// Neville tableau extrapolating `y(x)` to `x = 0`.
///
/// Returns the diagonal: entry `p` is the value at 0 of the degree-`p`
/// interpolant through the first `p + 1` points.
pub fn neville_to_zero(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let mut p: Vec<f64> = ys.to_vec();
    let mut diag = Vec::with_capacity(n);
    if n == 0 {
        return diag;
    }
    diag.push(p[0]);
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
        diag.push(p[0]);
    }
    diag
}
