//! Small dense symmetric matrices.
//!
//! Dimensions here are the rank of the character torus (at most `2g`), so
//! everything is a plain row-major `Vec<f64>` with O(d³) factorizations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Symmetric `d × d` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, checking shape and symmetry.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidModel(alloc::format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("matrix has non-finite entries".into()));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidModel("matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            data[i * dim + i] = v;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let mut r = 0.0;
            for (m, xj) in row.iter().zip(x) {
                r += m * xj;
            }
            acc += x[i] * r;
        }
        acc
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            *o = row.iter().zip(x).map(|(m, xj)| m * xj).sum();
        }
    }

    /// Lower Cholesky factor, or `None` when the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Cholesky> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) {
                return None;
            }
            let djj = diag.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { dim: n, lower: l })
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Determinant via Cholesky when positive definite, Gaussian elimination otherwise.
    pub fn determinant(&self) -> f64 {
        if let Some(c) = self.cholesky() {
            return c.determinant();
        }
        general_determinant(self.dim, &self.data)
    }

    /// `Lᵀ M L` for a square row-major `L`.
    pub fn congruence(&self, l: &[f64]) -> Self {
        let n = self.dim;
        let mut ml = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                ml[i * n + j] = (0..n).map(|k| self.get(i, k) * l[k * n + j]).sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| l[k * n + i] * ml[k * n + j]).sum();
            }
        }
        // symmetrize roundoff
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (out[i * n + j] + out[j * n + i]);
                out[i * n + j] = avg;
                out[j * n + i] = avg;
            }
        }
        Self { dim: n, data: out }
    }
}

/// Lower-triangular factor `R` with `M = R Rᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn determinant(&self) -> f64 {
        let d: f64 = (0..self.dim).map(|i| self.lower[i * self.dim + i]).product();
        d * d
    }

    /// Solves `Rᵀ x = θ`, i.e. the whitening map `ξ = R⁻ᵀ θ` under which
    /// `ξᵀ M ξ = ‖θ‖²`.
    pub fn whiten(&self, theta: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut s = theta[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * out[k];
            }
            out[i] = s / self.lower[i * n + i];
        }
    }
}

/// Determinant of a general square row-major matrix.
pub fn general_determinant(dim: usize, data: &[f64]) -> f64 {
    let n = dim;
    let mut a = data.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let factor = a[r * n + col] / p;
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
        }
    }
    det
}

/// Least-squares coefficients for `Σ_j x_j·columns[j] ≈ rhs`, by modified
/// Gram–Schmidt on unit-scaled columns. `None` if the columns are
/// numerically dependent.
pub fn least_squares(columns: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let p = columns.len();
    let rows = rhs.len();
    if columns.iter().any(|c| c.len() != rows) || rows < p {
        return None;
    }
    let scale: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if scale.iter().any(|&s| !(s > 0.0)) {
        return None;
    }
    let mut q: Vec<Vec<f64>> = columns.iter().zip(&scale).map(|(c, s)| c.iter().map(|v| v / s).collect()).collect();
    let mut r = vec![0.0; p * p];
    for j in 0..p {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i * p + j] = dot;
            let (head, tail) = q.split_at_mut(j);
            for (v, w) in tail[0].iter_mut().zip(&head[i]) {
                *v -= dot * w;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-13 {
            return None;
        }
        r[j * p + j] = norm;
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut x: Vec<f64> = (0..p).map(|j| q[j].iter().zip(rhs).map(|(a, b)| a * b).sum()).collect();
    for j in (0..p).rev() {
        for k in j + 1..p {
            x[j] -= r[j * p + k] * x[k];
        }
        x[j] /= r[j * p + j];
    }
    Some(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_combination() {
        let t: Vec<f64> = (1..40).map(|i| i as f64 * 0.25).collect();
        let cols = vec![vec![1.0; t.len()], t.iter().map(|x| 1.0 / x).collect(), t.iter().map(|x| x.sqrt()).collect()];
        let rhs: Vec<f64> = t.iter().map(|x| 2.0 - 3.0 / x + 0.5 * x.sqrt()).collect();
        let c = least_squares(&cols, &rhs).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 3.0).abs() < 1e-12 && (c[2] - 0.5).abs() < 1e-12);
        assert!(least_squares(&[vec![1.0; 3], vec![2.0; 3]], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn cholesky_determinant_matches_elimination() {
        let m = SymMatrix::from_row_major(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let d1 = m.determinant();
        let d2 = general_determinant(3, m.as_row_major());
        assert!((d1 - d2).abs() < 1e-12 * d2.abs());
    }

    #[test]
    fn whitening_diagonalizes_form() {
        let m = SymMatrix::from_row_major(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let c = m.cholesky().unwrap();
        let theta = [0.7, -1.3];
        let mut xi = [0.0; 2];
        c.whiten(&theta, &mut xi);
        let q = m.quadratic_form(&xi);
        assert!((q - (0.49 + 1.69)).abs() < 1e-13);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let m = SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(!m.is_positive_definite());
        assert!(SymMatrix::from_row_major(2, vec![1.0, 0.1, 0.2, 1.0]).is_err());
        assert!(SymMatrix::from_row_major(2, vec![1.0, 0.0, 0.0]).is_err());
    }
}
