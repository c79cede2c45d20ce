//! Small dense containers: symmetric forms and connection tables.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// An `n x n` symmetric matrix: a metric tensor, averaged metric or
/// Loewner form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBilinearForm {
    matrix: DMatrix<f64>,
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl SymmetricBilinearForm {
    /// Symmetrizes `matrix` after checking it is square and symmetric to
    /// within `1e-12` relative to its largest entry.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let scale = matrix.amax().max(1.0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::InvalidParameter(format!(
                "matrix not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(Self::from_matrix_symmetrized(matrix))
    }

    /// Takes `(A + A^T) / 2` without checking.
    pub fn from_matrix_symmetrized(matrix: DMatrix<f64>) -> Self {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        SymmetricBilinearForm { matrix: sym }
    }

    pub fn identity(n: usize) -> Self {
        SymmetricBilinearForm {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        SymmetricBilinearForm {
            matrix: DMatrix::identity(n, n) * c,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn apply(&self, v: &[f64], w: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        let w = DVector::from_column_slice(w);
        v.dot(&(&self.matrix * w))
    }

    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.apply(v, v)
    }

    /// Cholesky success is the positive-definiteness test.
    pub fn is_positive_definite(&self) -> bool {
        self.matrix.clone().cholesky().is_some()
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        match self.matrix.clone().cholesky() {
            Some(c) => Some(c.inverse()),
            None => self.matrix.clone().try_inverse(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn scale(&self, c: f64) -> Self {
        SymmetricBilinearForm {
            matrix: &self.matrix * c,
        }
    }

    /// `P^T A P`: the pull-back `(v, w) -> A(Pv, Pw)`.
    pub fn pull_back(&self, p: &DMatrix<f64>) -> Self {
        Self::from_matrix_symmetrized(p.transpose() * &self.matrix * p)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)]).collect())
            .collect()
    }
}

impl Serialize for SymmetricBilinearForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

/// Coefficients `T^i_{jk}` stored row-major in `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.n;
        self.data[(i * n + j) * n + k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest `|T^i_jk - T^i_kj|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..j {
                    worst = worst.max((self.get(i, j, k) - self.get(i, k, j)).abs());
                }
            }
        }
        worst
    }

    /// `(v, w) -> T^i_jk v^j w^k`.
    pub fn contract(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.get(i, j, k) * v[j] * w[k];
                    }
                }
                s
            })
            .collect()
    }

    /// Matrix `N^i_j = T^i_jk v^k`.
    pub fn contract_last(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| self.get(i, j, k) * v[k]).sum())
    }

    pub fn nested(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| self.get(i, j, k)).collect()).collect())
            .collect()
    }

    pub fn add_scaled(&mut self, other: &Christoffel, c: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }
}

impl Serialize for Christoffel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.nested().serialize(s)
    }
}

/// Berwald curvature components `G^i_{jkl}`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    n: usize,
    data: Vec<f64>,
}

impl Curvature {
    pub fn zeros(n: usize) -> Self {
        Curvature {
            n,
            data: vec![0.0; n.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.offset(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let o = self.offset(i, j, k, l);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest deviation from total symmetry in the lower indices.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        for (a, b, c) in [(j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                            worst = worst.max((v - self.get(i, a, b, c)).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Compensated (Neumaier) summation in the given order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric() {
        assert!(SymmetricBilinearForm::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        let f = SymmetricBilinearForm::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(f.is_positive_definite());
        assert_eq!(f.apply(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let g = SymmetricBilinearForm::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(!g.is_positive_definite());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn christoffel_contractions() {
        let t = Christoffel::from_fn(2, |i, j, k| (i + 2 * j + 3 * k) as f64);
        let v = [1.0, 2.0];
        let w = [0.5, -1.0];
        let c = t.contract(&v, &w);
        let n = t.contract_last(&w);
        for i in 0..2 {
            let s: f64 = (0..2).map(|j| n[(i, j)] * v[j]).sum();
            assert!((s - c[i]).abs() < 1e-14);
        }
    }
}
