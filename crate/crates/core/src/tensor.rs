//! Dense matrices and rank-3 tensors, row-stochastic normalization and the
//! least-squares solver used by the pooling stage.

use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums of a stochastic matrix must land within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("row {0} sums to zero")]
    ZeroRow(usize),
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("ragged input: row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("least-squares system must have at least as many equations as unknowns ({rows} < {cols})")]
    Underdetermined { rows: usize, cols: usize },
}

pub(crate) fn shape_err(expected: impl fmt::Display, got: impl fmt::Display) -> TensorError {
    TensorError::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Dense row-major matrix of `f64`.
///
/// Serializes as an array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(shape_err(format!("{} entries", rows * cols), data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(TensorError::Ragged {
                    row: i,
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Borrowed view of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != rhs.rows {
            return Err(shape_err(
                format!("lhs cols == rhs rows ({})", self.cols),
                rhs.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(l);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v·M`.
    pub fn left_mul(&self, v: &[f64]) -> Result<Vec<f64>, TensorError> {
        if v.len() != self.rows {
            return Err(shape_err(format!("vector of length {}", self.rows), v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &a) in v.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o += a * b;
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `M·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, TensorError> {
        if v.len() != self.cols {
            return Err(shape_err(format!("vector of length {}", self.cols), v.len()));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = TensorError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(&rows)
    }
}

/// Dense rank-3 tensor indexed `[a, b, c]`, stored with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<Vec<f64>>>", try_from = "Vec<Vec<Vec<f64>>>")]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Tensor3 {
            dims: (d0, d1, d2),
            data: vec![0.0; d0 * d1 * d2],
        }
    }

    pub fn from_fn(
        d0: usize,
        d1: usize,
        d2: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(d0 * d1 * d2);
        for a in 0..d0 {
            for b in 0..d1 {
                for c in 0..d2 {
                    data.push(f(a, b, c));
                }
            }
        }
        Tensor3 {
            dims: (d0, d1, d2),
            data,
        }
    }

    /// Stacks matrices along the first axis; every slice must share a shape.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self, TensorError> {
        let (d1, d2) = slices.first().map(|m| m.shape()).unwrap_or((0, 0));
        let mut data = Vec::with_capacity(slices.len() * d1 * d2);
        for m in slices {
            if m.shape() != (d1, d2) {
                return Err(shape_err(format!("{d1}x{d2} slice"), format!("{:?}", m.shape())));
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(Tensor3 {
            dims: (slices.len(), d1, d2),
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, a: usize, b: usize, c: usize) -> usize {
        debug_assert!(a < self.dims.0 && b < self.dims.1 && c < self.dims.2);
        (a * self.dims.1 + b) * self.dims.2 + c
    }

    /// Copy of `T[a, :, :]`.
    pub fn slice0(&self, a: usize) -> Matrix {
        let len = self.dims.1 * self.dims.2;
        Matrix {
            rows: self.dims.1,
            cols: self.dims.2,
            data: self.data[a * len..(a + 1) * len].to_vec(),
        }
    }

    /// Copy of `T[:, b, :]`.
    pub fn slice1(&self, b: usize) -> Matrix {
        Matrix::from_fn(self.dims.0, self.dims.2, |a, c| self[(a, b, c)])
    }

    /// Copy of the page `T[:, :, c]`.
    pub fn page(&self, c: usize) -> Matrix {
        Matrix::from_fn(self.dims.0, self.dims.1, |a, b| self[(a, b, c)])
    }

    pub fn set_page(&mut self, c: usize, page: &Matrix) -> Result<(), TensorError> {
        if page.shape() != (self.dims.0, self.dims.1) {
            return Err(shape_err(
                format!("{}x{} page", self.dims.0, self.dims.1),
                format!("{:?}", page.shape()),
            ));
        }
        for a in 0..self.dims.0 {
            for b in 0..self.dims.1 {
                self[(a, b, c)] = page[(a, b)];
            }
        }
        Ok(())
    }

    pub fn set_slice0(&mut self, a: usize, slice: &Matrix) -> Result<(), TensorError> {
        if slice.shape() != (self.dims.1, self.dims.2) {
            return Err(shape_err(
                format!("{}x{} slice", self.dims.1, self.dims.2),
                format!("{:?}", slice.shape()),
            ));
        }
        let len = self.dims.1 * self.dims.2;
        self.data[a * len..(a + 1) * len].copy_from_slice(slice.as_slice());
        Ok(())
    }

    /// Swaps the first two axes: `out[b, a, c] = self[a, b, c]`.
    pub fn swap01(&self) -> Tensor3 {
        let (d0, d1, d2) = self.dims;
        Tensor3::from_fn(d1, d0, d2, |b, a, c| self[(a, b, c)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3, TensorError> {
        if self.dims != other.dims {
            return Err(shape_err(format!("{:?}", self.dims), format!("{:?}", other.dims)));
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    fn index(&self, (a, b, c): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(a, b, c)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (a, b, c): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(a, b, c);
        &mut self.data[o]
    }
}

impl From<Tensor3> for Vec<Vec<Vec<f64>>> {
    fn from(t: Tensor3) -> Self {
        (0..t.dims.0).map(|a| t.slice0(a).to_rows()).collect()
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for Tensor3 {
    type Error = TensorError;

    fn try_from(v: Vec<Vec<Vec<f64>>>) -> Result<Self, Self::Error> {
        let slices = v
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>, _>>()?;
        Tensor3::from_slices(&slices)
    }
}

/// A nonnegative matrix whose rows each sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix(Matrix);

impl StochasticMatrix {
    /// Wraps `m` after checking nonnegativity and unit row sums.
    pub fn try_new(m: Matrix) -> Result<Self, TensorError> {
        check_nonnegative(&m)?;
        for (i, s) in m.row_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TensorError::ZeroRow(i));
            }
        }
        Ok(StochasticMatrix(m))
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for StochasticMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

fn check_nonnegative(m: &Matrix) -> Result<(), TensorError> {
    if !m.is_finite() {
        return Err(TensorError::NonFinite);
    }
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if v < 0.0 {
                return Err(TensorError::NegativeEntry { row: i, col: j, value: v });
            }
        }
    }
    Ok(())
}

/// Divides every row by its sum.
pub fn normalize_rows(m: &Matrix) -> Result<StochasticMatrix, TensorError> {
    check_nonnegative(m)?;
    let mut out = m.clone();
    for i in 0..out.rows() {
        let s: f64 = out.row(i).iter().sum();
        if s <= 0.0 {
            return Err(TensorError::ZeroRow(i));
        }
        for v in out.row_mut(i) {
            *v /= s;
        }
    }
    Ok(StochasticMatrix(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Numerical rank of the system matrix.
    pub rank: usize,
    /// `‖Mx − a‖₂` at the returned solution.
    pub residual: f64,
}

/// Minimum-norm least-squares solution of `Mx ≈ a` via SVD.
pub fn lstsq(m: &Matrix, a: &[f64]) -> Result<LstsqSolution, TensorError> {
    if !m.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite);
    }
    if a.len() != m.rows() {
        return Err(shape_err(format!("rhs of length {}", m.rows()), a.len()));
    }
    if m.rows() < m.cols() {
        return Err(TensorError::Underdetermined {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.cols() == 0 {
        return Ok(LstsqSolution {
            x: Vec::new(),
            rank: 0,
            residual: a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
    }
    let svd = m.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * m.rows().max(m.cols()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let rhs = DVector::from_column_slice(a);
    // tol is strictly positive unless M is all zeros, in which case x = 0.
    let x: Vec<f64> = if smax == 0.0 {
        vec![0.0; m.cols()]
    } else {
        svd.solve(&rhs, tol)
            .expect("u and v_t were requested")
            .iter()
            .copied()
            .collect()
    };
    let fitted = m.mul_vec(&x)?;
    let residual = fitted
        .iter()
        .zip(a)
        .map(|(f, t)| (f - t) * (f - t))
        .sum::<f64>()
        .sqrt();
    Ok(LstsqSolution { x, rank, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_rows_divides_by_sum() {
        let m = Matrix::from_rows(&[[2.0, 2.0], [1.0, 3.0]]).unwrap();
        let s = normalize_rows(&m).unwrap();
        assert_eq!(s.to_rows(), vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
    }

    #[test]
    fn normalize_rows_identity_is_fixed() {
        let id = Matrix::identity(3);
        assert_eq!(*normalize_rows(&id).unwrap(), id);
    }

    #[test]
    fn normalize_rows_rejects_zero_row() {
        let m = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(normalize_rows(&m).unwrap_err(), TensorError::ZeroRow(0));
    }

    #[test]
    fn normalize_rows_rejects_negative() {
        let m = Matrix::from_rows(&[[1.0, -0.5]]).unwrap();
        assert!(matches!(
            normalize_rows(&m),
            Err(TensorError::NegativeEntry { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn lstsq_exact_solve() {
        let sol = lstsq(&Matrix::identity(2), &[3.0, 4.0]).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-14 && (sol.x[1] - 4.0).abs() < 1e-14);
        assert_eq!(sol.rank, 2);
    }

    #[test]
    fn lstsq_inconsistent_system_gives_mean() {
        let m = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let sol = lstsq(&m, &[1.0, 3.0]).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-14);
        assert!((sol.residual - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lstsq_rank_deficient_is_minimum_norm() {
        // x + y = 2 twice: minimum-norm answer is (1, 1).
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let sol = lstsq(&m, &[2.0, 2.0]).unwrap();
        assert_eq!(sol.rank, 1);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_rejects_nan() {
        let m = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert_eq!(lstsq(&m, &[1.0]).unwrap_err(), TensorError::NonFinite);
        assert_eq!(
            lstsq(&Matrix::identity(1), &[f64::INFINITY]).unwrap_err(),
            TensorError::NonFinite
        );
    }

    #[test]
    fn lstsq_normal_equations_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sol = lstsq(&m, &a).unwrap();
            let r: Vec<f64> = m
                .mul_vec(&sol.x)
                .unwrap()
                .iter()
                .zip(&a)
                .map(|(f, t)| f - t)
                .collect();
            let g = m.transpose().mul_vec(&r).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
        }
    }

    #[test]
    fn tensor_roundtrips_through_serde() {
        let t = Tensor3::from_fn(2, 3, 4, |a, b, c| (a * 100 + b * 10 + c) as f64);
        let json = serde_json::to_string(&t).unwrap();
        let back: Tensor3 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.page(2)[(1, 2)], 122.0);
        assert_eq!(t.swap01()[(2, 1, 3)], 123.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            Matrix::try_from(rows),
            Err(TensorError::Ragged { row: 1, .. })
        ));
    }
}
