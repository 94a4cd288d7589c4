use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix with at least one row and one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// `out += a * x`, unrolled by four so the compiler emits packed arithmetic.
#[inline]
fn axpy<T: Scalar>(out: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(out.len(), x.len());
    let mut o4 = out.chunks_exact_mut(4);
    let mut x4 = x.chunks_exact(4);
    for (o, x) in (&mut o4).zip(&mut x4) {
        o[0] += a * x[0];
        o[1] += a * x[1];
        o[2] += a * x[2];
        o[3] += a * x[3];
    }
    for (o, &x) in o4.into_remainder().iter_mut().zip(x4.remainder()) {
        *o += a * x;
    }
}

impl<T: Scalar> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("empty matrix shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Result<Self> {
        let owned: Vec<Vec<T>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| T::of(x)).collect())
            .collect();
        Self::from_rows(&owned)
    }

    pub fn scalar(value: T) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    /// The single entry of a 1x1 matrix.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product. Zero entries of `self` are skipped, which keeps
    /// products with sparse adjacency matrices cheap.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                axpy(out_row, a, &rhs.data[p * m..(p + 1) * m]);
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self · rhsᵀ` without materializing the transpose.
    pub fn matmul_t(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::Dimension {
                op: "matmul_t",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        // The row-axpy kernel in `matmul` vectorizes; a dot-product loop
        // over generic floats does not.
        self.matmul(&rhs.transpose())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.data[r * self.cols + c]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|r| self.row(r).iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (s, &x) in sums.iter_mut().zip(self.row(r)) {
                *s += x;
            }
        }
        sums
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Columns `cols` (in the given order) as a new matrix.
    pub fn select_cols(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::invalid("select_cols with no columns"));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::invalid(format!("column {bad} out of range {}", self.cols)));
        }
        let mut out = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            out.extend(cols.iter().map(|&c| row[c]));
        }
        Self::new(self.rows, cols.len(), out)
    }

    /// Rows `idx` (in the given order, repeats allowed) as a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::invalid("select_rows with no rows"));
        }
        let mut out = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            if r >= self.rows {
                return Err(Error::invalid(format!("row {r} out of range {}", self.rows)));
            }
            out.extend_from_slice(self.row(r));
        }
        Self::new(idx.len(), self.cols, out)
    }

    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_f64_rows(rows).unwrap()
    }

    #[test]
    fn identity_product() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.matmul(&Mat::identity(2)).unwrap(), a);
    }

    #[test]
    fn orthogonal_vectors() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[0.0], &[1.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[0.0]]));
    }

    #[test]
    fn matmul_shape_error() {
        let a = Mat::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn matmul_t_matches_transpose() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[0.5, -1.0, 2.0], &[3.0, 0.0, 1.0]]);
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(Mat::<f64>::new(0, 2, vec![]).is_err());
        assert!(Mat::<f64>::new(2, 2, vec![1.0]).is_err());
        assert!(Mat::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn selection() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.select_cols(&[2, 0]).unwrap(), m(&[&[3.0, 1.0], &[6.0, 4.0]]));
        assert_eq!(a.select_rows(&[1, 1]).unwrap(), m(&[&[4.0, 5.0, 6.0], &[4.0, 5.0, 6.0]]));
        assert_eq!(a.col_sums(), vec![5.0, 7.0, 9.0]);
    }
}
