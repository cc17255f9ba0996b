//! Dense row-major `f64` matrices.
//!
//! This is the single numeric carrier of the engine. Shapes stay in the
//! thousands, so everything is a plain `Vec<f64>` with explicit dimensions;
//! the three GEMM variants needed by backpropagation are routed through
//! `matrixmultiply::dgemm` (single-threaded, bit-deterministic on one
//! platform).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dimension(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("len {}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::dimension(
                    format!("Matrix::from_rows row {i}"),
                    cols,
                    r.len(),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(n, cols, data)
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

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dimension(
                "matmul",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            [self.cols as isize, 1],
            &other.data,
            [other.cols as isize, 1],
            0.0,
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ · other`, accumulated into `out` (`out += selfᵀ·other`).
    ///
    /// This is the weight-gradient contraction: `dW += xᵀ·dy`.
    pub fn t_matmul_acc(&self, other: &Matrix, out: &mut Matrix) -> Result<()> {
        if self.rows != other.rows || out.rows != self.cols || out.cols != other.cols {
            return Err(Error::dimension(
                "t_matmul_acc",
                format!("{}x{} . {}x{}", self.cols, self.rows, other.rows, other.cols),
                format!("out {}x{}", out.rows, out.cols),
            ));
        }
        gemm(
            self.cols,
            self.rows,
            other.cols,
            &self.data,
            [1, self.cols as isize],
            &other.data,
            [other.cols as isize, 1],
            1.0,
            &mut out.data,
        );
        Ok(())
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dimension(
                "matmul_t",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{} (transposed)", other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            &self.data,
            [self.cols as isize, 1],
            &other.data,
            [1, other.cols as isize],
            0.0,
            &mut out.data,
        );
        Ok(out)
    }

    /// Adds `row` to every row of `self`.
    pub fn add_row_broadcast(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::dimension("add_row_broadcast", self.cols, row.len()));
        }
        for r in 0..self.rows {
            let base = r * self.cols;
            for (c, &v) in row.iter().enumerate() {
                self.data[base + c] += v;
            }
        }
        Ok(())
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            let base = r * self.cols;
            for (c, s) in sums.iter_mut().enumerate() {
                *s += self.data[base + c];
            }
        }
        sums
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// New matrix made of the given rows, in order (repeats allowed).
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }

    /// `self.row(idx[r]) += src.row(r)` for every r.
    pub fn scatter_add_rows(&mut self, idx: &[usize], src: &Matrix) {
        debug_assert_eq!(idx.len(), src.rows);
        debug_assert_eq!(self.cols, src.cols);
        for (r, &i) in idx.iter().enumerate() {
            let dst = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (d, &s) in dst.iter_mut().zip(src.row(r)) {
                *d += s;
            }
        }
    }

    /// Columnwise concatenation `[a ‖ b]`.
    pub fn hconcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows != b.rows {
            return Err(Error::dimension("hconcat", a.rows, b.rows));
        }
        let cols = a.cols + b.cols;
        let mut out = Matrix::zeros(a.rows, cols);
        for r in 0..a.rows {
            out.data[r * cols..r * cols + a.cols].copy_from_slice(a.row(r));
            out.data[r * cols + a.cols..(r + 1) * cols].copy_from_slice(b.row(r));
        }
        Ok(out)
    }

    /// Splits columns at `at`: returns (left `[.. at]`, right `[at ..]`).
    pub fn split_cols(&self, at: usize) -> (Matrix, Matrix) {
        assert!(at <= self.cols);
        let mut left = Matrix::zeros(self.rows, at);
        let mut right = Matrix::zeros(self.rows, self.cols - at);
        for r in 0..self.rows {
            left.row_mut(r).copy_from_slice(&self.row(r)[..at]);
            right.row_mut(r).copy_from_slice(&self.row(r)[at..]);
        }
        (left, right)
    }

    /// Stacks `a` on top of `b` (same column count).
    pub fn vconcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.cols != b.cols && a.rows > 0 && b.rows > 0 {
            return Err(Error::dimension("vconcat", a.cols, b.cols));
        }
        let cols = if a.rows > 0 { a.cols } else { b.cols };
        let mut data = Vec::with_capacity((a.rows + b.rows) * cols);
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Matrix {
            rows: a.rows + b.rows,
            cols,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Thin wrapper over `matrixmultiply::dgemm`: `c = alpha·a·b + beta·c`
/// with explicit [row, col] strides (alpha fixed to 1).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: [isize; 2],
    b: &[f64],
    b_strides: [isize; 2],
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides[0],
            a_strides[1],
            b.as_ptr(),
            b_strides[0],
            b_strides[1],
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 3.0], vec![5.0, 7.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[2.0, 3.0]);
    }

    #[test]
    fn matmul_identity() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = x.matmul(&Matrix::identity(2)).unwrap();
        assert_eq!(c.data(), x.data());
    }

    #[test]
    fn t_matmul_acc_matches_explicit_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![7.0], vec![8.0], vec![9.0]]).unwrap();
        let mut out = Matrix::zeros(2, 1);
        a.t_matmul_acc(&b, &mut out).unwrap();
        // aᵀ·b = [[1,3,5],[2,4,6]]·[7,8,9]ᵀ = [76, 100]
        assert_eq!(out.data(), &[76.0, 100.0]);
        // accumulation
        a.t_matmul_acc(&b, &mut out).unwrap();
        assert_eq!(out.data(), &[152.0, 200.0]);
    }

    #[test]
    fn matmul_t_small() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        // a·bᵀ = [1*3+2*4, 1*5+2*6] = [11, 17]
        let c = a.matmul_t(&b).unwrap();
        assert_eq!(c.data(), &[11.0, 17.0]);
    }

    #[test]
    fn empty_batch_matmul() {
        let x = Matrix::zeros(0, 3);
        let w = Matrix::zeros(3, 4);
        let y = x.matmul(&w).unwrap();
        assert_eq!(y.shape(), (0, 4));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 5);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x5"), "{msg}");
    }

    #[test]
    fn hconcat_split_roundtrip() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = Matrix::hconcat(&a, &b).unwrap();
        let (l, r) = c.split_cols(2);
        assert_eq!(l, a);
        assert_eq!(r, b);
    }
}
