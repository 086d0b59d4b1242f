//! Dense row-major `f64` matrices and the handful of kernels the encoder needs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics when `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        Self { rows, cols, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// Adds `s * v` into row `r`.
    pub fn add_row_scaled(&mut self, r: usize, v: &[f64], s: f64) {
        axpy(self.row_mut(r), s, v);
    }

    /// Copies the row range `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s * x`
#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// `x · w + bias` where `w` is `in × out` and `bias` is `1 × out`.
pub fn linear(x: &Matrix, w: &Matrix, bias: &Matrix) -> Matrix {
    assert_eq!(x.cols, w.rows, "linear: input width");
    assert_eq!(bias.len(), w.cols, "linear: bias width");
    let mut out = Matrix::zeros(x.rows, w.cols);
    for t in 0..x.rows {
        let orow = out.row_mut(t);
        orow.copy_from_slice(bias.as_slice());
        let xrow = x.row(t);
        for (i, &xv) in xrow.iter().enumerate() {
            if xv != 0.0 {
                axpy(orow, xv, w.row(i));
            }
        }
    }
    out
}

/// Backward of [`linear`]: accumulates into `dw`/`dbias`, returns `dx`.
pub fn linear_backward(x: &Matrix, w: &Matrix, dout: &Matrix, dw: &mut Matrix, dbias: &mut Matrix) -> Matrix {
    let mut dx = Matrix::zeros(x.rows, x.cols);
    for t in 0..x.rows {
        let drow = dout.row(t);
        axpy(dbias.as_mut_slice(), 1.0, drow);
        let xrow = x.row(t);
        for (i, &xv) in xrow.iter().enumerate() {
            axpy(dw.row_mut(i), xv, drow);
        }
        let dxrow = dx.row_mut(t);
        for (i, d) in dxrow.iter_mut().enumerate() {
            *d = dot(w.row(i), drow);
        }
    }
    dx
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_naive() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let w = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![3.0, -1.0, 1.0]]);
        let b = Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]);
        let y = linear(&x, &w, &b);
        assert_eq!(y.row(0), &[7.1, -1.8, 4.3]);
        assert!(y.row(1).iter().zip([0.6, -0.3, -1.2]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn log_sum_exp_is_shift_invariant() {
        let xs = [1.0, 2.0, 3.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1000.0).collect();
        assert!((log_sum_exp(&shifted) - 1000.0 - log_sum_exp(&xs)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[0.3, -2.0, 5.0, 5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p[2], p[3]);
    }
}
