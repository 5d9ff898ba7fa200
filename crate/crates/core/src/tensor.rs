//! Dense row-major `f64` matrices and the handful of kernels the transformer
//! and the analysis code need.
//!
//! Every reduction runs left to right over a fixed index order; there is no
//! reassociation and no parallel reduction, so results are bit-stable across
//! runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Wrap a row-major buffer. Fails if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Multiply every entry by `factor`.
    pub fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Multiply column `c` in place by `factor`.
    pub fn scale_column(&mut self, c: usize, factor: f64) {
        for r in 0..self.rows {
            self.data[r * self.cols + c] *= factor;
        }
    }

    /// Overwrite column `c` with exact zeros.
    pub fn zero_column(&mut self, c: usize) {
        for r in 0..self.rows {
            self.data[r * self.cols + c] = 0.0;
        }
    }

    /// Euclidean norm of column `c`.
    pub fn column_norm(&self, c: usize) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.rows {
            let v = self.get(r, c);
            acc += v * v;
        }
        acc.sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Columns `start..end` as a new matrix.
    pub fn column_slice(&self, start: usize, end: usize) -> Matrix {
        let width = end - start;
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Matrix product with the inner dimension summed strictly left to right.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.cols {
            let mut acc = 0.0;
            for (k, av) in a_row.iter().enumerate() {
                acc += av * b.data[k * b.cols + j];
            }
            out.data[i * b.cols + j] = acc;
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "matmul_transposed of {}x{} by ({}x{})ᵀ",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            let b_row = b.row(j);
            let mut acc = 0.0;
            for k in 0..a.cols {
                acc += a_row[k] * b_row[k];
            }
            out.data[i * b.rows + j] = acc;
        }
    }
    Ok(out)
}

/// Elementwise `a + b`.
pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    zip_with(a, b, |x, y| x + y)
}

/// Elementwise `a - b`.
pub fn sub(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    zip_with(a, b, |x, y| x - y)
}

fn zip_with(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "elementwise op on {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect();
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// In-place softmax of one slice with max subtraction.
fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Row-wise softmax under a causal mask: row `i` is normalised over columns
/// `0..=i` and every entry above the diagonal is exactly zero. Requires a
/// square matrix.
pub fn causal_softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.rows != m.cols {
        return Err(Error::Shape(format!(
            "causal softmax needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    let mut out = m.clone();
    let n = out.cols;
    for r in 0..out.rows {
        let row = out.row_mut(r);
        softmax_in_place(&mut row[..=r]);
        row[r + 1..n].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(out)
}

/// Euclidean distance between two vectors.
pub fn l2_dist(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "l2_dist of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Entrywise L1 norm (sum of absolute values).
pub fn l1_norm(m: &Matrix) -> f64 {
    m.data.iter().map(|v| v.abs()).sum()
}

/// Per-row layer normalisation with gain and bias vectors of length `cols`.
pub fn layer_norm_rows(m: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix> {
    if gain.len() != m.cols || bias.len() != m.cols {
        return Err(Error::Shape(format!(
            "layer norm parameters of length {}/{} for width {}",
            gain.len(),
            bias.len(),
            m.cols
        )));
    }
    let n = m.cols as f64;
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for (c, x) in row.iter_mut().enumerate() {
            *x = (*x - mean) * inv * gain[c] + bias[c];
        }
    }
    Ok(out)
}

/// Add a bias vector to every row.
pub fn add_row_bias(m: &mut Matrix, bias: &[f64]) -> Result<()> {
    if bias.len() != m.cols {
        return Err(Error::Shape(format!(
            "bias of length {} for width {}",
            bias.len(),
            m.cols
        )));
    }
    for r in 0..m.rows {
        for (x, b) in m.row_mut(r).iter_mut().zip(bias) {
            *x += b;
        }
    }
    Ok(())
}

/// GELU, tanh approximation. `gelu(0) == 0` exactly.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Numerically stable `ln Σ exp(x)` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
