//! Dense row-major `f64` matrices.
//!
//! [`Tensor2`] is the single numeric carrier in the crate: a `1 x n` matrix
//! stands in for a vector, a `1 x 1` matrix for a scalar. Every routine here
//! is a plain value-to-value function; the differentiable versions on
//! [`Tape`](super::Tape) call into these for their forward pass.

use std::fmt;

use crate::error::{Error, Result, Shape};

#[derive(Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "tensor {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor2 {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Tensor2 {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Validation(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
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
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected a 1x1 tensor, got {}",
                self.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Tensor2> {
        if rows * cols != self.len() {
            return Err(Error::dim("reshape", self.shape(), Shape(rows, cols)));
        }
        Ok(Tensor2 {
            rows,
            cols,
            data: self.data.clone(),
        })
    }

    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul", self.shape(), other.shape()));
        }
        let (p, q, r) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let out_row = &mut out[i * r..(i + 1) * r];
            for k in 0..q {
                let a = self.data[i * q + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * r..(k + 1) * r];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor2 {
            rows: p,
            cols: r,
            data: out,
        })
    }

    pub fn transpose(&self) -> Tensor2 {
        Tensor2::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn zip_with(
        &self,
        other: &Tensor2,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor2> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        self.map(|v| v * s)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim("add_assign", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &Tensor2) -> Result<Tensor2> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::dim("add_row", self.shape(), row.shape()));
        }
        let mut out = self.clone();
        for r in out.data.chunks_mut(self.cols.max(1)) {
            for (a, b) in r.iter_mut().zip(&row.data) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Sum of all entries, accumulated in row-major order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column sums as a `1 x cols` row.
    pub fn col_sums(&self) -> Tensor2 {
        let mut out = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        Tensor2 {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for Tensor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor2[{}x{}]", self.rows, self.cols)?;
        f.debug_list().entries(self.iter_rows()).finish()
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(m: &Tensor2) -> Tensor2 {
    let mut out = m.clone();
    let cols = m.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Circulant ("recurrent") matrix of a `1 x d` vector.
///
/// Row 0 is `v`; each following row is the previous one rotated left by one,
/// so `A[i][j] = v[(i + j) mod d]`. With this convention the matrix is also
/// symmetric.
pub fn recur(v: &Tensor2) -> Result<Tensor2> {
    if v.rows() != 1 {
        return Err(Error::dim("recur", v.shape(), Shape(1, v.cols())));
    }
    let d = v.cols();
    if d == 0 {
        return Err(Error::EmptyInput("recur"));
    }
    let x = v.data();
    Ok(Tensor2::from_fn(d, d, |i, j| x[(i + j) % d]))
}

/// Left zero-padding for a temporal window of width `window`.
///
/// Odd widths pad symmetrically; even widths put the extra zero on the right.
pub fn conv_left_pad(window: usize) -> usize {
    (window - 1) / 2
}

/// Mean over timesteps of the zero-padded sliding windows of `seq`.
///
/// Returns a `1 x (window * features)` row whose slot `s` block is the mean of
/// the timestep that sits at offset `s` of every window. Because the
/// convolution is linear, multiplying this row by the kernel gives exactly the
/// mean of the per-window outputs.
pub fn mean_window(seq: &Tensor2, window: usize) -> Result<Tensor2> {
    let (t_len, f) = (seq.rows(), seq.cols());
    if t_len == 0 {
        return Err(Error::EmptyInput("temporal convolution"));
    }
    if window == 0 {
        return Err(Error::Config("convolution window must be >= 1".into()));
    }
    let left = conv_left_pad(window);
    let mut out = vec![0.0; window * f];
    for s in 0..window {
        let lo = s.saturating_sub(left);
        let hi = (t_len + s).saturating_sub(left).min(t_len);
        let block = &mut out[s * f..(s + 1) * f];
        for t in lo..hi {
            for (o, v) in block.iter_mut().zip(seq.row(t)) {
                *o += v;
            }
        }
    }
    let inv = 1.0 / t_len as f64;
    for v in &mut out {
        *v *= inv;
    }
    Tensor2::new(1, window * f, out)
}

/// Temporal convolution (window `w`, symmetric zero padding, output length
/// `T`) followed by mean pooling over time.
///
/// `kernel` is `(w * f) x d` and maps a flattened window to one output step;
/// `bias` is `1 x d`.
pub fn temporal_conv1d_meanpool(
    seq: &Tensor2,
    kernel: &Tensor2,
    bias: &Tensor2,
) -> Result<Tensor2> {
    let window = conv_window(seq, kernel, bias)?;
    mean_window(seq, window)?.matmul(kernel)?.add(bias)
}

/// Validates conv shapes and returns the window width.
pub(crate) fn conv_window(seq: &Tensor2, kernel: &Tensor2, bias: &Tensor2) -> Result<usize> {
    if seq.rows() == 0 {
        return Err(Error::EmptyInput("temporal convolution"));
    }
    let f = seq.cols();
    if f == 0 || kernel.rows() == 0 || !kernel.rows().is_multiple_of(f) {
        return Err(Error::dim("conv1d kernel", seq.shape(), kernel.shape()));
    }
    if bias.rows() != 1 || bias.cols() != kernel.cols() {
        return Err(Error::dim("conv1d bias", kernel.shape(), bias.shape()));
    }
    Ok(kernel.rows() / f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let m = t(&[&[1.0, -2.0, 3.0], &[0.5, 4.0, 7.0], &[9.0, 1.0, -1.0]]);
        assert_eq!(Tensor2::identity(3).matmul(&m).unwrap(), m);

        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), t(&[&[17.0], &[39.0]]));

        let any = Tensor2::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.5);
        assert_eq!(
            Tensor2::zeros(2, 3).matmul(&any).unwrap(),
            Tensor2::zeros(2, 4)
        );
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor2::zeros(2, 3).matmul(&Tensor2::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3 vs 2x3"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&t(&[&[0.0, 0.0, 0.0]]));
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        for c in [-50.0, 0.0, 3.25, 700.0] {
            let s = softmax_rows(&t(&[&[c, c + 2f64.ln()]]));
            assert!((s.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
            assert!((s.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        }
        let s = softmax_rows(&t(&[&[1000.0, 0.0]]));
        assert!(s.is_finite());
        assert_eq!(s.get(0, 0), 1.0);
        assert!(s.get(0, 1) >= 0.0 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        let tiny = sigmoid(-709.0);
        assert!(tiny > 0.0 && tiny <= 1e-300 && tiny.is_finite());
        // e^-709 = 1.216780750623423e-308 to double precision
        assert!((tiny / 1.216_780_750_623_423e-308 - 1.0).abs() < 1e-12);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn elementwise_examples() {
        let m = t(&[&[1.5, -2.0], &[0.0, 8.0]]);
        assert_eq!(m.mul(&Tensor2::ones(2, 2)).unwrap(), m);
        assert!(m.add(&Tensor2::ones(1, 2)).is_err());
        assert_eq!(m.scale(2.0).get(1, 1), 16.0);
    }

    #[test]
    fn recur_examples() {
        assert_eq!(recur(&Tensor2::scalar(4.0)).unwrap(), Tensor2::scalar(4.0));
        let a = recur(&Tensor2::row_vector(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(a, t(&[&[1.0, 2.0, 3.0], &[2.0, 3.0, 1.0], &[3.0, 1.0, 2.0]]));
        assert!(matches!(
            recur(&Tensor2::zeros(1, 0)),
            Err(Error::EmptyInput(_))
        ));
    }

    /// Per-window convolution then mean, written out directly.
    fn conv_oracle(seq: &Tensor2, kernel: &Tensor2, bias: &Tensor2) -> Tensor2 {
        let (t_len, f) = (seq.rows(), seq.cols());
        let w = kernel.rows() / f;
        let left = (w - 1) / 2;
        let d = kernel.cols();
        let mut acc = vec![0.0; d];
        for t in 0..t_len {
            let mut window = vec![0.0; w * f];
            for s in 0..w {
                let src = t as isize + s as isize - left as isize;
                if src >= 0 && (src as usize) < t_len {
                    window[s * f..(s + 1) * f].copy_from_slice(seq.row(src as usize));
                }
            }
            for (j, out) in acc.iter_mut().enumerate() {
                let mut y = bias.get(0, j);
                for (i, x) in window.iter().enumerate() {
                    y += x * kernel.get(i, j);
                }
                *out += y;
            }
        }
        Tensor2::row_vector(&acc.iter().map(|v| v / t_len as f64).collect::<Vec<_>>())
    }

    #[test]
    fn conv_identity_case() {
        let x = t(&[&[0.25, -1.0, 3.0]]);
        let out = temporal_conv1d_meanpool(&x, &Tensor2::identity(3), &Tensor2::zeros(1, 3)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_zero_kernel_gives_bias() {
        let x = Tensor2::from_fn(5, 2, |i, j| (i + 3 * j) as f64);
        let b = Tensor2::row_vector(&[0.5, -1.5, 2.0]);
        let out = temporal_conv1d_meanpool(&x, &Tensor2::zeros(6, 3), &b).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn conv_matches_per_window_oracle() {
        for (t_len, f, w, d) in [(1, 2, 3, 2), (4, 3, 3, 2), (5, 2, 4, 3), (2, 1, 5, 1), (6, 2, 1, 4)] {
            let seq = Tensor2::from_fn(t_len, f, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
            let kernel = Tensor2::from_fn(w * f, d, |i, j| ((i * 5 + j) % 7) as f64 * 0.3 - 1.0);
            let bias = Tensor2::from_fn(1, d, |_, j| j as f64 * 0.5);
            let got = temporal_conv1d_meanpool(&seq, &kernel, &bias).unwrap();
            let want = conv_oracle(&seq, &kernel, &bias);
            assert!(got.max_abs_diff(&want) < 1e-12, "T={t_len} f={f} w={w}");
        }
    }

    #[test]
    fn conv_constant_sequence_interior_window() {
        // With a constant sequence, each window fully inside the sequence
        // produces the same output; only edge windows see padding.
        let v = [1.5, -0.5];
        let seq = Tensor2::from_rows(&[v; 7]).unwrap();
        let kernel = Tensor2::from_fn(6, 3, |i, j| (i as f64 - j as f64) * 0.2);
        let bias = Tensor2::row_vector(&[0.1, 0.2, 0.3]);
        let interior = Tensor2::row_vector(&[v, v, v].concat())
            .matmul(&kernel)
            .unwrap()
            .add(&bias)
            .unwrap();
        let edge_lo = Tensor2::row_vector(&[[0.0, 0.0], v, v].concat())
            .matmul(&kernel)
            .unwrap()
            .add(&bias)
            .unwrap();
        let edge_hi = Tensor2::row_vector(&[v, v, [0.0, 0.0]].concat())
            .matmul(&kernel)
            .unwrap()
            .add(&bias)
            .unwrap();
        let want = interior
            .scale(5.0)
            .add(&edge_lo)
            .unwrap()
            .add(&edge_hi)
            .unwrap()
            .scale(1.0 / 7.0);
        let got = temporal_conv1d_meanpool(&seq, &kernel, &bias).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn conv_empty_sequence_errors() {
        let err = temporal_conv1d_meanpool(&Tensor2::zeros(0, 2), &Tensor2::zeros(6, 1), &Tensor2::zeros(1, 1));
        assert!(matches!(err, Err(Error::EmptyInput(_))));
    }
}
