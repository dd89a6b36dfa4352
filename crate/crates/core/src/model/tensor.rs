//! Dense row-major tensors and the handful of kernels the model needs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// A parameter tensor. The last dimension is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) for a `[fan_in, fan_out]` matrix.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
        Tensor::from_vec(&[fan_in, fan_out], data)
    }

    pub fn gaussian<R: Rng>(shape: &[usize], sigma: f64, rng: &mut R) -> Tensor {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        let data = (0..shape.iter().product()).map(|_| normal.sample(rng)).collect();
        Tensor::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A `rows × cols` activation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Mat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Horizontal concatenation `[self ; other]`.
    pub fn concat_cols(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for t in 0..self.rows {
            let row = out.row_mut(t);
            row[..self.cols].copy_from_slice(self.row(t));
            row[self.cols..].copy_from_slice(other.row(t));
        }
        out
    }

    /// Splits columns at `at`, the inverse of [`Mat::concat_cols`].
    pub fn split_cols(&self, at: usize) -> (Mat, Mat) {
        let mut a = Mat::zeros(self.rows, at);
        let mut b = Mat::zeros(self.rows, self.cols - at);
        for t in 0..self.rows {
            a.row_mut(t).copy_from_slice(&self.row(t)[..at]);
            b.row_mut(t).copy_from_slice(&self.row(t)[at..]);
        }
        (a, b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn hadamard(&self, other: &Mat) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// `x · w + b` for `w: [in, out]`, `b: [out]`.
pub fn linear(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    let (inp, out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.cols, inp, "linear input width");
    let mut y = Mat::zeros(x.rows, out);
    for t in 0..x.rows {
        let yr = y.row_mut(t);
        yr.copy_from_slice(b.data());
        for (i, &xi) in x.row(t).iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, w.row(i), yr);
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients of [`linear`] and returns the
/// input gradient.
pub fn linear_backward(x: &Mat, w: &Tensor, dy: &Mat, dw: &mut Tensor, db: &mut Tensor) -> Mat {
    let inp = w.shape()[0];
    let mut dx = Mat::zeros(x.rows, inp);
    for t in 0..x.rows {
        let dyr = dy.row(t);
        axpy(1.0, dyr, db.data_mut());
        let dxr = dx.row_mut(t);
        for (i, &xi) in x.row(t).iter().enumerate() {
            dxr[i] = dot(dyr, w.row(i));
            if xi != 0.0 {
                axpy(xi, dyr, dw.row_mut(i));
            }
        }
    }
    dx
}

pub const LN_EPS: f64 = 1e-5;

pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Mat, gain: &Tensor, bias: &Tensor) -> (Mat, LayerNormCache) {
    let n = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for t in 0..x.rows {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xr = xhat.row_mut(t);
        for (o, &v) in xr.iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        let yr = y.row_mut(t);
        for i in 0..x.cols {
            yr[i] = gain.data()[i] * xhat.row(t)[i] + bias.data()[i];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Tensor,
    dy: &Mat,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Mat {
    let cols = dy.cols;
    let n = cols as f64;
    let mut dx = Mat::zeros(dy.rows, cols);
    let mut dxhat = vec![0.0; cols];
    for t in 0..dy.rows {
        let dyr = dy.row(t);
        let xh = cache.xhat.row(t);
        for i in 0..cols {
            dgain.data_mut()[i] += dyr[i] * xh[i];
            dbias.data_mut()[i] += dyr[i];
            dxhat[i] = dyr[i] * gain.data()[i];
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_xh: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let inv = cache.inv_std[t];
        let dxr = dx.row_mut(t);
        for i in 0..cols {
            dxr[i] = inv / n * (n * dxhat[i] - sum - xh[i] * sum_xh);
        }
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Sinusoidal position encodings, `len × width`.
pub fn sinusoidal_positions(len: usize, width: usize) -> Mat {
    let mut p = Mat::zeros(len, width);
    for t in 0..len {
        for i in 0..width {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / width as f64);
            let angle = t as f64 * rate;
            p.row_mut(t)[i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_normalizes_and_shifts() {
        let y = softmax(&[1.0, 2.0, 3.0]);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
        let big = softmax(&[1000.0, 0.0]);
        assert!(big[0].is_finite() && (big[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_matches_hand_product() {
        let x = Mat::from_rows(&[vec![1.0, 2.0]]);
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, -1.0, 0.5, 2.0, 1.0]);
        let b = Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]);
        let y = linear(&x, &w, &b);
        assert_eq!(y.data, vec![2.1, 4.2, 1.3]);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Mat::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let (y, _) = layer_norm(&x, &Tensor::filled(&[4], 1.0), &Tensor::zeros(&[4]));
        let mean: f64 = y.data.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
    }
}
