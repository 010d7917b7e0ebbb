//! Dense row-major f64 matrices and the few kernels the model needs.

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape");
        Self { rows, cols, data }
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        Self { rows, cols, data }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = x Wᵀ + b` for `x: [n × in]`, `W: [out × in]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    debug_assert_eq!(x.cols, w.cols);
    let mut y = Tensor::zeros(x.rows, w.rows);
    for i in 0..x.rows {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for (o, yo) in yi.iter_mut().enumerate() {
            *yo = dot(xi, w.row(o)) + b.map_or(0.0, |b| b.data[o]);
        }
    }
    y
}

/// Accumulates gradients of [`linear`] and returns `dx`.
pub fn linear_backward(
    x: &Tensor,
    dy: &Tensor,
    w: &Tensor,
    dw: &mut Tensor,
    db: Option<&mut Tensor>,
) -> Tensor {
    let mut dx = Tensor::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        let dyi = dy.row(i);
        let xi = x.row(i);
        for (o, &g) in dyi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, xi, dw.row_mut(o));
            axpy(g, w.row(o), dx.row_mut(i));
        }
    }
    if let Some(db) = db {
        for i in 0..dy.rows {
            for (d, g) in db.data.iter_mut().zip(dy.row(i)) {
                *d += g;
            }
        }
    }
    dx
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row normalization statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> (Tensor, LayerNormCache) {
    let d = x.cols as f64;
    let mut y = Tensor::zeros(x.rows, x.cols);
    let mut xhat = Tensor::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let r = x.row(i);
        let mu = r.iter().sum::<f64>() / d;
        let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(i);
        for (k, v) in r.iter().enumerate() {
            xh[k] = (v - mu) * is;
        }
        let yr = y.row_mut(i);
        for k in 0..x.cols {
            yr[k] = gamma.data[k] * xhat.data[i * x.cols + k] + beta.data[k];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    dy: &Tensor,
    cache: &LayerNormCache,
    gamma: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Tensor {
    let cols = dy.cols;
    let d = cols as f64;
    let mut dx = Tensor::zeros(dy.rows, cols);
    let mut dxhat = vec![0.0; cols];
    for i in 0..dy.rows {
        let dyr = dy.row(i);
        let xh = cache.xhat.row(i);
        for k in 0..cols {
            dgamma.data[k] += dyr[k] * xh[k];
            dbeta.data[k] += dyr[k];
            dxhat[k] = dyr[k] * gamma.data[k];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d;
        let mean_dx = dot(&dxhat, xh) / d;
        let dxr = dx.row_mut(i);
        for k in 0..cols {
            dxr[k] = cache.inv_std[i] * (dxhat[k] - mean_d - xh[k] * mean_dx);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1000.0, 1000.0, -5.0];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
