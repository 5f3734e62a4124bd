use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // resolves float methods in no_std builds
use num_traits::Float;

use super::grid::{matmul, matmul_nt, matmul_tn_acc, FeatureGrid};
use super::params::{Init, ParamLayout, PatternHasher, Slot};
use super::NnError;

/// Variance guard of every normalisation.
pub const NORM_EPS: f64 = 1e-5;

/// Row-wise affine map `y = x·W + b`, `W: fan_in × fan_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: Slot,
    pub bias: Slot,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = layout.alloc(format!("{name}.weight"), &[fan_in, fan_out], Init::Uniform { fan_in });
        let bias = layout.alloc(format!("{name}.bias"), &[fan_out], Init::Zeros);
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward(&self, params: &[f64], x: &FeatureGrid) -> Result<FeatureGrid, NnError> {
        if x.cols() != self.fan_in {
            return Err(NnError::Shape { expected: (x.rows(), self.fan_in), got: x.shape() });
        }
        let mut y = FeatureGrid::zeros(x.rows(), self.fan_out);
        matmul(x.as_slice(), self.weight.get(params), x.rows(), self.fan_in, self.fan_out, y.as_mut_slice());
        let b = self.bias.get(params);
        for r in 0..y.rows() {
            for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(y)
    }

    /// Accumulates weight/bias cotangents into `grads`; returns `∂/∂x` when asked.
    pub fn backward(
        &self,
        params: &[f64],
        x: &FeatureGrid,
        dy: &FeatureGrid,
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<FeatureGrid> {
        matmul_tn_acc(
            x.as_slice(),
            dy.as_slice(),
            x.rows(),
            self.fan_in,
            self.fan_out,
            self.weight.get_mut(grads),
        );
        let db = self.bias.get_mut(grads);
        for r in 0..dy.rows() {
            for (g, d) in db.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        if !want_input {
            return None;
        }
        let mut dx = FeatureGrid::zeros(x.rows(), self.fan_in);
        matmul_nt(dy.as_slice(), self.weight.get(params), dy.rows(), self.fan_out, self.fan_in, dx.as_mut_slice());
        Some(dx)
    }
}

/// Two affine maps with a ramp between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    pub input: FeatureGrid,
    /// Post-ramp hidden activations.
    pub hidden: FeatureGrid,
}

impl MlpCache {
    pub fn pattern(&self, h: &mut PatternHasher) {
        h.write_positive_mask(self.hidden.as_slice());
    }
}

impl Mlp {
    pub fn new(layout: &mut ParamLayout, name: &str, fan_in: usize, hidden: usize, fan_out: usize) -> Self {
        Self {
            first: Linear::new(layout, &format!("{name}.0"), fan_in, hidden),
            second: Linear::new(layout, &format!("{name}.1"), hidden, fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.first.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.second.fan_out
    }

    pub fn forward(&self, params: &[f64], x: &FeatureGrid) -> Result<(FeatureGrid, MlpCache), NnError> {
        let mut hidden = self.first.forward(params, x)?;
        hidden.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
        let y = self.second.forward(params, &hidden)?;
        Ok((y, MlpCache { input: x.clone(), hidden }))
    }

    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        dy: &FeatureGrid,
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<FeatureGrid> {
        let mut dh = self
            .second
            .backward(params, &cache.hidden, dy, grads, true)
            .expect("hidden cotangent requested");
        for (d, h) in dh.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        self.first.backward(params, &cache.input, &dh, grads, want_input)
    }
}

#[derive(Debug, Clone)]
pub struct ContextNormCache {
    pub normalized: FeatureGrid,
    pub inv_std: Vec<f64>,
}

/// Per-channel standardisation across rows, `(x − μ)/√(σ² + ε)`.
pub fn context_norm(x: &FeatureGrid) -> Result<(FeatureGrid, ContextNormCache), NnError> {
    let (r, c) = x.shape();
    if r < 2 {
        return Err(NnError::InsufficientContext { rows: r });
    }
    let mut mean = vec![0.0; c];
    for i in 0..r {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut var = vec![0.0; c];
    for i in 0..r {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / r as f64 + NORM_EPS).sqrt()).collect();
    let mut y = FeatureGrid::zeros(r, c);
    for i in 0..r {
        let xr = x.row(i);
        for (j, out) in y.row_mut(i).iter_mut().enumerate() {
            *out = (xr[j] - mean[j]) * inv_std[j];
        }
    }
    Ok((y.clone(), ContextNormCache { normalized: y, inv_std }))
}

pub fn context_norm_backward(cache: &ContextNormCache, dy: &FeatureGrid) -> FeatureGrid {
    let (r, c) = dy.shape();
    let y = &cache.normalized;
    let mut mean_dy = vec![0.0; c];
    let mut mean_dyy = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            let d = dy.get(i, j);
            mean_dy[j] += d;
            mean_dyy[j] += d * y.get(i, j);
        }
    }
    let rf = r as f64;
    let mut dx = FeatureGrid::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            let v = cache.inv_std[j] * (dy.get(i, j) - mean_dy[j] / rf - y.get(i, j) * mean_dyy[j] / rf);
            dx.set(i, j, v);
        }
    }
    dx
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &FeatureGrid) -> FeatureGrid {
    let mut y = x.clone();
    for i in 0..y.rows() {
        softmax_in_place(y.row_mut(i));
    }
    y
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

/// Cotangent of the logits given the softmax output `y` and its cotangent.
pub fn softmax_rows_backward(y: &FeatureGrid, dy: &FeatureGrid) -> FeatureGrid {
    let mut dx = FeatureGrid::zeros(y.rows(), y.cols());
    for i in 0..y.rows() {
        let yr = y.row(i);
        let dr = dy.row(i);
        let s: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
        for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
            *out = yr[j] * (dr[j] - s);
        }
    }
    dx
}

/// Mean over rows, as a `1 × C` grid.
pub fn avg_pool_rows(x: &FeatureGrid) -> Result<FeatureGrid, NnError> {
    if x.rows() == 0 {
        return Err(NnError::Empty);
    }
    let mut out = FeatureGrid::zeros(1, x.cols());
    for i in 0..x.rows() {
        for (o, v) in out.row_mut(0).iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    let inv = 1.0 / x.rows() as f64;
    out.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}

pub fn avg_pool_rows_backward(rows: usize, dy: &FeatureGrid) -> FeatureGrid {
    let mut dx = FeatureGrid::zeros(rows, dy.cols());
    let inv = 1.0 / rows as f64;
    for i in 0..rows {
        for (d, g) in dx.row_mut(i).iter_mut().zip(dy.row(0)) {
            *d = g * inv;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_grid(rng: &mut SeededRng, r: usize, c: usize, scale: f64) -> FeatureGrid {
        FeatureGrid::from_vec(r, c, (0..r * c).map(|_| rng.uniform_range(-scale, scale)).collect()).unwrap()
    }

    #[test]
    fn linear_identity_and_bias() {
        let mut layout = ParamLayout::new();
        let lin = Linear::new(&mut layout, "l", 3, 3);
        let mut p = layout.zeros();
        let x = FeatureGrid::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]).unwrap();
        for i in 0..3 {
            lin.weight.get_mut(&mut p)[i * 3 + i] = 1.0;
        }
        assert_eq!(lin.forward(&p, &x).unwrap(), x);

        let mut q = layout.zeros();
        q[lin.bias.range()].copy_from_slice(&[0.1, 0.2, 0.3]);
        let y = lin.forward(&q, &x).unwrap();
        assert_eq!(y.row(0), &[0.1, 0.2, 0.3]);
        assert_eq!(y.row(1), &[0.1, 0.2, 0.3]);
        assert!(lin.forward(&q, &FeatureGrid::zeros(2, 4)).is_err());
    }

    #[test]
    fn context_norm_statistics() {
        let mut rng = SeededRng::new(2);
        // large spread so that var/(var+ε) is within 1e-6 of one
        let x = random_grid(&mut rng, 50, 3, 100.0);
        let (y, _) = context_norm(&x).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..50).map(|i| y.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn context_norm_variance_is_exactly_shrunk_by_eps() {
        let mut rng = SeededRng::new(4);
        let x = random_grid(&mut rng, 20, 2, 1.0);
        let (y, _) = context_norm(&x).unwrap();
        for j in 0..2 {
            let xs: Vec<f64> = (0..20).map(|i| x.get(i, j)).collect();
            let m = xs.iter().sum::<f64>() / 20.0;
            let v = xs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 20.0;
            let ys: Vec<f64> = (0..20).map(|i| y.get(i, j)).collect();
            let vy = ys.iter().map(|a| a * a).sum::<f64>() / 20.0;
            assert!((vy - v / (v + NORM_EPS)).abs() < 1e-12);
        }
    }

    #[test]
    fn context_norm_constant_channel_and_small_input() {
        let x = FeatureGrid::from_vec(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let (y, _) = context_norm(&x).unwrap();
        assert!((0..3).all(|i| y.get(i, 1) == 0.0));
        assert_eq!(
            context_norm(&FeatureGrid::zeros(1, 2)).unwrap_err(),
            NnError::InsufficientContext { rows: 1 }
        );
    }

    #[test]
    fn softmax_rows_examples() {
        let x = FeatureGrid::from_vec(3, 3, vec![0.0, 0.0, 0.0, 1000.0, 0.0, -5.0, 0.0, 1.0, 2.0]).unwrap();
        let y = softmax_rows(&x);
        for j in 0..3 {
            assert!((y.get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(y.get(1, 0), 1.0);
        assert!(y.get(1, 1) < 1e-300);
        // reference values evaluated independently at high precision
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_64, 0.665_240_955_774_821_9];
        for (j, e) in expected.iter().enumerate() {
            assert!((y.get(2, j) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn avg_pool_examples() {
        let single = FeatureGrid::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(avg_pool_rows(&single).unwrap(), single);
        let sym = FeatureGrid::from_vec(2, 2, vec![1.5, -2.0, -1.5, 2.0]).unwrap();
        assert_eq!(avg_pool_rows(&sym).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(avg_pool_rows(&FeatureGrid::zeros(0, 2)).unwrap_err(), NnError::Empty);
        let mut rng = SeededRng::new(8);
        let x = random_grid(&mut rng, 3, 4, 1.0);
        let p = avg_pool_rows(&x).unwrap();
        for j in 0..4 {
            let s = (x.get(0, j) + x.get(1, j) + x.get(2, j)) / 3.0;
            assert!((p.get(0, j) - s).abs() < 1e-15);
        }
    }
}
