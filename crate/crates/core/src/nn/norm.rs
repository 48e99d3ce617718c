use serde::{Deserialize, Serialize};

use super::param::{join, Parameters};
use super::Tensor;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row normalization to zero mean / unit population variance, then
/// `gain ⊙ x̂ + shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub shift: Tensor,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gain: Tensor::filled(vec![d], 1.0),
            shift: Tensor::zeros(vec![d]),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        if x.shape().len() != 2 || x.cols() != self.dim() || self.dim() == 0 {
            return Err(Error::shape(format!(
                "layer norm of width {} got {:?}",
                self.dim(),
                x.shape()
            )));
        }
        let d = self.dim();
        let mut normalized = x.clone();
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            let nrow = normalized.row_mut(i);
            for v in nrow.iter_mut() {
                *v = (*v - mean) * is;
            }
            let orow = out.row_mut(i);
            for j in 0..d {
                orow[j] = self.gain.data()[j] * normalized.get(i, j) + self.shift.data()[j];
            }
        }
        Ok((out, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Tensor, grad: &mut LayerNorm) -> Tensor {
        let d = self.dim();
        let mut dx = dy.zeros_like();
        let gain = self.gain.data();
        for i in 0..dy.rows() {
            let dyr = dy.row(i);
            let xh = cache.normalized.row(i);
            {
                let gg = grad.gain.data_mut();
                for j in 0..d {
                    gg[j] += dyr[j] * xh[j];
                }
            }
            {
                let gs = grad.shift.data_mut();
                for j in 0..d {
                    gs[j] += dyr[j];
                }
            }
            let dxh: Vec<f64> = (0..d).map(|j| dyr[j] * gain[j]).collect();
            let mean_dxh = dxh.iter().sum::<f64>() / d as f64;
            let mean_dxh_xh = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let is = cache.inv_std[i];
            let out = dx.row_mut(i);
            for j in 0..d {
                out[j] = is * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "gain"), &self.gain));
        out.push((join(prefix, "shift"), &self.shift));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.gain);
        out.push(&mut self.shift);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_row() {
        let ln = LayerNorm::new(3);
        let (y, _) = ln.forward(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap()).unwrap();
        // population variance 2/3, (x - 2) / sqrt(2/3 + 1e-5)
        let expected = 1.0 / (2.0f64 / 3.0 + 1e-5).sqrt();
        assert!((y.data()[0] + expected).abs() < 1e-12);
        assert_eq!(y.data()[1], 0.0);
        assert!((y.data()[2] - expected).abs() < 1e-12);
        assert!((expected - 1.22474).abs() < 1e-4);
    }

    #[test]
    fn constant_row_yields_shift() {
        let mut ln = LayerNorm::new(3);
        ln.shift = Tensor::from_vec(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let (y, _) = ln.forward(&Tensor::from_rows(&[vec![5.0, 5.0, 5.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn gain_is_linear() {
        let x = Tensor::from_rows(&[vec![0.3, -1.0, 2.5, 4.0]]).unwrap();
        let ln1 = LayerNorm::new(4);
        let mut ln2 = LayerNorm::new(4);
        ln2.gain.fill(2.0);
        let (a, _) = ln1.forward(&x).unwrap();
        let (b, _) = ln2.forward(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }
}
