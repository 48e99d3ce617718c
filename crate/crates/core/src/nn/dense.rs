use serde::{Deserialize, Serialize};

use super::param::{glorot_uniform, join, Parameters};
use super::tensor::{matmul, matmul_at_acc, matmul_bt};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer, `y = x·W + b` with `W: d_in × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(vec![d_in, d_out]),
            bias: Tensor::zeros(vec![d_out]),
        }
    }

    pub fn glorot(d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(d_in, d_out);
        glorot_uniform(&mut d.weight, d_in, d_out, rng);
        d
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(d_in: usize, d_out: usize) -> usize {
        d_in * d_out + d_out
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.d_in() || x.shape().len() != 2 {
            return Err(Error::shape(format!(
                "dense expects T×{} input, got {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        Ok(self.apply(x))
    }

    pub(crate) fn apply(&self, x: &Tensor) -> Tensor {
        let mut y = matmul(x, &self.weight);
        let b = self.bias.data();
        for i in 0..y.rows() {
            for (v, bv) in y.row_mut(i).iter_mut().zip(b) {
                *v += bv;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Dense) -> Tensor {
        matmul_at_acc(x, dy, grad.weight.data_mut());
        let gb = grad.bias.data_mut();
        for i in 0..dy.rows() {
            for (g, d) in gb.iter_mut().zip(dy.row(i)) {
                *g += d;
            }
        }
        matmul_bt(dy, &self.weight)
    }
}

impl Parameters for Dense {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    let mut out = dy.clone();
    for (g, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
