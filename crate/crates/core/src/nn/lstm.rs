use serde::{Deserialize, Serialize};

use super::dense::sigmoid;
use super::param::{glorot_uniform, join, Parameters};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One LSTM direction. Gate blocks in the packed `4h` axis are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmDirection {
    pub w_input: Tensor,
    pub w_recurrent: Tensor,
    pub bias: Tensor,
}

/// Everything the backward pass needs from one cell step.
#[derive(Debug, Clone)]
pub struct CellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmDirection {
    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            w_input: Tensor::zeros(vec![d_in, 4 * hidden]),
            w_recurrent: Tensor::zeros(vec![hidden, 4 * hidden]),
            bias: Tensor::zeros(vec![4 * hidden]),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate (1.0).
    pub fn init(d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut d = Self::zeros(d_in, hidden);
        glorot_uniform(&mut d.w_input, d_in, 4 * hidden, rng);
        glorot_uniform(&mut d.w_recurrent, hidden, 4 * hidden, rng);
        d.bias.data_mut()[hidden..2 * hidden].fill(1.0);
        d
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.rows()
    }

    pub fn d_in(&self) -> usize {
        self.w_input.rows()
    }

    pub fn param_count(d_in: usize, hidden: usize) -> usize {
        4 * hidden * (d_in + hidden + 1)
    }

    pub fn cell_forward(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellCache {
        let h = self.hidden();
        let g4 = 4 * h;
        let mut z = self.bias.data().to_vec();
        for (p, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                let w = &self.w_input.data()[p * g4..(p + 1) * g4];
                for (zv, wv) in z.iter_mut().zip(w) {
                    *zv += xv * wv;
                }
            }
        }
        for (p, &hv) in h_prev.iter().enumerate() {
            if hv != 0.0 {
                let w = &self.w_recurrent.data()[p * g4..(p + 1) * g4];
                for (zv, wv) in z.iter_mut().zip(w) {
                    *zv += hv * wv;
                }
            }
        }
        let mut gates = z;
        for (k, v) in gates.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            hn[j] = o * tanh_c[j];
        }
        CellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            tanh_c,
            h: hn,
            c,
        }
    }

    /// Backpropagates `(dL/dh, dL/dc)` through one step. Returns
    /// `(dL/dx, dL/dh_prev, dL/dc_prev)`.
    pub fn cell_backward(
        &self,
        cache: &CellCache,
        dh: &[f64],
        dc_in: &[f64],
        grad: &mut LstmDirection,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden();
        let g4 = 4 * h;
        let gt = &cache.gates;
        let mut dz = vec![0.0; g4];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let tc = cache.tanh_c[j];
            let d_o = dh[j] * tc;
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_in[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        for (b, d) in grad.bias.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; cache.x.len()];
        {
            let gw = grad.w_input.data_mut();
            let w = self.w_input.data();
            for (p, &xv) in cache.x.iter().enumerate() {
                let row = &mut gw[p * g4..(p + 1) * g4];
                let wrow = &w[p * g4..(p + 1) * g4];
                let mut acc = 0.0;
                for k in 0..g4 {
                    row[k] += xv * dz[k];
                    acc += wrow[k] * dz[k];
                }
                dx[p] = acc;
            }
        }
        let mut dh_prev = vec![0.0; h];
        {
            let gw = grad.w_recurrent.data_mut();
            let w = self.w_recurrent.data();
            for (p, &hv) in cache.h_prev.iter().enumerate() {
                let row = &mut gw[p * g4..(p + 1) * g4];
                let wrow = &w[p * g4..(p + 1) * g4];
                let mut acc = 0.0;
                for k in 0..g4 {
                    row[k] += hv * dz[k];
                    acc += wrow[k] * dz[k];
                }
                dh_prev[p] = acc;
            }
        }
        (dx, dh_prev, dc_prev)
    }

    /// Runs the recurrence over all rows of `x` (in reverse when `reverse`),
    /// from zero initial state. Output row `t` is the hidden state produced
    /// at input row `t`.
    pub fn run(&self, x: &Tensor, reverse: bool) -> (Tensor, Vec<CellCache>) {
        let (t_len, h) = (x.rows(), self.hidden());
        let mut out = Tensor::zeros(vec![t_len, h]);
        let mut caches = Vec::with_capacity(t_len);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let cache = self.cell_forward(x.row(t), &h_prev, &c_prev);
            out.row_mut(t).copy_from_slice(&cache.h);
            h_prev.clone_from(&cache.h);
            c_prev.clone_from(&cache.c);
            caches.push(cache);
        }
        (out, caches)
    }

    /// Backpropagation through time for [`LstmDirection::run`].
    pub fn run_backward(&self, caches: &[CellCache], dout: &Tensor, reverse: bool, grad: &mut LstmDirection) -> Tensor {
        let t_len = caches.len();
        let h = self.hidden();
        let mut dx = Tensor::zeros(vec![t_len, self.d_in()]);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for step in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - step } else { step };
            let dh: Vec<f64> = dout.row(t).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dxt, dhp, dcp) = self.cell_backward(&caches[step], &dh, &dc_next, grad);
            dx.row_mut(t).copy_from_slice(&dxt);
            dh_next = dhp;
            dc_next = dcp;
        }
        dx
    }
}

impl Parameters for LstmDirection {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "w_input"), &self.w_input));
        out.push((join(prefix, "w_recurrent"), &self.w_recurrent));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.w_input);
        out.push(&mut self.w_recurrent);
        out.push(&mut self.bias);
    }
}

/// Bidirectional LSTM layer; output row `t` is `[forward_h_t ; backward_h_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: Vec<CellCache>,
    bwd: Vec<CellCache>,
}

impl BiLstm {
    pub fn zeros(d_in: usize, hidden_per_dir: usize) -> Self {
        Self {
            forward: LstmDirection::zeros(d_in, hidden_per_dir),
            backward: LstmDirection::zeros(d_in, hidden_per_dir),
        }
    }

    pub fn init(d_in: usize, hidden_per_dir: usize, rng: &mut Rng) -> Self {
        let forward = LstmDirection::init(d_in, hidden_per_dir, rng);
        let backward = LstmDirection::init(d_in, hidden_per_dir, rng);
        Self { forward, backward }
    }

    pub fn hidden_per_dir(&self) -> usize {
        self.forward.hidden()
    }

    pub fn param_count(d_in: usize, hidden_per_dir: usize) -> usize {
        2 * LstmDirection::param_count(d_in, hidden_per_dir)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        let h = self.hidden_per_dir();
        if x.shape().len() != 2
            || x.cols() != self.forward.d_in()
            || self.backward.d_in() != self.forward.d_in()
            || self.backward.hidden() != h
        {
            return Err(Error::shape(format!(
                "bilstm expects T×{} input, got {:?}",
                self.forward.d_in(),
                x.shape()
            )));
        }
        let (hf, fwd) = self.forward.run(x, false);
        let (hb, bwd) = self.backward.run(x, true);
        let mut out = Tensor::zeros(vec![x.rows(), 2 * h]);
        out.add_col_slice(0, &hf);
        out.add_col_slice(h, &hb);
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward_pass(&self, cache: &BiLstmCache, dy: &Tensor, grad: &mut BiLstm) -> Tensor {
        let h = self.hidden_per_dir();
        let mut dx = self
            .forward
            .run_backward(&cache.fwd, &dy.col_slice(0, h), false, &mut grad.forward);
        dx.add_assign(
            &self
                .backward
                .run_backward(&cache.bwd, &dy.col_slice(h, 2 * h), true, &mut grad.backward),
        );
        dx
    }
}

impl Parameters for BiLstm {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.forward.named_params(&join(prefix, "forward"), out);
        self.backward.named_params(&join(prefix, "backward"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.forward.params_mut(out);
        self.backward.params_mut(out);
    }
}
