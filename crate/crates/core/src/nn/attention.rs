use serde::{Deserialize, Serialize};

use super::dense::Dense;
use super::param::{join, Parameters};
use super::tensor::{matmul, matmul_bt};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Unmasked multi-head self-attention.
///
/// Each head projects `d_model → d_head` for queries, keys and values; the
/// concatenated heads (`n_heads · d_head`) are projected back to `d_model`.
/// The key projection has no bias: a per-query constant added to every score
/// cancels in the row softmax, so such a bias would never receive gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub query: Dense,
    pub key: Tensor,
    pub value: Dense,
    pub output: Dense,
    pub n_heads: usize,
    pub d_head: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    input: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    concat: Tensor,
    /// Row-softmax weights per head, each T×T.
    pub weights: Vec<Tensor>,
}

impl MultiHeadAttention {
    pub fn zeros(d_model: usize, n_heads: usize, d_head: usize) -> Self {
        let inner = n_heads * d_head;
        Self {
            query: Dense::zeros(d_model, inner),
            key: Tensor::zeros(vec![d_model, inner]),
            value: Dense::zeros(d_model, inner),
            output: Dense::zeros(inner, d_model),
            n_heads,
            d_head,
        }
    }

    pub fn glorot(d_model: usize, n_heads: usize, d_head: usize, rng: &mut Rng) -> Self {
        let inner = n_heads * d_head;
        let query = Dense::glorot(d_model, inner, rng);
        let mut key = Tensor::zeros(vec![d_model, inner]);
        super::param::glorot_uniform(&mut key, d_model, inner, rng);
        Self {
            query,
            key,
            value: Dense::glorot(d_model, inner, rng),
            output: Dense::glorot(inner, d_model, rng),
            n_heads,
            d_head,
        }
    }

    pub fn param_count(d_model: usize, n_heads: usize, d_head: usize) -> usize {
        let inner = n_heads * d_head;
        2 * Dense::param_count(d_model, inner) + d_model * inner + Dense::param_count(inner, d_model)
    }

    pub fn d_model(&self) -> usize {
        self.query.d_in()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let inner = self.n_heads * self.d_head;
        let ok = x.shape().len() == 2
            && x.cols() == self.d_model()
            && self.query.d_out() == inner
            && self.value.d_out() == inner
            && self.key.shape() == [self.d_model(), inner]
            && self.output.d_in() == inner
            && self.output.d_out() == self.d_model();
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "attention (d_model {}, {} heads × {}) got input {:?}",
                self.d_model(),
                self.n_heads,
                self.d_head,
                x.shape()
            )))
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, AttentionCache)> {
        self.check(x)?;
        let t = x.rows();
        let q = self.query.apply(x);
        let k = matmul(x, &self.key);
        let v = self.value.apply(x);
        let scale = 1.0 / (self.d_head as f64).sqrt();
        let mut concat = Tensor::zeros(vec![t, self.n_heads * self.d_head]);
        let mut weights = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (lo, hi) = (h * self.d_head, (h + 1) * self.d_head);
            let qh = q.col_slice(lo, hi);
            let kh = k.col_slice(lo, hi);
            let vh = v.col_slice(lo, hi);
            let mut scores = matmul_bt(&qh, &kh);
            scores.scale(scale);
            softmax_rows(&mut scores);
            concat.add_col_slice(lo, &matmul(&scores, &vh));
            weights.push(scores);
        }
        let y = self.output.apply(&concat);
        Ok((
            y,
            AttentionCache {
                input: x.clone(),
                q,
                k,
                v,
                concat,
                weights,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Tensor, grad: &mut MultiHeadAttention) -> Tensor {
        let t = dy.rows();
        let inner = self.n_heads * self.d_head;
        let dconcat = self.output.backward(&cache.concat, dy, &mut grad.output);
        let scale = 1.0 / (self.d_head as f64).sqrt();
        let mut dq = Tensor::zeros(vec![t, inner]);
        let mut dk = Tensor::zeros(vec![t, inner]);
        let mut dv = Tensor::zeros(vec![t, inner]);
        for h in 0..self.n_heads {
            let (lo, hi) = (h * self.d_head, (h + 1) * self.d_head);
            let a = &cache.weights[h];
            let d_out = dconcat.col_slice(lo, hi);
            let qh = cache.q.col_slice(lo, hi);
            let kh = cache.k.col_slice(lo, hi);
            let vh = cache.v.col_slice(lo, hi);

            // out = A·V
            let da = matmul_bt(&d_out, &vh);
            dv.add_col_slice(lo, &matmul(&a.transpose(), &d_out));

            // softmax backward, then the 1/√d_head scaling
            let mut ds = da.clone();
            for i in 0..t {
                let ar = a.row(i);
                let dar = da.row(i);
                let dot: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
                for (j, s) in ds.row_mut(i).iter_mut().enumerate() {
                    *s = ar[j] * (dar[j] - dot) * scale;
                }
            }
            dq.add_col_slice(lo, &matmul(&ds, &kh));
            dk.add_col_slice(lo, &matmul(&ds.transpose(), &qh));
        }
        let mut dx = self.query.backward(&cache.input, &dq, &mut grad.query);
        super::tensor::matmul_at_acc(&cache.input, &dk, grad.key.data_mut());
        dx.add_assign(&matmul_bt(&dk, &self.key));
        dx.add_assign(&self.value.backward(&cache.input, &dv, &mut grad.value));
        dx
    }
}

pub(crate) fn softmax_rows(x: &mut Tensor) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl Parameters for MultiHeadAttention {
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.query.named_params(&join(prefix, "query"), out);
        out.push((join(prefix, "key.weight"), &self.key));
        self.value.named_params(&join(prefix, "value"), out);
        self.output.named_params(&join(prefix, "output"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.query.params_mut(out);
        out.push(&mut self.key);
        self.value.params_mut(out);
        self.output.params_mut(out);
    }
}
