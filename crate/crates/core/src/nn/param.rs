//! Named parameter traversal. Gradients are stored in a value of the same
//! type as the layer they belong to, so every traversal below visits
//! parameters and gradients in the same order.

use rand::Rng as _;

use super::Tensor;
use crate::rng::Rng;

pub trait Parameters {
    /// Appends `(qualified name, tensor)` pairs in a fixed order.
    fn named_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);

    /// Same order as [`Parameters::named_params`].
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>);
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named<P: Parameters + ?Sized>(p: &P) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    p.named_params("", &mut out);
    out
}

pub fn tensors_mut<P: Parameters + ?Sized>(p: &mut P) -> Vec<&mut Tensor> {
    let mut out = Vec::new();
    p.params_mut(&mut out);
    out
}

pub fn count_params<P: Parameters + ?Sized>(p: &P) -> usize {
    named(p).iter().map(|(_, t)| t.len()).sum()
}

/// A copy of `p` with every parameter zeroed; used as a gradient buffer.
pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut g = p.clone();
    for t in tensors_mut(&mut g) {
        t.fill(0.0);
    }
    g
}

/// `dst += src`, parameter by parameter.
pub fn accumulate<P: Parameters>(dst: &mut P, src: &P) {
    let src = named(src);
    for (d, (_, s)) in tensors_mut(dst).into_iter().zip(src) {
        d.add_assign(s);
    }
}

pub fn scale_all<P: Parameters>(p: &mut P, s: f64) {
    for t in tensors_mut(p) {
        t.scale(s);
    }
}

pub fn flatten<P: Parameters + ?Sized>(p: &P) -> Vec<f64> {
    named(p).iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
}

/// Inverse of [`flatten`]. Panics if `values` has the wrong length.
pub fn assign_flat<P: Parameters + ?Sized>(p: &mut P, values: &[f64]) {
    let mut off = 0;
    for t in tensors_mut(p) {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[off..off + n]);
        off += n;
    }
    assert_eq!(off, values.len(), "flat parameter length mismatch");
}

/// Glorot-uniform fill for a `fan_in × fan_out` weight.
pub fn glorot_uniform(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.random_range(-limit..=limit);
    }
}
