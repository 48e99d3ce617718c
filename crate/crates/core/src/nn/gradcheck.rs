//! Central finite-difference gradient checking.
//!
//! Numeric derivatives use the symmetric five-point stencil
//! `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, whose O(h⁴) truncation
//! error allows a step large enough to keep roundoff small.

use rand::Rng as _;

use super::attention::MultiHeadAttention;
use super::dense::Dense;
use super::loss::bce_with_logits;
use super::lstm::{BiLstm, LstmDirection};
use super::norm::LayerNorm;
use super::param::{assign_flat, flatten, zeros_like, Parameters};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const DEFAULT_EPS: f64 = 1e-4;

/// Relative error with denominator `max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at `point` and
/// returns the largest relative error.
pub fn gradient_check(mut f: impl FnMut(&[f64]) -> f64, point: &[f64], analytic: &[f64], eps: f64) -> Result<f64> {
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::validation(format!("finite-difference step {eps} outside [1e-6, 1e-4]")));
    }
    if point.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} coordinates but {} analytic gradients",
            point.len(),
            analytic.len()
        )));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        let mut at = |offset: f64| {
            x[i] = orig + offset;
            f(&x)
        };
        let (up2, up, down, down2) = (at(2.0 * eps), at(eps), at(-eps), at(-2.0 * eps));
        x[i] = orig;
        let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * eps);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient at coordinate {i} (analytic {}, numeric {numeric})",
                analytic[i]
            )));
        }
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn sum_squares(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

/// Checks a layer's parameter and input gradients under `L = Σ y²`.
/// `backward(layer, x, dy)` returns `(parameter gradients, dL/dx)`.
pub fn check_layer<L, F, B>(layer: &L, x: &Tensor, forward: F, backward: B, eps: f64) -> Result<f64>
where
    L: Parameters + Clone,
    F: Fn(&L, &Tensor) -> Tensor,
    B: Fn(&L, &Tensor, &Tensor) -> (L, Tensor),
{
    let y = forward(layer, x);
    let mut dy = y.clone();
    dy.scale(2.0);
    let (grads, dx) = backward(layer, x, &dy);

    let theta = flatten(layer);
    let mut probe = layer.clone();
    let param_err = gradient_check(
        |p| {
            assign_flat(&mut probe, p);
            sum_squares(&forward(&probe, x))
        },
        &theta,
        &flatten(&grads),
        eps,
    )?;
    let mut xp = x.clone();
    let input_err = gradient_check(
        |v| {
            xp.data_mut().copy_from_slice(v);
            sum_squares(&forward(layer, &xp))
        },
        x.data(),
        dx.data(),
        eps,
    )?;
    Ok(param_err.max(input_err))
}

/// Test points draw magnitudes from `[scale/4, scale)` with a random sign so
/// no weight gradient is scaled towards zero by a near-zero input.
fn random_value(scale: f64, rng: &mut Rng) -> f64 {
    let m = rng.random_range(0.25 * scale..scale);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

fn random_tensor(shape: Vec<usize>, scale: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| random_value(scale, rng)).collect()).expect("shape matches")
}

fn randomize<P: Parameters>(p: &mut P, scale: f64, rng: &mut Rng) {
    for t in super::param::tensors_mut(p) {
        for v in t.data_mut() {
            *v = random_value(scale, rng);
        }
    }
}

pub fn check_dense(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut layer = Dense::zeros(4, 5);
    randomize(&mut layer, 0.8, &mut rng);
    let x = random_tensor(vec![3, 4], 1.0, &mut rng);
    check_layer(
        &layer,
        &x,
        |l, x| l.apply(x),
        |l, x, dy| {
            let mut g = zeros_like(l);
            let dx = l.backward(x, dy, &mut g);
            (g, dx)
        },
        DEFAULT_EPS,
    )
}

pub fn check_layer_norm(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut layer = LayerNorm::new(5);
    randomize(&mut layer, 1.0, &mut rng);
    let x = random_tensor(vec![3, 5], 2.0, &mut rng);
    check_layer(
        &layer,
        &x,
        |l, x| l.forward(x).expect("shape").0,
        |l, x, dy| {
            let (_, cache) = l.forward(x).expect("shape");
            let mut g = zeros_like(l);
            let dx = l.backward(&cache, dy, &mut g);
            (g, dx)
        },
        DEFAULT_EPS,
    )
}

pub fn check_attention(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut layer = MultiHeadAttention::zeros(4, 2, 3);
    randomize(&mut layer, 0.7, &mut rng);
    let x = random_tensor(vec![4, 4], 1.0, &mut rng);
    check_layer(
        &layer,
        &x,
        |l, x| l.forward(x).expect("shape").0,
        |l, x, dy| {
            let (_, cache) = l.forward(x).expect("shape");
            let mut g = zeros_like(l);
            let dx = l.backward(&cache, dy, &mut g);
            (g, dx)
        },
        DEFAULT_EPS,
    )
}

/// One cell step with inputs `[x ; h_prev ; c_prev]` packed as a 1×(d+2h)
/// row and output `[h ; c]`, so both state paths are exercised.
pub fn check_lstm_cell(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let (d, h) = (3, 4);
    let mut cell = LstmDirection::zeros(d, h);
    randomize(&mut cell, 0.8, &mut rng);
    let packed = random_tensor(vec![1, d + 2 * h], 1.0, &mut rng);
    let forward = |l: &LstmDirection, p: &Tensor| {
        let v = p.data();
        let cache = l.cell_forward(&v[..d], &v[d..d + h], &v[d + h..]);
        let mut out = cache.h.clone();
        out.extend_from_slice(&cache.c);
        Tensor::from_vec(vec![1, 2 * h], out).expect("shape")
    };
    check_layer(
        &cell,
        &packed,
        forward,
        |l, p, dy| {
            let v = p.data();
            let cache = l.cell_forward(&v[..d], &v[d..d + h], &v[d + h..]);
            let mut g = zeros_like(l);
            let (dx, dh, dc) = l.cell_backward(&cache, &dy.data()[..h], &dy.data()[h..], &mut g);
            let mut packed_grad = dx;
            packed_grad.extend(dh);
            packed_grad.extend(dc);
            (g, Tensor::from_vec(vec![1, d + 2 * h], packed_grad).expect("shape"))
        },
        DEFAULT_EPS,
    )
}

pub fn check_bilstm(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut layer = BiLstm::zeros(3, 3);
    randomize(&mut layer, 0.8, &mut rng);
    let x = random_tensor(vec![4, 3], 1.0, &mut rng);
    check_layer(
        &layer,
        &x,
        |l, x| l.forward(x).expect("shape").0,
        |l, x, dy| {
            let (_, cache) = l.forward(x).expect("shape");
            let mut g = zeros_like(l);
            let dx = l.backward_pass(&cache, dy, &mut g);
            (g, dx)
        },
        DEFAULT_EPS,
    )
}

/// Dense projection to three logits followed by sigmoid + binary
/// cross-entropy against random binary targets.
pub fn check_loss_head(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut head = Dense::zeros(4, 3);
    randomize(&mut head, 0.8, &mut rng);
    let x = random_tensor(vec![5, 4], 1.5, &mut rng);
    let targets = Tensor::from_vec(
        vec![5, 3],
        (0..15).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect(),
    )
    .expect("shape");
    let mask = [true, true, false, true, true];
    let loss = |l: &Dense, x: &Tensor| bce_with_logits(&l.apply(x), &targets, &mask).0;

    let (_, dlogits) = bce_with_logits(&head.apply(&x), &targets, &mask);
    let mut g = zeros_like(&head);
    let dx = head.backward(&x, &dlogits, &mut g);
    let theta = flatten(&head);
    let mut probe = head.clone();
    let pe = gradient_check(
        |p| {
            assign_flat(&mut probe, p);
            loss(&probe, &x)
        },
        &theta,
        &flatten(&g),
        DEFAULT_EPS,
    )?;
    let mut xp = x.clone();
    let ie = gradient_check(
        |v| {
            xp.data_mut().copy_from_slice(v);
            loss(&head, &xp)
        },
        x.data(),
        dx.data(),
        DEFAULT_EPS,
    )?;
    Ok(pe.max(ie))
}
