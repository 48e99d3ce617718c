use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multipliers from a dropout pass; `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn backward(&self, dy: &Tensor) -> Tensor {
        match &self.0 {
            None => dy.clone(),
            Some(m) => {
                let mut out = dy.clone();
                for (g, k) in out.data_mut().iter_mut().zip(m) {
                    *g *= k;
                }
                out
            }
        }
    }
}

/// Inverted dropout: in training, zero each element with probability
/// `rate` and scale survivors by `1/(1-rate)`. Evaluation is the identity.
pub fn dropout_forward(x: &Tensor, rate: f64, mode: Mode, seed: u64) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::validation(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutMask(None)));
    }
    let mut rng = seeded(seed);
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, k) in y.data_mut().iter_mut().zip(&mask) {
        *v *= k;
    }
    Ok((y, DropoutMask(Some(mask))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_identity_bitwise() {
        let x = Tensor::from_vec(vec![2, 2], vec![0.1, -3.0, f64::MIN_POSITIVE, 7.5]).unwrap();
        let (y, _) = dropout_forward(&x, 0.4, Mode::Eval, 1).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }

    #[test]
    fn zero_rate_train_is_identity() {
        let x = Tensor::from_vec(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (y, _) = dropout_forward(&x, 0.0, Mode::Train, 9).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rate_out_of_range() {
        let x = Tensor::zeros(vec![1, 1]);
        assert!(dropout_forward(&x, 1.0, Mode::Train, 0).is_err());
        assert!(dropout_forward(&x, -0.1, Mode::Train, 0).is_err());
    }

    #[test]
    fn preserves_mean_in_expectation() {
        let x = Tensor::filled(vec![200, 100], 1.0);
        let (y, _) = dropout_forward(&x, 0.5, Mode::Train, 2024).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn deterministic_in_seed() {
        let x = Tensor::filled(vec![4, 4], 1.0);
        let (a, _) = dropout_forward(&x, 0.3, Mode::Train, 5).unwrap();
        let (b, _) = dropout_forward(&x, 0.3, Mode::Train, 5).unwrap();
        assert_eq!(a, b);
    }
}
