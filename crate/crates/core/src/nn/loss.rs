use super::dense::sigmoid;
use super::Tensor;

/// Mean binary cross-entropy on logits over the rows where `row_mask` is
/// set, and its gradient with respect to the logits. Rows outside the mask
/// contribute neither loss nor gradient.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor, row_mask: &[bool]) -> (f64, Tensor) {
    debug_assert_eq!(logits.shape(), targets.shape());
    let cols = logits.cols();
    let n = row_mask.iter().filter(|&&m| m).count() * cols;
    let mut grad = logits.zeros_like();
    if n == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    for (i, &keep) in row_mask.iter().enumerate() {
        if !keep {
            continue;
        }
        let z = logits.row(i);
        let y = targets.row(i);
        let g = grad.row_mut(i);
        for j in 0..cols {
            // max(z, 0) - z·y + ln(1 + e^{-|z|})
            loss += z[j].max(0.0) - z[j] * y[j] + (-z[j].abs()).exp().ln_1p();
            g[j] = (sigmoid(z[j]) - y[j]) * inv;
        }
    }
    (loss * inv, grad)
}

/// Mean binary cross-entropy of probabilities, clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_probabilities(p: &[f64], y: &[f64]) -> f64 {
    const CLAMP: f64 = 1e-7;
    let n = p.len().max(1) as f64;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_probability_form() {
        let z = Tensor::from_rows(&[vec![0.3, -2.0, 4.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let (l, _) = bce_with_logits(&z, &y, &[true]);
        let p: Vec<f64> = z.data().iter().map(|&v| sigmoid(v)).collect();
        assert!((l - bce_probabilities(&p, y.data())).abs() < 1e-12);
    }

    #[test]
    fn masked_rows_are_ignored() {
        let z = Tensor::from_rows(&[vec![0.3], vec![100.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let (l, g) = bce_with_logits(&z, &y, &[true, false]);
        let (l1, _) = bce_with_logits(&Tensor::from_rows(&[vec![0.3]]).unwrap(), &Tensor::from_rows(&[vec![1.0]]).unwrap(), &[true]);
        assert_eq!(l, l1);
        assert_eq!(g.data()[1], 0.0);
    }

    #[test]
    fn correct_predictor_beats_coin_flip() {
        let y = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let half = vec![0.5; y.len()];
        assert!(bce_probabilities(&y, &y) < bce_probabilities(&half, &y));
    }
}
