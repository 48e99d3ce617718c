use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor;

/// A fixed-length slice of one trial. Rows at and after `valid` are zero
/// padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub trial_id: String,
    pub start: usize,
    pub valid: usize,
    pub features: Tensor,
    pub labels: Tensor,
    /// Multiplies this window's loss; 1 for real trials.
    pub weight: f64,
}

/// Number of windows of length `w` and stride `s` covering `t` rows.
pub fn window_count(t: usize, w: usize, s: usize) -> usize {
    if t == 0 {
        0
    } else {
        t.saturating_sub(w).div_ceil(s) + 1
    }
}

/// Windows starting at `0, S, 2S, …`; the last one is zero-padded to `W`
/// rows when the trial runs out.
pub fn make_windows(matrix: &FeatureMatrix, labels: &Tensor, w: usize, s: usize) -> Result<Vec<Window>> {
    if w == 0 || s == 0 || s > w {
        return Err(Error::validation(format!("window length {w} and stride {s} need 1 <= S <= W")));
    }
    let t = matrix.len();
    if labels.rows() != t {
        return Err(Error::shape(format!(
            "trial {}: {t} feature rows but {} label rows",
            matrix.trial_id,
            labels.rows()
        )));
    }
    let d = matrix.width();
    let c = labels.cols();
    let windows = (0..window_count(t, w, s))
        .map(|k| {
            let start = k * s;
            let valid = (t - start).min(w);
            let mut features = Tensor::zeros(vec![w, d]);
            features.data_mut()[..valid * d].copy_from_slice(&matrix.values.data()[start * d..(start + valid) * d]);
            let mut lab = Tensor::zeros(vec![w, c]);
            lab.data_mut()[..valid * c].copy_from_slice(&labels.data()[start * c..(start + valid) * c]);
            Window {
                trial_id: matrix.trial_id.clone(),
                start,
                valid,
                features,
                labels: lab,
                weight: 1.0,
            }
        })
        .collect();
    Ok(windows)
}
