use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::check_rectangular;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `components[j]` is the j-th principal axis, a unit D-vector.
    pub components: Vec<Vec<f64>>,
    /// Sample variance (N−1 denominator) along each component, descending.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_rectangular(rows, self.dim())?;
        Ok(rows
            .iter()
            .map(|r| {
                self.components
                    .iter()
                    .map(|c| c.iter().zip(r).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
                    .collect()
            })
            .collect())
    }

    pub fn inverse_transform(&self, scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_rectangular(scores, self.components.len())?;
        Ok(scores
            .iter()
            .map(|s| {
                let mut x = self.mean.clone();
                for (c, &z) in self.components.iter().zip(s) {
                    for (xi, w) in x.iter_mut().zip(c) {
                        *xi += z * w;
                    }
                }
                x
            })
            .collect())
    }
}

/// Fits PCA on the centered data through the covariance eigendecomposition
/// and returns the model with the N×p scores. Each component is signed so
/// that its largest-magnitude entry is positive.
pub fn pca_fit_transform(rows: &[Vec<f64>], p: usize) -> Result<(PcaModel, Vec<Vec<f64>>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::validation(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = rows[0].len();
    check_rectangular(rows, d)?;
    if p == 0 || p > n.min(d) {
        return Err(Error::validation(format!(
            "PCA target dimension {p} outside [1, {}]",
            n.min(d)
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("PCA input contains non-finite values".into()));
    }

    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(p);
    let mut explained_variance = Vec::with_capacity(p);
    for &k in order.iter().take(p) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = axis
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > axis[best].abs() { j } else { best });
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }

    let model = PcaModel {
        mean,
        components,
        explained_variance,
    };
    let scores = model.transform(rows)?;
    Ok((model, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_through_origin() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let (m, _) = pca_fit_transform(&rows, 2).unwrap();
        let s5 = 5f64.sqrt();
        assert!((m.components[0][0] - 1.0 / s5).abs() < 1e-12);
        assert!((m.components[0][1] - 2.0 / s5).abs() < 1e-12);
        assert!(m.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn centered_data_has_zero_mean() {
        let rows = vec![vec![1.0, -2.0], vec![-1.0, 2.0], vec![0.5, 0.0], vec![-0.5, 0.0]];
        let (m, _) = pca_fit_transform(&rows, 1).unwrap();
        assert!(m.mean.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn p_out_of_range() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(matches!(pca_fit_transform(&rows, 0), Err(Error::Validation(_))));
        assert!(matches!(pca_fit_transform(&rows, 3), Err(Error::Validation(_))));
        assert!(pca_fit_transform(&rows[..1], 1).is_err());
    }

    #[test]
    fn constant_data_is_allowed() {
        let rows = vec![vec![1.0, 1.0]; 4];
        let (m, s) = pca_fit_transform(&rows, 2).unwrap();
        assert_eq!(m.explained_variance, vec![0.0, 0.0]);
        assert!(s.iter().flatten().all(|v| v.abs() < 1e-15));
    }
}
