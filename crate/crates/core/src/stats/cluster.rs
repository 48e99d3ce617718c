use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_rectangular, sq_dist};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each centroid update.
    pub wcss_history: Vec<f64>,
}

impl Clustering {
    pub fn wcss(&self, rows: &[Vec<f64>]) -> f64 {
        wcss(rows, &self.assignments, &self.centroids)
    }
}

fn wcss(rows: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    rows.iter().zip(assignments).map(|(r, &a)| sq_dist(r, &centroids[a])).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn plus_plus_init(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = rows.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..rows.len())
        };
        let c = rows[pick].clone();
        for (di, r) in d2.iter_mut().zip(rows) {
            *di = di.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from a seeded k-means++ start. A cluster that loses all
/// of its points has its centroid moved onto the point farthest from its own
/// centroid.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let d = rows[0].len();
    check_rectangular(rows, d)?;

    let mut centroids = plus_plus_init(rows, k, seed);
    let mut assignments: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids)).collect();
    let mut wcss_history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in rows.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq_dist(&rows[i], &centroids[assignments[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centroids[c] = rows[far].clone();
            }
        }
        wcss_history.push(wcss(rows, &assignments, &centroids));

        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    Ok(Clustering {
        k,
        assignments,
        centroids,
        iterations,
        wcss_history,
    })
}

/// Mean silhouette over all points; points in singleton clusters score 0.
pub fn silhouette_score(rows: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let n = rows.len();
    if n < 2 || assignments.len() != n {
        return Err(Error::validation(format!(
            "silhouette needs N >= 2 rows with one label each, got {n} rows and {} labels",
            assignments.len()
        )));
    }
    check_rectangular(rows, rows[0].len())?;
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Undefined("silhouette is undefined for a single cluster".into()));
    }

    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += sq_dist(&rows[i], &rows[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
