//! Dimension reduction, clustering and correlation.
//!
//! Matrices are passed as row slices (`&[Vec<f64>]`, one row per point).

mod cluster;
mod pca;
mod separation;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cluster::{kmeans, silhouette_score, Clustering};
pub use pca::{pca_fit_transform, PcaModel};
pub use separation::{separation_analysis, write_scatter_csv, write_scatter_svg, ScatterPoint, Separation};

use crate::data::Subject;
use crate::error::{Error, Result};

pub const DEFAULT_SUBJECT_CLUSTERS: usize = 3;
pub const KMEANS_MAX_ITER: usize = 300;

pub(crate) fn check_rectangular(rows: &[Vec<f64>], d: usize) -> Result<()> {
    match rows.iter().position(|r| r.len() != d) {
        Some(i) => Err(Error::shape(format!("row {i} has {} columns, expected {d}", rows[i].len()))),
        None => Ok(()),
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::validation(format!(
            "correlation needs equal lengths >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation with a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Column-wise z-scores with the population std. Constant columns are only
/// centered.
pub fn standardize_columns(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = rows.first() else {
        return Ok(Vec::new());
    };
    let d = first.len();
    check_rectangular(rows, d)?;
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let s = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - mean[j]) / std[j]).collect())
        .collect())
}

/// Subject id → cluster index, as used by feature set G.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectClusters {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl SubjectClusters {
    pub fn cluster_of(&self, subject_id: &str) -> Option<usize> {
        self.assignments.get(subject_id).copied()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "Subject,Cluster").map_err(io)?;
        for (s, c) in &self.assignments {
            writeln!(w, "{s},{c}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a `Subject,Cluster` file. `k` is taken as one more than the
    /// largest cluster index unless given.
    pub fn read_csv(path: &Path, k: Option<usize>) -> Result<Self> {
        let file_name = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Schema {
                    file: file_name.clone(),
                    message: format!("{other:?}"),
                },
            })?;
        let headers = reader.headers().map_err(|e| Error::Schema {
            file: file_name.clone(),
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["Subject", "Cluster"] {
            return Err(Error::Schema {
                file: file_name,
                message: format!("expected header Subject,Cluster, got {headers:?}"),
            });
        }
        let mut assignments = BTreeMap::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                file: file_name.clone(),
                row,
                message: e.to_string(),
            })?;
            let c: usize = rec[1].parse().map_err(|_| Error::Parse {
                file: file_name.clone(),
                row,
                message: format!("cluster '{}' is not a non-negative integer", &rec[1]),
            })?;
            if assignments.insert(rec[0].to_string(), c).is_some() {
                return Err(Error::integrity(format!("subject {} listed twice in {file_name}", &rec[0])));
            }
        }
        let max = assignments.values().max().map_or(0, |m| m + 1);
        let k = k.unwrap_or(max);
        if k == 0 || max > k {
            return Err(Error::validation(format!("cluster indices in {file_name} exceed k={k}")));
        }
        Ok(Self { k, assignments })
    }
}

/// Clusters subjects on standardized `[age, years_since_dx, updrs_on,
/// updrs_off, nfogq]`.
pub fn cluster_subjects(subjects: &BTreeMap<String, Subject>, k: usize, seed: u64) -> Result<SubjectClusters> {
    let ids: Vec<&String> = subjects.keys().collect();
    let rows: Vec<Vec<f64>> = subjects
        .values()
        .map(|s| vec![s.age, s.years_since_dx, s.updrs_on, s.updrs_off, s.nfogq])
        .collect();
    let z = standardize_columns(&rows)?;
    let clustering = kmeans(&z, k, seed, KMEANS_MAX_ITER)?;
    Ok(SubjectClusters {
        k,
        assignments: ids
            .into_iter()
            .cloned()
            .zip(clustering.assignments)
            .collect(),
    })
}
