//! Feature sets A–G and per-file summary vectors.
//!
//! | set | columns |
//! |-----|---------|
//! | A | AccV, AccML, AccAP |
//! | B | A + TimeFrac |
//! | C | B + JerkV, JerkML, JerkAP |
//! | D | C + AccM, JerkM |
//! | E | C + Gender, Medication |
//! | F | D + Gender, Medication |
//! | G | C + one-hot subject cluster (k columns) |

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{format_num, Medication, Sex, Subject, TimeSeries, TrialMetadata};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::stable_hash;
use crate::stats::SubjectClusters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSetId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl FeatureSetId {
    pub const ALL: [FeatureSetId; 7] = [
        FeatureSetId::A,
        FeatureSetId::B,
        FeatureSetId::C,
        FeatureSetId::D,
        FeatureSetId::E,
        FeatureSetId::F,
        FeatureSetId::G,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSetId::A => "A",
            FeatureSetId::B => "B",
            FeatureSetId::C => "C",
            FeatureSetId::D => "D",
            FeatureSetId::E => "E",
            FeatureSetId::F => "F",
            FeatureSetId::G => "G",
        }
    }

    /// Column count; set G needs the subject-cluster count.
    pub fn width(self, clusters: usize) -> usize {
        match self {
            FeatureSetId::A => 3,
            FeatureSetId::B => 4,
            FeatureSetId::C => 7,
            FeatureSetId::D | FeatureSetId::E => 9,
            FeatureSetId::F => 11,
            FeatureSetId::G => 7 + clusters,
        }
    }

    pub fn needs_subject(self) -> bool {
        matches!(self, FeatureSetId::E | FeatureSetId::F | FeatureSetId::G)
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSetId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation(format!("unknown feature set '{s}' (expected A..G)")))
    }
}

/// Ordered column names of a feature set. `clusters` is only used by set G.
pub fn feature_columns(set: FeatureSetId, clusters: usize) -> Vec<String> {
    let base = ["AccV", "AccML", "AccAP"];
    let jerk = ["JerkV", "JerkML", "JerkAP"];
    let mut cols: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if set == FeatureSetId::A {
        return cols;
    }
    cols.push("TimeFrac".into());
    if set == FeatureSetId::B {
        return cols;
    }
    cols.extend(jerk.iter().map(|s| s.to_string()));
    match set {
        FeatureSetId::D => cols.extend(["AccM".into(), "JerkM".into()]),
        FeatureSetId::E => cols.extend(["Gender".into(), "Medication".into()]),
        FeatureSetId::F => cols.extend(["AccM".into(), "JerkM".into(), "Gender".into(), "Medication".into()]),
        FeatureSetId::G => cols.extend((0..clusters).map(|k| format!("Cluster{k}"))),
        _ => {}
    }
    cols
}

/// Identifies a feature set together with its exact column order.
pub fn fingerprint(set: FeatureSetId, columns: &[String]) -> String {
    let key = format!("{}|{}", set, columns.join(","));
    format!("{}:{:016x}", set, stable_hash(key.as_bytes()))
}

/// Columns that are z-scored by [`standardize`]; everything else passes
/// through unchanged.
pub fn is_standardized_column(name: &str) -> bool {
    name.starts_with("Acc") || name.starts_with("Jerk")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub trial_id: String,
    pub set_id: FeatureSetId,
    pub columns: Vec<String>,
    /// T×D.
    pub values: Tensor,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.set_id, &self.columns)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.values.get(i, j)).collect()
    }

    /// CSV dump with the column header, one row per timestep.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", self.columns.join(",")).map_err(io)?;
        for i in 0..self.len() {
            let row: Vec<String> = self.values.row(i).iter().map(|&v| format_num(v)).collect();
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// `i/(T-1)`, or `[0.0]` for a single sample.
pub fn compute_time_frac(t: usize) -> Result<Vec<f64>> {
    match t {
        0 => Err(Error::validation("time fraction of an empty series")),
        1 => Ok(vec![0.0]),
        _ => Ok((0..t).map(|i| i as f64 / (t - 1) as f64).collect()),
    }
}

/// Scaled first difference: `j_0 = 0`, `j_i = (a_i - a_{i-1}) · rate`.
pub fn compute_jerk(channel: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    if channel.is_empty() {
        return Err(Error::validation("jerk of an empty series"));
    }
    let mut out = Vec::with_capacity(channel.len());
    out.push(0.0);
    out.extend(channel.windows(2).map(|w| (w[1] - w[0]) * sample_rate_hz));
    Ok(out)
}

pub fn compute_magnitude(acc_v: &[f64], acc_ml: &[f64], acc_ap: &[f64]) -> Result<Vec<f64>> {
    if acc_v.len() != acc_ml.len() || acc_v.len() != acc_ap.len() {
        return Err(Error::shape(format!(
            "magnitude of channels with lengths {}, {}, {}",
            acc_v.len(),
            acc_ml.len(),
            acc_ap.len()
        )));
    }
    Ok(acc_v
        .iter()
        .zip(acc_ml)
        .zip(acc_ap)
        .map(|((v, ml), ap)| (v * v + ml * ml + ap * ap).sqrt())
        .collect())
}

/// Builds the matrix for one trial. Gender is 1 for male, Medication is 1
/// for "on"; both are broadcast as constant columns. Set G appends a
/// one-hot of the subject's cluster.
pub fn build_feature_matrix(
    series: &TimeSeries,
    set: FeatureSetId,
    meta: Option<&TrialMetadata>,
    subject: Option<&Subject>,
    clusters: Option<&SubjectClusters>,
) -> Result<FeatureMatrix> {
    if !series.units_harmonized() {
        return Err(Error::validation(format!(
            "trial {}: features require harmonized units",
            series.trial_id()
        )));
    }
    let t = series.len();
    let rate = series.sample_rate_hz();
    let [v, ml, ap] = series.channels();

    let mut cols: Vec<Vec<f64>> = vec![v.to_vec(), ml.to_vec(), ap.to_vec()];
    if set != FeatureSetId::A {
        cols.push(compute_time_frac(t)?);
    }
    if !matches!(set, FeatureSetId::A | FeatureSetId::B) {
        for ch in [v, ml, ap] {
            cols.push(compute_jerk(ch, rate)?);
        }
    }
    if matches!(set, FeatureSetId::D | FeatureSetId::F) {
        let m = compute_magnitude(v, ml, ap)?;
        let jm = compute_jerk(&m, rate)?;
        cols.push(m);
        cols.push(jm);
    }
    if matches!(set, FeatureSetId::E | FeatureSetId::F) {
        let subject = subject
            .ok_or_else(|| Error::integrity(format!("trial {}: subject record missing", series.trial_id())))?;
        let meta = meta.ok_or_else(|| Error::integrity(format!("trial {}: metadata missing", series.trial_id())))?;
        let gender = if subject.sex == Sex::Male { 1.0 } else { 0.0 };
        let medication = if meta.medication == Medication::On { 1.0 } else { 0.0 };
        cols.push(vec![gender; t]);
        cols.push(vec![medication; t]);
    }
    let mut k = 0;
    if set == FeatureSetId::G {
        let clusters = clusters.ok_or_else(|| {
            Error::MissingDependency(format!(
                "feature set G for trial {} needs a subject cluster map",
                series.trial_id()
            ))
        })?;
        let subject = subject
            .ok_or_else(|| Error::integrity(format!("trial {}: subject record missing", series.trial_id())))?;
        let c = clusters.cluster_of(&subject.subject_id).ok_or_else(|| {
            Error::MissingDependency(format!("subject {} has no cluster assignment", subject.subject_id))
        })?;
        k = clusters.k;
        for j in 0..k {
            cols.push(vec![if j == c { 1.0 } else { 0.0 }; t]);
        }
    }

    let columns = feature_columns(set, k);
    debug_assert_eq!(columns.len(), cols.len());
    let d = cols.len();
    let mut data = Vec::with_capacity(t * d);
    for i in 0..t {
        data.extend(cols.iter().map(|c| c[i]));
    }
    Ok(FeatureMatrix {
        trial_id: series.trial_id().to_string(),
        set_id: set,
        columns,
        values: Tensor::from_vec(vec![t, d], data)?,
    })
}

/// `(mean, max, min, std)` for each of AccV, AccML, AccAP; std is the
/// population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub trial_id: String,
    pub values: [f64; 12],
}

pub fn file_summary_vector(series: &TimeSeries) -> Result<SummaryVector> {
    if series.is_empty() {
        return Err(Error::validation("summary of an empty series"));
    }
    let mut values = [0.0; 12];
    for (c, ch) in series.channels().iter().enumerate() {
        let n = ch.len() as f64;
        let mean = ch.iter().sum::<f64>() / n;
        let max = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ch.iter().copied().fold(f64::INFINITY, f64::min);
        let var = ch.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        // rounding can push a constant channel's mean past its max
        values[4 * c..4 * c + 4].copy_from_slice(&[mean.clamp(min, max), max, min, var.sqrt()]);
    }
    Ok(SummaryVector {
        trial_id: series.trial_id().to_string(),
        values,
    })
}

/// Per-column mean and population std, fit on training matrices only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let matrices: Vec<&FeatureMatrix> = matrices.into_iter().collect();
        let first = matrices
            .first()
            .ok_or_else(|| Error::validation("standardization needs at least one matrix"))?;
        if matrices.iter().any(|m| m.columns != first.columns) {
            return Err(Error::integrity("standardization over matrices with different columns"));
        }
        let d = first.width();
        let n: usize = matrices.iter().map(|m| m.len()).sum();
        if n == 0 {
            return Err(Error::validation("standardization over zero rows"));
        }
        let rows = || matrices.iter().flat_map(|m| (0..m.len()).map(move |i| m.values.row(i)));
        let mut mean = vec![0.0; d];
        for row in rows() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        Ok(Self {
            columns: first.columns.clone(),
            mean,
            std: var.into_iter().map(|v| (v / n as f64).sqrt()).collect(),
        })
    }

    pub fn identity(columns: &[String]) -> Self {
        Self {
            columns: columns.to_vec(),
            mean: vec![0.0; columns.len()],
            std: vec![1.0; columns.len()],
        }
    }
}

/// z-scores acceleration, jerk and magnitude columns. Columns whose std is
/// zero, and TimeFrac / Gender / Medication / cluster columns, are passed
/// through unchanged.
pub fn standardize(matrix: &FeatureMatrix, stats: &Standardization) -> Result<FeatureMatrix> {
    if matrix.columns != stats.columns {
        return Err(Error::integrity(format!(
            "standardization columns {:?} do not match matrix columns {:?}",
            stats.columns, matrix.columns
        )));
    }
    let mut out = matrix.clone();
    let d = matrix.width();
    let active: Vec<bool> = (0..d)
        .map(|j| is_standardized_column(&matrix.columns[j]) && stats.std[j] > 0.0)
        .collect();
    for i in 0..out.len() {
        let row = out.values.row_mut(i);
        for j in 0..d {
            if active[j] {
                row[j] = (row[j] - stats.mean[j]) / stats.std[j];
            }
        }
    }
    Ok(out)
}
