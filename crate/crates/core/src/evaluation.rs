//! Ranking and calibration metrics and the weighted score combinations.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::stable_hash;

pub const W_DEFOG: f64 = 0.657;
pub const W_TDCS: f64 = 0.343;
pub const W_PRIVATE: f64 = 0.68;
pub const W_PUBLIC: f64 = 0.32;
const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leaderboard {
    Private,
    Public,
}

/// Deterministic private/public assignment of a test trial; about 68% of
/// ids land on the private side.
pub fn leaderboard_of(trial_id: &str) -> Leaderboard {
    if stable_hash(trial_id.as_bytes()) % 100 < 68 {
        Leaderboard::Private
    } else {
        Leaderboard::Public
    }
}

/// Average precision of `scores` against binary `labels`. Scores are ranked
/// in descending order with ties kept in their original order.
/// Returns [`Error::Undefined`] when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("average precision of NaN scores".into()));
    }
    let positives = labels.iter().filter(|&&l| l != 0).count();
    if positives == 0 {
        return Err(Error::Undefined("average precision without positive labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] != 0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

fn check_same_shape(p: &Tensor, y: &Tensor) -> Result<()> {
    if p.shape() != y.shape() || p.shape().len() != 2 {
        return Err(Error::shape(format!(
            "probabilities {:?} and labels {:?} differ",
            p.shape(),
            y.shape()
        )));
    }
    Ok(())
}

/// Per-class AP averaged over the classes that have at least one positive.
pub fn map_score(probabilities: &Tensor, labels: &Tensor) -> Result<f64> {
    check_same_shape(probabilities, labels)?;
    let mut total = 0.0;
    let mut classes = 0usize;
    for c in 0..labels.cols() {
        let y: Vec<u8> = (0..labels.rows()).map(|i| u8::from(labels.get(i, c) >= 0.5)).collect();
        if !y.contains(&1) {
            continue;
        }
        let s: Vec<f64> = (0..probabilities.rows()).map(|i| probabilities.get(i, c)).collect();
        total += average_precision(&s, &y)?;
        classes += 1;
    }
    if classes == 0 {
        return Err(Error::Undefined("MAP undefined: no class has a positive label".into()));
    }
    Ok(total / classes as f64)
}

pub fn mae(probabilities: &Tensor, labels: &Tensor) -> Result<f64> {
    check_same_shape(probabilities, labels)?;
    if probabilities.is_empty() {
        return Err(Error::validation("MAE of an empty input"));
    }
    let sum: f64 = probabilities
        .data()
        .iter()
        .zip(labels.data())
        .map(|(p, y)| (p - y).abs())
        .sum();
    Ok(sum / probabilities.len() as f64)
}

fn weighted(a: f64, b: f64, wa: f64, wb: f64) -> Result<f64> {
    if ((wa + wb) - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::validation(format!("weights {wa} and {wb} do not sum to 1")));
    }
    for v in [a, b] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::validation(format!("score {v} outside [0, 1]")));
        }
    }
    Ok(wa * a + wb * b)
}

pub fn feature_set_performance_weighted(dmap: f64, tmap: f64, w_defog: f64, w_tdcs: f64) -> Result<f64> {
    weighted(dmap, tmap, w_defog, w_tdcs)
}

/// `0.657·DMAP + 0.343·TMAP`.
pub fn feature_set_performance(dmap: f64, tmap: f64) -> Result<f64> {
    weighted(dmap, tmap, W_DEFOG, W_TDCS)
}

pub fn combined_score_weighted(private: f64, public: f64, w_private: f64, w_public: f64) -> Result<f64> {
    weighted(private, public, w_private, w_public)
}

/// `0.68·private + 0.32·public`.
pub fn combined_score(private: f64, public: f64) -> Result<f64> {
    weighted(private, public, W_PRIVATE, W_PUBLIC)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature_set: String,
    pub dmap: f64,
    pub tmap: f64,
    pub fp: f64,
    pub private: Option<f64>,
    pub public: Option<f64>,
    pub total: Option<f64>,
}

impl ReportRow {
    /// Fills FP and, when both test scores are present, the total.
    pub fn new(feature_set: impl Into<String>, dmap: f64, tmap: f64, test: Option<(f64, f64)>) -> Result<Self> {
        let fp = feature_set_performance(dmap, tmap)?;
        let total = test.map(|(p, q)| combined_score(p, q)).transpose()?;
        Ok(Self {
            feature_set: feature_set.into(),
            dmap,
            tmap,
            fp,
            private: test.map(|t| t.0),
            public: test.map(|t| t.1),
            total,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

const HEADER: [&str; 7] = ["FeatSet", "DMAP", "TMAP", "FP", "Private", "Public", "Total"];

impl EvaluationReport {
    fn cells(row: &ReportRow) -> [String; 7] {
        let f = |v: f64| format!("{v:.3}");
        let o = |v: Option<f64>| v.map(f).unwrap_or_default();
        [
            row.feature_set.clone(),
            f(row.dmap),
            f(row.tmap),
            f(row.fp),
            o(row.private),
            o(row.public),
            o(row.total),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "## {}\n", self.title);
        }
        let _ = writeln!(out, "| {} |", HEADER.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", Self::cells(row).join(" | "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&Self::cells(row).join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.md` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (ext, text) in [("md", self.to_markdown()), ("csv", self.to_csv())] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
