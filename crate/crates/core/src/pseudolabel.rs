//! Typed labels for Notype trials from a Defog model group's predictions.
//!
//! Where `Event = 1` the class with the highest predicted probability
//! becomes the event type (ties go to the lower class index); everywhere
//! else all three columns stay 0.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::data::{load_time_series, write_time_series, Dataset, Domain, Labels, Provenance, TimeSeries};
use crate::error::{Error, Result};
use crate::features::FeatureSetId;
use crate::nn::Tensor;

/// A Notype trial relabelled as a typed Defog trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledSeries {
    pub series: TimeSeries,
    pub provenance: Provenance,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn assign_pseudo_labels(
    series: &TimeSeries,
    probabilities: &Tensor,
    provenance: Provenance,
) -> Result<PseudoLabeledSeries> {
    let Labels::Event(events) = series.labels() else {
        return Err(Error::validation(format!(
            "trial {}: pseudo labels need an untyped (Notype) trial",
            series.trial_id()
        )));
    };
    if probabilities.shape() != [series.len(), 3] {
        return Err(Error::shape(format!(
            "trial {}: {} timesteps but probabilities {:?}",
            series.trial_id(),
            series.len(),
            probabilities.shape()
        )));
    }
    let labels = events
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut row = [0u8; 3];
            if e == 1 {
                row[argmax_first(probabilities.row(i))] = 1;
            }
            row
        })
        .collect();
    Ok(PseudoLabeledSeries {
        series: series.with_typed_labels(Domain::Defog, labels)?,
        provenance,
    })
}

/// Defog trials plus pseudo-labelled ones, flagged in `Dataset::pseudo`.
/// The pseudo labels must come from a group of `feature_set`.
pub fn build_augmented_dataset(
    defog: &Dataset,
    pseudo: &[PseudoLabeledSeries],
    feature_set: FeatureSetId,
) -> Result<Dataset> {
    let mut out = defog.clone();
    let mut ids: BTreeSet<String> = defog.series.iter().map(|s| s.trial_id().to_string()).collect();
    for p in pseudo {
        if p.provenance.feature_set != feature_set {
            return Err(Error::integrity(format!(
                "trial {} was pseudo-labelled by a feature set {} group, cannot retrain feature set {feature_set}",
                p.series.trial_id(),
                p.provenance.feature_set
            )));
        }
        if !ids.insert(p.series.trial_id().to_string()) {
            return Err(Error::integrity(format!(
                "duplicate trial id {} in augmented dataset",
                p.series.trial_id()
            )));
        }
        out.series.push(p.series.clone());
        out.pseudo.insert(p.series.trial_id().to_string(), p.provenance.clone());
    }
    out.validate()?;
    Ok(out)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("provenance.json")
}

/// Writes `<trial>.csv` in the typed schema and a `<trial>.provenance.json`
/// sidecar into `dir`.
pub fn write_pseudo_labeled(dir: &Path, p: &PseudoLabeledSeries) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", p.series.trial_id()));
    write_time_series(&csv, &p.series)?;
    let side = sidecar_path(&csv);
    std::fs::write(&side, serde_json::to_string_pretty(&p.provenance)? + "\n").map_err(|e| Error::io(&side, e))?;
    Ok(csv)
}

/// Reads every pseudo-labelled trial in `dir` (sorted by file name) with
/// harmonized units. A CSV without its sidecar is an integrity error.
pub fn load_pseudo_labeled(dir: &Path) -> Result<Vec<PseudoLabeledSeries>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|csv| {
            let side = sidecar_path(csv);
            if !side.exists() {
                return Err(Error::integrity(format!("{} has no provenance sidecar", csv.display())));
            }
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            Ok(PseudoLabeledSeries {
                series: load_time_series(csv, Domain::Defog)?.harmonize_units()?,
                provenance: serde_json::from_str(&text)?,
            })
        })
        .collect()
}
