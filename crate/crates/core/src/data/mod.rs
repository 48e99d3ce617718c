//! Dataset domain model: trials, per-trial metadata and subjects.

mod io;
mod layout;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use io::{
    format_num, load_metadata, load_metadata_and_subjects, load_subjects, load_time_series,
    write_metadata, write_subjects, write_time_series,
};
pub use layout::{DataLayout, Split};
pub use synth::{
    generate_corpus, generate_trial, synthetic_trial_id, Corpus, CorpusPlan, Episode, EpisodeKind,
};

/// Conversion factor for Defog/Notype files, which store acceleration in g.
pub const G_TO_MS2: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Defog,
    Tdcsfog,
    Notype,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Defog, Domain::Tdcsfog, Domain::Notype];

    pub fn sample_rate_hz(self) -> f64 {
        match self {
            Domain::Defog | Domain::Notype => 124.0,
            Domain::Tdcsfog => 100.0,
        }
    }

    /// Multiplier from file units to m/s².
    pub fn unit_scale(self) -> f64 {
        match self {
            Domain::Defog | Domain::Notype => G_TO_MS2,
            Domain::Tdcsfog => 1.0,
        }
    }

    pub fn is_typed(self) -> bool {
        !matches!(self, Domain::Notype)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Defog => "defog",
            Domain::Tdcsfog => "tdcsfog",
            Domain::Notype => "notype",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "defog" => Ok(Domain::Defog),
            "tdcsfog" => Ok(Domain::Tdcsfog),
            "notype" => Ok(Domain::Notype),
            other => Err(Error::validation(format!("unknown domain '{other}'"))),
        }
    }
}

/// The three annotated FOG event types, in output-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventType {
    StartHesitation,
    Turn,
    Walking,
}

impl EventType {
    pub const ALL: [EventType; 3] = [EventType::StartHesitation, EventType::Turn, EventType::Walking];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            EventType::StartHesitation => "StartHesitation",
            EventType::Turn => "Turn",
            EventType::Walking => "Walking",
        }
    }
}

/// Per-timestep annotation block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Labels {
    /// StartHesitation, Turn, Walking.
    Typed(Vec<[u8; 3]>),
    /// Untyped event flag (Notype trials).
    Event(Vec<u8>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Typed(v) => v.len(),
            Labels::Event(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn typed(&self) -> Option<&[[u8; 3]]> {
        match self {
            Labels::Typed(v) => Some(v),
            Labels::Event(_) => None,
        }
    }

    pub fn event(&self) -> Option<&[u8]> {
        match self {
            Labels::Event(v) => Some(v),
            Labels::Typed(_) => None,
        }
    }

    /// T×3 label tensor. Only defined for typed labels.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let rows = self
            .typed()
            .ok_or_else(|| Error::validation("untyped labels have no 3-class tensor"))?;
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| f64::from(v))).collect();
        Tensor::from_vec(vec![rows.len(), 3], data)
    }
}

/// One trial: timestamped 3-axis lower-back acceleration plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    trial_id: String,
    domain: Domain,
    acc_v: Vec<f64>,
    acc_ml: Vec<f64>,
    acc_ap: Vec<f64>,
    labels: Labels,
    units_harmonized: bool,
}

impl TimeSeries {
    pub fn new(
        trial_id: impl Into<String>,
        domain: Domain,
        acc_v: Vec<f64>,
        acc_ml: Vec<f64>,
        acc_ap: Vec<f64>,
        labels: Labels,
    ) -> Result<Self> {
        let trial_id = trial_id.into();
        let t = acc_v.len();
        if t == 0 {
            return Err(Error::validation(format!("trial {trial_id}: empty series")));
        }
        if acc_ml.len() != t || acc_ap.len() != t || labels.len() != t {
            return Err(Error::shape(format!(
                "trial {trial_id}: channel lengths differ (v={t}, ml={}, ap={}, labels={})",
                acc_ml.len(),
                acc_ap.len(),
                labels.len()
            )));
        }
        match (&labels, domain.is_typed()) {
            (Labels::Typed(rows), true) => {
                for (i, row) in rows.iter().enumerate() {
                    if row.iter().any(|&v| v > 1) {
                        return Err(Error::validation(format!("trial {trial_id}: non-binary label at row {i}")));
                    }
                    if row.iter().map(|&v| u32::from(v)).sum::<u32>() > 1 {
                        return Err(Error::validation(format!(
                            "trial {trial_id}: more than one event type active at row {i}"
                        )));
                    }
                }
            }
            (Labels::Event(rows), false) => {
                if let Some(i) = rows.iter().position(|&v| v > 1) {
                    return Err(Error::validation(format!("trial {trial_id}: non-binary event at row {i}")));
                }
            }
            _ => {
                return Err(Error::validation(format!(
                    "trial {trial_id}: label block does not match domain {domain}"
                )))
            }
        }
        Ok(Self {
            trial_id,
            domain,
            acc_v,
            acc_ml,
            acc_ap,
            labels,
            units_harmonized: false,
        })
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.domain.sample_rate_hz()
    }

    pub fn len(&self) -> usize {
        self.acc_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc_v.is_empty()
    }

    pub fn acc_v(&self) -> &[f64] {
        &self.acc_v
    }

    pub fn acc_ml(&self) -> &[f64] {
        &self.acc_ml
    }

    pub fn acc_ap(&self) -> &[f64] {
        &self.acc_ap
    }

    pub fn channels(&self) -> [&[f64]; 3] {
        [&self.acc_v, &self.acc_ml, &self.acc_ap]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn units_harmonized(&self) -> bool {
        self.units_harmonized
    }

    /// Converts file units to m/s². Defog and Notype channels are scaled by
    /// 9.81, Tdcsfog is already in m/s². A second call is an error.
    pub fn harmonize_units(mut self) -> Result<Self> {
        if self.units_harmonized {
            return Err(Error::validation(format!(
                "trial {}: units already harmonized",
                self.trial_id
            )));
        }
        let scale = self.domain.unit_scale();
        if scale != 1.0 {
            for ch in [&mut self.acc_v, &mut self.acc_ml, &mut self.acc_ap] {
                ch.iter_mut().for_each(|x| *x *= scale);
            }
        }
        self.units_harmonized = true;
        Ok(self)
    }

    /// Re-domains an untyped trial as a typed one. Used by pseudo-labelling
    /// to move Notype trials into the Defog training pool.
    pub(crate) fn with_typed_labels(&self, domain: Domain, labels: Vec<[u8; 3]>) -> Result<Self> {
        let mut out = TimeSeries::new(
            self.trial_id.clone(),
            domain,
            self.acc_v.clone(),
            self.acc_ml.clone(),
            self.acc_ap.clone(),
            Labels::Typed(labels),
        )?;
        out.units_harmonized = self.units_harmonized;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medication {
    On,
    Off,
}

impl FromStr for Medication {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "on" => Ok(Medication::On),
            "off" => Ok(Medication::Off),
            other => Err(Error::validation(format!("medication must be 'on' or 'off', got '{other}'"))),
        }
    }
}

impl Medication {
    pub fn as_str(self) -> &'static str {
        match self {
            Medication::On => "on",
            Medication::Off => "off",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub trial_id: String,
    pub subject_id: String,
    pub medication: Medication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            other => Err(Error::validation(format!("unknown sex '{other}'"))),
        }
    }
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub subject_id: String,
    pub age: f64,
    pub sex: Sex,
    pub years_since_dx: f64,
    pub updrs_on: f64,
    pub updrs_off: f64,
    pub nfogq: f64,
}

impl Subject {
    pub fn validate(&self) -> Result<()> {
        if !(self.age > 0.0) {
            return Err(Error::validation(format!("subject {}: age must be > 0", self.subject_id)));
        }
        if !(self.nfogq >= 0.0) {
            return Err(Error::validation(format!("subject {}: NFOGQ must be >= 0", self.subject_id)));
        }
        Ok(())
    }
}

/// Where a pseudo-labelled trial came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub group_id: String,
    pub feature_set: crate::features::FeatureSetId,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub series: Vec<TimeSeries>,
    pub metadata: BTreeMap<String, TrialMetadata>,
    pub subjects: BTreeMap<String, Subject>,
    /// Trials carrying generated (pseudo) labels, keyed by trial id.
    pub pseudo: BTreeMap<String, Provenance>,
}

impl Dataset {
    /// Checks referential integrity and trial-id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.series {
            if !seen.insert(s.trial_id()) {
                return Err(Error::integrity(format!("duplicate trial id {}", s.trial_id())));
            }
            if !self.metadata.contains_key(s.trial_id()) {
                return Err(Error::integrity(format!("trial {} has no metadata", s.trial_id())));
            }
        }
        for m in self.metadata.values() {
            if !self.subjects.contains_key(&m.subject_id) {
                return Err(Error::integrity(format!(
                    "trial {} references unknown subject {}",
                    m.trial_id, m.subject_id
                )));
            }
        }
        Ok(())
    }

    pub fn is_pseudo(&self, trial_id: &str) -> bool {
        self.pseudo.contains_key(trial_id)
    }

    pub fn subject_for(&self, trial_id: &str) -> Option<&Subject> {
        self.metadata.get(trial_id).and_then(|m| self.subjects.get(&m.subject_id))
    }
}
