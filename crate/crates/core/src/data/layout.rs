use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::{load_metadata, load_subjects, Dataset, Domain, Subject, TimeSeries, TrialMetadata};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split '{other}'"))),
        }
    }
}

/// On-disk corpus layout, mirroring the competition archive:
///
/// ```text
/// root/train/{defog,tdcsfog,notype}/<trial>.csv
/// root/test/{defog,tdcsfog}/<trial>.csv
/// root/defog_metadata.csv      (Defog and Notype trials)
/// root/tdcsfog_metadata.csv
/// root/subjects.csv
/// ```
#[derive(Debug, Clone)]
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn series_dir(&self, split: Split, domain: Domain) -> PathBuf {
        self.root.join(split.as_str()).join(domain.as_str())
    }

    pub fn metadata_path(&self, domain: Domain) -> PathBuf {
        match domain {
            Domain::Defog | Domain::Notype => self.root.join("defog_metadata.csv"),
            Domain::Tdcsfog => self.root.join("tdcsfog_metadata.csv"),
        }
    }

    pub fn subjects_path(&self) -> PathBuf {
        self.root.join("subjects.csv")
    }

    /// Sorted `.csv` files of one split/domain; a missing directory is empty.
    pub fn list_trials(&self, split: Split, domain: Domain) -> Result<Vec<PathBuf>> {
        let dir = self.series_dir(split, domain);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Loads every trial of one split/domain, optionally harmonizing units.
    /// Files load in parallel; the result keeps sorted file order.
    pub fn load_series(&self, split: Split, domain: Domain, harmonize: bool) -> Result<Vec<TimeSeries>> {
        self.list_trials(split, domain)?
            .par_iter()
            .map(|p| {
                let s = super::load_time_series(p, domain)?;
                if harmonize {
                    s.harmonize_units()
                } else {
                    Ok(s)
                }
            })
            .collect()
    }

    pub fn load_tables(&self) -> Result<(BTreeMap<String, TrialMetadata>, BTreeMap<String, Subject>)> {
        let defog = self.metadata_path(Domain::Defog);
        let tdcs = self.metadata_path(Domain::Tdcsfog);
        let paths: Vec<&Path> = [defog.as_path(), tdcs.as_path()]
            .into_iter()
            .filter(|p| p.exists())
            .collect();
        let metadata = load_metadata(&paths)?;
        let subjects = load_subjects(&self.subjects_path())?;
        Ok((metadata, subjects))
    }

    /// Harmonized dataset for one split/domain with the shared tables.
    pub fn load_dataset(&self, split: Split, domain: Domain) -> Result<Dataset> {
        let (metadata, subjects) = self.load_tables()?;
        let series = self.load_series(split, domain, true)?;
        let ds = Dataset {
            series,
            metadata,
            subjects,
            pseudo: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }
}
