//! CSV ingestion and emission for series, metadata and subject files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{Domain, Labels, Medication, Sex, Subject, TimeSeries, TrialMetadata};
use crate::error::{Error, Result};

const SERIES_COLUMNS: [&str; 4] = ["Time", "AccV", "AccML", "AccAP"];
const TYPED_LABELS: [&str; 3] = ["StartHesitation", "Turn", "Walking"];
const EVENT_LABEL: &str = "Event";
const METADATA_COLUMNS: [&str; 3] = ["Id", "Subject", "Medication"];
const SUBJECT_COLUMNS: [&str; 7] = ["Subject", "Age", "Sex", "YearsSinceDx", "UPDRS_On", "UPDRS_Off", "NFOGQ"];

/// Decimal text with at most 9 significant digits.
pub fn format_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Maps each required column to its position; warns on extras.
fn column_index(path: &Path, header: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>> {
    let names: Vec<&str> = header.iter().collect();
    let mut idx = Vec::with_capacity(required.len());
    let mut missing = Vec::new();
    for col in required {
        match names.iter().position(|n| n == col) {
            Some(i) => idx.push(i),
            None => missing.push(*col),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema {
            file: file_label(path),
            message: format!("missing columns {missing:?}; header is {names:?}"),
        });
    }
    let extra: Vec<&str> = names.iter().filter(|n| !required.contains(n)).copied().collect();
    if !extra.is_empty() {
        warn!("{}: ignoring extra columns {extra:?}", file_label(path));
    }
    Ok(idx)
}

fn records(path: &Path, reader: &mut csv::Reader<File>, width: usize) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            file: file_label(path),
            row,
            message: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(Error::Parse {
                file: file_label(path),
                row,
                message: format!("ragged row: expected {width} fields, found {}", rec.len()),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn parse_f64(path: &Path, row: usize, col: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            file: file_label(path),
            row,
            message: format!("column {col}: '{cell}' is not a finite number"),
        })
}

fn parse_flag(path: &Path, row: usize, col: &str, cell: &str) -> Result<u8> {
    let v = parse_f64(path, row, col, cell)?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Parse {
            file: file_label(path),
            row,
            message: format!("column {col}: label must be 0 or 1, got '{cell}'"),
        })
    }
}

/// Loads one trial file. The trial id is the file stem. Row indices in
/// errors count data rows from 0.
pub fn load_time_series(path: &Path, domain: Domain) -> Result<TimeSeries> {
    let trial_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::validation(format!("cannot derive trial id from {}", path.display())))?
        .to_string();

    let mut required: Vec<&str> = SERIES_COLUMNS.to_vec();
    if domain.is_typed() {
        required.extend(TYPED_LABELS);
    } else {
        required.push(EVENT_LABEL);
    }

    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema {
            file: file_label(path),
            message: e.to_string(),
        })?
        .clone();
    let idx = column_index(path, &header, &required)?;
    let rows = records(path, &mut reader, header.len())?;

    let n = rows.len();
    let (mut v, mut ml, mut ap) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut typed = Vec::new();
    let mut event = Vec::new();
    for (row, rec) in rows.iter().enumerate() {
        let time = &rec[idx[0]];
        if time.parse::<i64>().is_err() && parse_f64(path, row, "Time", time).is_err() {
            return Err(Error::Parse {
                file: file_label(path),
                row,
                message: format!("column Time: '{time}' is not numeric"),
            });
        }
        v.push(parse_f64(path, row, "AccV", &rec[idx[1]])?);
        ml.push(parse_f64(path, row, "AccML", &rec[idx[2]])?);
        ap.push(parse_f64(path, row, "AccAP", &rec[idx[3]])?);
        if domain.is_typed() {
            let mut r = [0u8; 3];
            for k in 0..3 {
                r[k] = parse_flag(path, row, TYPED_LABELS[k], &rec[idx[4 + k]])?;
            }
            typed.push(r);
        } else {
            event.push(parse_flag(path, row, EVENT_LABEL, &rec[idx[4]])?);
        }
    }
    let labels = if domain.is_typed() {
        Labels::Typed(typed)
    } else {
        Labels::Event(event)
    };
    TimeSeries::new(trial_id, domain, v, ml, ap, labels)
}

/// Writes a trial in its domain's file schema and file units; a harmonized
/// series is converted back before writing.
pub fn write_time_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match series.labels() {
        Labels::Typed(_) => writeln!(w, "Time,AccV,AccML,AccAP,StartHesitation,Turn,Walking").map_err(io)?,
        Labels::Event(_) => writeln!(w, "Time,AccV,AccML,AccAP,Event").map_err(io)?,
    }
    let [v, ml, ap] = series.channels();
    let scale = if series.units_harmonized() {
        series.domain().unit_scale()
    } else {
        1.0
    };
    for i in 0..series.len() {
        write!(
            w,
            "{i},{},{},{}",
            format_num(v[i] / scale),
            format_num(ml[i] / scale),
            format_num(ap[i] / scale)
        )
        .map_err(io)?;
        match series.labels() {
            Labels::Typed(rows) => {
                let r = rows[i];
                writeln!(w, ",{},{},{}", r[0], r[1], r[2]).map_err(io)?
            }
            Labels::Event(rows) => writeln!(w, ",{}", rows[i]).map_err(io)?,
        }
    }
    w.flush().map_err(io)
}

/// Loads one or more metadata files (`Id,Subject,Medication`) into a single
/// map. A trial id appearing twice, in one file or across files, is an
/// integrity error.
pub fn load_metadata(paths: &[&Path]) -> Result<BTreeMap<String, TrialMetadata>> {
    let mut out = BTreeMap::new();
    for path in paths {
        let mut reader = open_reader(path)?;
        let header = reader
            .headers()
            .map_err(|e| Error::Schema {
                file: file_label(path),
                message: e.to_string(),
            })?
            .clone();
        let idx = column_index(path, &header, &METADATA_COLUMNS)?;
        for (row, rec) in records(path, &mut reader, header.len())?.iter().enumerate() {
            let trial_id = rec[idx[0]].to_string();
            let medication: Medication = rec[idx[2]].parse().map_err(|e: Error| Error::Parse {
                file: file_label(path),
                row,
                message: e.to_string(),
            })?;
            let meta = TrialMetadata {
                trial_id: trial_id.clone(),
                subject_id: rec[idx[1]].to_string(),
                medication,
            };
            if out.insert(trial_id.clone(), meta).is_some() {
                return Err(Error::integrity(format!(
                    "duplicate trial id {trial_id} in metadata ({})",
                    file_label(path)
                )));
            }
        }
    }
    Ok(out)
}

pub fn load_subjects(path: &Path) -> Result<BTreeMap<String, Subject>> {
    let mut reader = open_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::Schema {
            file: file_label(path),
            message: e.to_string(),
        })?
        .clone();
    let idx = column_index(path, &header, &SUBJECT_COLUMNS)?;
    let mut out = BTreeMap::new();
    for (row, rec) in records(path, &mut reader, header.len())?.iter().enumerate() {
        let num = |k: usize| parse_f64(path, row, SUBJECT_COLUMNS[k], &rec[idx[k]]);
        let sex: Sex = rec[idx[2]].parse().map_err(|e: Error| Error::Parse {
            file: file_label(path),
            row,
            message: e.to_string(),
        })?;
        let subject = Subject {
            subject_id: rec[idx[0]].to_string(),
            age: num(1)?,
            sex,
            years_since_dx: num(3)?,
            updrs_on: num(4)?,
            updrs_off: num(5)?,
            nfogq: num(6)?,
        };
        subject.validate()?;
        let id = subject.subject_id.clone();
        if out.insert(id.clone(), subject).is_some() {
            return Err(Error::integrity(format!("duplicate subject id {id}")));
        }
    }
    Ok(out)
}

pub fn load_metadata_and_subjects(
    meta_paths: &[&Path],
    subject_path: &Path,
) -> Result<(BTreeMap<String, TrialMetadata>, BTreeMap<String, Subject>)> {
    Ok((load_metadata(meta_paths)?, load_subjects(subject_path)?))
}

pub fn write_metadata<'a>(path: &Path, rows: impl IntoIterator<Item = &'a TrialMetadata>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", METADATA_COLUMNS.join(",")).map_err(io)?;
    for m in rows {
        writeln!(w, "{},{},{}", m.trial_id, m.subject_id, m.medication.as_str()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_subjects<'a>(path: &Path, rows: impl IntoIterator<Item = &'a Subject>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", SUBJECT_COLUMNS.join(",")).map_err(io)?;
    for s in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.subject_id,
            format_num(s.age),
            s.sex.as_str(),
            format_num(s.years_since_dx),
            format_num(s.updrs_on),
            format_num(s.updrs_off),
            format_num(s.nfogq)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
