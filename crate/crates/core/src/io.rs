//! File formats: JSON histograms and query families, CSV records.
//!
//! Private inputs are read from disk like any other file. File handling,
//! permissions and deletion lie outside the privacy guarantee.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::domain::{Domain, Schema};
use crate::error::{invalid, Error, Result};
use crate::histogram::Histogram;
use crate::query::{BinaryFamily, BinaryQuery, RealFamily, RealQuery};
use crate::workload::Workload;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same value.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_histogram(path: &Path) -> Result<Histogram> {
    read_json(path)
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let s: Schema = read_json(path)?;
    Schema::new(s.attributes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Binary,
    Real,
}

/// On-disk query family: binary queries as sorted support indices, real
/// queries as value arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub domain_size: usize,
    pub kind: FamilyKind,
    pub queries: Vec<serde_json::Value>,
}

impl FamilyFile {
    pub fn from_workload(w: &Workload) -> Self {
        match w {
            Workload::Binary(f) => FamilyFile {
                domain_size: f.domain_size(),
                kind: FamilyKind::Binary,
                queries: f.queries().iter().map(|q| serde_json::json!(q.support().to_indices())).collect(),
            },
            Workload::Real(f) => FamilyFile {
                domain_size: f.domain_size(),
                kind: FamilyKind::Real,
                queries: f.queries().iter().map(|q| serde_json::json!(q.values())).collect(),
            },
        }
    }

    pub fn into_workload(self) -> Result<Workload> {
        let d = self.domain_size;
        match self.kind {
            FamilyKind::Binary => {
                let qs = self
                    .queries
                    .into_iter()
                    .map(|v| {
                        let idx: Vec<usize> = serde_json::from_value(v)?;
                        Ok(BinaryQuery::new(Bitset::from_indices(d, idx)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Workload::Binary(BinaryFamily::new(d, qs)?))
            }
            FamilyKind::Real => {
                let qs = self
                    .queries
                    .into_iter()
                    .map(|v| RealQuery::new(serde_json::from_value(v)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Workload::Real(RealFamily::new(d, qs)?))
            }
        }
    }
}

pub fn read_workload(path: &Path) -> Result<Workload> {
    read_json::<FamilyFile>(path)?.into_workload()
}

pub fn write_workload(path: &Path, w: &Workload) -> Result<()> {
    write_json(path, &FamilyFile::from_workload(w))
}

/// Reads labelled records; columns are matched to attributes by header name.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<(Domain, Histogram)> {
    let domain = Domain::with_schema(schema.clone())?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Malformed(format!("{}: empty file", path.display())));
    }
    let columns = schema
        .attributes
        .iter()
        .map(|a| {
            headers
                .iter()
                .position(|h| h.trim() == a.name)
                .ok_or_else(|| Error::Malformed(format!("header lacks attribute column {:?}", a.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut digits = Vec::with_capacity(columns.len());
        for (a, &c) in schema.attributes.iter().zip(&columns) {
            let label = rec.get(c).unwrap_or("").trim();
            let d = a.categories.iter().position(|cat| cat == label).ok_or_else(|| Error::UnknownLabel {
                row: row + 1,
                column: a.name.clone(),
                label: label.to_string(),
            })?;
            digits.push(d);
        }
        records.push(domain.encode(&digits)?);
    }
    if records.is_empty() {
        return Err(Error::Malformed(format!("{}: no data rows", path.display())));
    }
    let h = Histogram::from_records(&records, &domain)?;
    Ok((domain, h))
}

/// Writes domain indices as labelled CSV rows, or as a single `index` column
/// without a schema.
pub fn records_to_csv<W: Write>(out: W, domain: &Domain, records: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match domain.schema() {
        Some(s) => {
            w.write_record(s.attributes.iter().map(|a| a.name.as_str()))?;
            for &x in records {
                w.write_record(domain.decode_labels(x)?)?;
            }
        }
        None => {
            w.write_record(["index"])?;
            for &x in records {
                w.write_record([x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes an integer histogram as one CSV row per record, in domain order.
pub fn export_csv(path: &Path, domain: &Domain, h: &Histogram) -> Result<()> {
    h.require_integral()?;
    if h.domain_size() != domain.size() {
        return Err(invalid("histogram", "domain size does not match the schema"));
    }
    let records: Vec<usize> = h
        .weights()
        .iter()
        .enumerate()
        .flat_map(|(x, &w)| std::iter::repeat_n(x, w as usize))
        .collect();
    records_to_csv(fs::File::create(path)?, domain, &records)
}
