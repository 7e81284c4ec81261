use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use super::montecarlo::{chunk_rng, chunks, Sampler};
use super::{InferenceError, Result};
use crate::model::Scm;
use crate::value::Value;
use crate::worlds::{Plan, WorldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("dataset has no header row")]
    Empty,
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column `{column}`: `{text}` is not a value literal")]
    BadCell { row: usize, column: String, text: String },
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

/// Rows of observed values with named columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Dataset {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| InferenceError::UnknownColumn(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes a header row then one row per record, LF-terminated.
    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), DatasetError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::to_string))?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> std::result::Result<Dataset, DatasetError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
        let mut records = r.records();
        let header = records.next().ok_or(DatasetError::Empty)??;
        let columns: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != columns.len() {
                return Err(DatasetError::Ragged { row, expected: columns.len(), found: rec.len() });
            }
            let vals = rec
                .iter()
                .zip(&columns)
                .map(|(text, col)| {
                    Value::parse_literal(text).ok_or_else(|| DatasetError::BadCell {
                        row,
                        column: col.clone(),
                        text: text.to_string(),
                    })
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            rows.push(vals);
        }
        Ok(Dataset { columns, rows })
    }
}

/// Draws `n` observational records, keeping only observed variables.
pub fn sample_dataset(scm: &Scm, n: u64, seed: u64) -> Result<Dataset> {
    let plan = Plan::compile(scm, &WorldSpec::Observational)?;
    let observed: Vec<usize> = (0..scm.len()).filter(|&i| scm.decl(i).is_observed()).collect();
    let sampler = Sampler::new(scm);
    let parts: Vec<Vec<Vec<Value>>> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| -> Result<Vec<Vec<Value>>> {
            let mut rng = chunk_rng(seed, c);
            let mut cfg = vec![0u32; scm.len()];
            let mut out = vec![0u32; scm.len()];
            let mut rows = Vec::with_capacity(len as usize);
            for _ in 0..len {
                sampler.draw(&mut rng, &mut cfg);
                plan.run(scm, &cfg, &mut out)?;
                rows.push(observed.iter().map(|&i| scm.value(i, out[i]).clone()).collect());
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        columns: observed.iter().map(|&i| scm.name(i).to_string()).collect(),
        rows: parts.into_iter().flatten().collect(),
    })
}
