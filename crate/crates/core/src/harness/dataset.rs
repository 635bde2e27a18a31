//! Line-delimited JSON records:
//! `{"id": "...", "source": "..." | null, "bytecode_hex": "...", "labels": [0, 1, ...]}`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evm::{parse_hex, EvmError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSample {
    pub id: String,
    pub source: Option<String>,
    pub bytecode_hex: String,
    pub labels: Vec<bool>,
}

impl ContractSample {
    pub fn bytecode(&self) -> Result<Vec<u8>, EvmError> {
        parse_hex(&self.bytecode_hex)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    source: Option<String>,
    bytecode_hex: String,
    labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: expected {expected} labels, found {found}")]
    BadLabelLength {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Io(String),
}

fn parse_line(text: &str, line: usize, labels: usize) -> Result<ContractSample, DatasetError> {
    let bad = |message: String| DatasetError::ParseError { line, message };
    let rec: Record = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if rec.labels.len() != labels {
        return Err(DatasetError::BadLabelLength {
            line,
            expected: labels,
            found: rec.labels.len(),
        });
    }
    if let Some(v) = rec.labels.iter().find(|&&v| v > 1) {
        return Err(bad(format!("label value {v} is not 0 or 1")));
    }
    parse_hex(&rec.bytecode_hex).map_err(|e| bad(e.to_string()))?;
    Ok(ContractSample {
        id: rec.id,
        source: rec.source,
        bytecode_hex: rec.bytecode_hex,
        labels: rec.labels.iter().map(|&v| v == 1).collect(),
    })
}

/// Reads records in file order. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_dataset(
    reader: impl BufRead,
    labels: usize,
) -> Result<Vec<ContractSample>, DatasetError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, n + 1, labels)?);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, labels: usize) -> Result<Vec<ContractSample>, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file), labels)
}

pub fn write_dataset(mut w: impl Write, samples: &[ContractSample]) -> std::io::Result<()> {
    for s in samples {
        let rec = Record {
            id: s.id.clone(),
            source: s.source.clone(),
            bytecode_hex: s.bytecode_hex.clone(),
            labels: s.labels.iter().map(|&b| b as u8).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, samples: &[ContractSample]) -> Result<(), DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io(format!("{}: {e}", path.display()));
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, samples).map_err(io)?;
    w.flush().map_err(io)
}
