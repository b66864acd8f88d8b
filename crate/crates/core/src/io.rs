//! File formats: JSON parameter files and reports, CSV count and sample matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{BeamConfig, ModelParams};
use crate::scalar::Scalar;
use crate::simulate::CountMatrix;
use crate::solver::{MomentSolution, SolverDiagnostics};

/// Parameter file `{s, q, p, lambda_t, n, k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub s: usize,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda_t: f64,
    pub n: usize,
    pub k: usize,
}

impl ParamFile {
    pub fn new(params: &ModelParams<f64>, beam: &BeamConfig) -> Self {
        Self { s: params.modes(), q: params.q().to_vec(), p: params.p().to_vec(), lambda_t: beam.lambda_t, n: beam.n, k: beam.k }
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        if self.q.len() != self.s || self.p.len() != self.s {
            return Err(Error::Dimension(format!(
                "s = {} but q has {} and p has {} entries",
                self.s,
                self.q.len(),
                self.p.len()
            )));
        }
        ModelParams::new(self.q.clone(), self.p.clone())
    }

    pub fn beam(&self) -> Result<BeamConfig> {
        BeamConfig::new(self.lambda_t, self.n, self.k)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Solution report `{q, p, feasible, diagnostics}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub feasible: bool,
    pub diagnostics: SolverDiagnostics,
}

impl<T: Scalar> From<&MomentSolution<T>> for SolutionRecord {
    fn from(sol: &MomentSolution<T>) -> Self {
        Self {
            q: sol.y.iter().map(|x| x.to_f64_lossy()).collect(),
            p: sol.z.iter().map(|x| x.to_f64_lossy()).collect(),
            feasible: sol.feasible,
            diagnostics: sol.diagnostics,
        }
    }
}

/// Writes counts as CSV with header `rep,layer_1,...,layer_k`; `rep` is 1-based.
pub fn write_counts<W: Write>(writer: W, data: &CountMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["rep".to_string()];
    header.extend((1..=data.layers()).map(|i| format!("layer_{i}")));
    w.write_record(&header)?;
    for (j, row) in data.rows().enumerate() {
        let mut rec = vec![(j + 1).to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a count CSV; `lambda_t` is not stored in the file and must be supplied.
pub fn read_counts<R: Read>(reader: R, lambda_t: f64) -> Result<CountMatrix> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.get(0) != Some("rep") || header.len() < 2 {
        return Err(Error::Parse("count header must be rep,layer_1,...,layer_k".into()));
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("layer_{i}") {
            return Err(Error::Parse(format!("unexpected column {name:?} at position {}", i + 1)));
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("count file has no rows".into()));
    }
    CountMatrix::from_rows(rows, lambda_t)
}

pub fn write_counts_file(path: &Path, data: &CountMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_counts(BufWriter::new(file), data)
}

pub fn read_counts_file(path: &Path, lambda_t: f64) -> Result<CountMatrix> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_counts(BufReader::new(file), lambda_t)
}

/// Writes a sample matrix as CSV with header `rep,<prefix>_1,...`.
pub fn write_samples<W: Write>(writer: W, samples: &Matrix<f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["rep".to_string()];
    header.extend((1..=samples.cols()).map(|c| format!("{prefix}_{c}")));
    w.write_record(&header)?;
    for j in 0..samples.rows() {
        let mut rec = vec![(j + 1).to_string()];
        rec.extend(samples.row(j).iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples<R: Read>(reader: R) -> Result<Matrix<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let cols = r.headers()?.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for f in rec.iter().skip(1) {
            data.push(f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}")))?);
        }
        rows += 1;
    }
    if data.len() != rows * cols {
        return Err(Error::Parse("ragged sample matrix".into()));
    }
    Ok(Matrix::from_row_major(rows, cols, data))
}

/// Writes serializable rows as a CSV table with a header.
pub fn write_table<W: Write, R: Serialize>(writer: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_table(BufWriter::new(file), rows)
}

/// Parses a vector given inline (`0.3,0.5`) or as a JSON array.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let v: Vec<f64> = if text.starts_with('[') {
        serde_json::from_str(text)?
    } else {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<_>>()?
    };
    if v.is_empty() {
        return Err(Error::Parse("empty vector".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("non-finite entry {x}")));
    }
    Ok(v)
}
