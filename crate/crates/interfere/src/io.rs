//! CSV ingestion and matrix export.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use interfere_core::contrast::ArmCounts;
use interfere_core::design::{NeighborhoodSet, Population, Unit};
use interfere_core::linalg::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {reason} (got {value:?})")]
    Invalid {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },
    #[error("row {row}: duplicate id {id:?} (first seen in row {first})")]
    DuplicateId { row: usize, id: String, first: usize },
    #[error("row {row}: unknown unit id {id:?}")]
    UnknownId { row: usize, id: String },
    #[error("{0}")]
    Population(#[from] interfere_core::Error),
}

fn open(path: &Path) -> Result<File, LoadError> {
    File::open(path).map_err(|source| LoadError::Open {
        path: path.to_path_buf(),
        source,
    })
}

struct Columns {
    id: usize,
    /// `(index, name)` of each coordinate column.
    coords: Vec<(usize, String)>,
    treatment: usize,
    outcome: usize,
    enrollment: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self, LoadError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| LoadError::MissingColumn(name.to_string()));
        let numbered: Vec<(usize, String)> = (1..)
            .map_while(|k| {
                let name = format!("x{k}");
                find(&name).map(|i| (i, name))
            })
            .collect();
        let coords = if !numbered.is_empty() {
            numbered
        } else {
            let mut c = vec![(need("x")?, "x".to_string())];
            if let Some(y) = find("y") {
                c.push((y, "y".to_string()));
            }
            c
        };
        Ok(Self {
            id: need("id")?,
            coords,
            treatment: need("treatment")?,
            outcome: need("outcome")?,
            enrollment: find("enrollment"),
        })
    }
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64, LoadError> {
    let invalid = |reason: &str| LoadError::Invalid {
        row,
        column: column.to_string(),
        value: raw.to_string(),
        reason: reason.to_string(),
    };
    let v: f64 = raw.trim().parse().map_err(|_| invalid("not a number"))?;
    if !v.is_finite() {
        return Err(invalid("must be finite"));
    }
    Ok(v)
}

/// Read a unit table. Row order becomes unit index order; rows are numbered
/// from 1 in error messages, not counting the header.
pub fn load_units_from_reader<R: Read>(reader: R, rho: f64) -> Result<Population, LoadError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut units = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(cols.id).to_string();
        if let Some(&first) = seen.get(&id) {
            return Err(LoadError::DuplicateId { row, id, first });
        }
        seen.insert(id.clone(), row);
        let coords = cols
            .coords
            .iter()
            .map(|(c, name)| parse_number(row, name, field(*c)))
            .collect::<Result<Vec<_>, _>>()?;
        let treatment = match field(cols.treatment) {
            "1" => true,
            "0" => false,
            other => {
                return Err(LoadError::Invalid {
                    row,
                    column: "treatment".into(),
                    value: other.into(),
                    reason: "treatment must be 0 or 1".into(),
                })
            }
        };
        let outcome = parse_number(row, "outcome", field(cols.outcome))?;
        if outcome < 0.0 {
            return Err(LoadError::Invalid {
                row,
                column: "outcome".into(),
                value: field(cols.outcome).into(),
                reason: "outcome must be nonnegative".into(),
            });
        }
        let enrollment = match cols.enrollment.map(field) {
            None | Some("") => None,
            Some(raw) => {
                let n = parse_number(row, "enrollment", raw)?;
                if n < outcome {
                    return Err(LoadError::Invalid {
                        row,
                        column: "enrollment".into(),
                        value: raw.into(),
                        reason: format!(
                            "enrollment is below the outcome {outcome}; the full-control bound needs outcome <= enrollment"
                        ),
                    });
                }
                Some(n)
            }
        };
        units.push(Unit::new(id, coords, treatment, outcome, enrollment));
    }
    Ok(Population::new(units, rho)?)
}

pub fn load_units(path: &Path, rho: f64) -> Result<Population, LoadError> {
    load_units_from_reader(open(path)?, rho)
}

/// Explicit neighborhoods: CSV with columns `id,neighbors`, where
/// `neighbors` lists unit ids separated by spaces. A unit is added to its
/// own neighborhood if missing.
pub fn load_adjacency(path: &Path, pop: &Population) -> Result<NeighborhoodSet, LoadError> {
    load_adjacency_from_reader(open(path)?, pop)
}

pub fn load_adjacency_from_reader<R: Read>(reader: R, pop: &Population) -> Result<NeighborhoodSet, LoadError> {
    let index: HashMap<&str, usize> = pop.units().iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LoadError::MissingColumn(name.to_string()))
    };
    let (id_col, nb_col) = (col("id")?, col("neighbors")?);
    let mut sets: Vec<Option<Vec<usize>>> = vec![None; pop.len()];
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| LoadError::UnknownId {
                row,
                id: id.to_string(),
            })
        };
        let owner = lookup(record.get(id_col).unwrap_or(""))?;
        let mut set = vec![owner];
        for id in record.get(nb_col).unwrap_or("").split_whitespace() {
            let j = lookup(id)?;
            if j != owner {
                set.push(j);
            }
        }
        sets[owner] = Some(set);
    }
    let sets = sets
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| LoadError::Invalid {
                row: 0,
                column: "id".into(),
                value: pop.units()[i].id.clone(),
                reason: "unit has no adjacency row".into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NeighborhoodSet::new(sets)?)
}

/// Two-arm aggregate table with columns `arm,total,successes`; `arm` is
/// `treated`/`control` (or `1`/`0`).
pub fn load_counts_from_reader<R: Read>(reader: R) -> Result<(ArmCounts, ArmCounts), LoadError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LoadError::MissingColumn(name.to_string()))
    };
    let (arm_col, total_col, succ_col) = (col("arm")?, col("total")?, col("successes")?);
    let (mut treated, mut control) = (None, None);
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let int = |c: usize, name: &str| -> Result<u64, LoadError> {
            let raw = record.get(c).unwrap_or("");
            raw.parse().map_err(|_| LoadError::Invalid {
                row,
                column: name.into(),
                value: raw.into(),
                reason: "expected a nonnegative integer".into(),
            })
        };
        let counts = ArmCounts::new(int(total_col, "total")?, int(succ_col, "successes")?).map_err(|e| LoadError::Invalid {
            row,
            column: "successes".into(),
            value: record.get(succ_col).unwrap_or("").into(),
            reason: e.to_string(),
        })?;
        let slot = match record.get(arm_col).unwrap_or("") {
            "treated" | "1" => &mut treated,
            "control" | "0" => &mut control,
            other => {
                return Err(LoadError::Invalid {
                    row,
                    column: "arm".into(),
                    value: other.into(),
                    reason: "arm must be treated or control".into(),
                })
            }
        };
        *slot = Some(counts);
    }
    let missing = |arm: &str| LoadError::Invalid {
        row: 0,
        column: "arm".into(),
        value: String::new(),
        reason: format!("no {arm} row"),
    };
    Ok((treated.ok_or_else(|| missing("treated"))?, control.ok_or_else(|| missing("control"))?))
}

pub fn load_counts(path: &Path) -> Result<(ArmCounts, ArmCounts), LoadError> {
    load_counts_from_reader(open(path)?)
}

/// Write a square matrix as headerless CSV.
pub fn write_matrix_csv<W: Write>(out: W, m: &DenseMatrix) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.dim() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
