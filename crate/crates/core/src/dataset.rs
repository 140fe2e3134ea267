//! Records, datasets, CSV I/O, validation, splitting and class balancing.

use crate::rng;
use crate::schema::Schema;
use rand::seq::SliceRandom;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset too small: {got} records, need at least {need}")]
    TooSmall { got: usize, need: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("target `{0}` must have exactly two values")]
    NotBinary(String),
    #[error("class `{code}` of `{target}` is absent")]
    ClassAbsent { target: String, code: String },
    #[error("row {row}: {rejection}")]
    InvalidRow { row: usize, rejection: Rejection },
    #[error("header mismatch: expected {expected:?}, got {got:?}")]
    Header { expected: Vec<String>, got: Vec<String> },
    #[error("schemas differ")]
    SchemaMismatch,
    #[error("empty dataset")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One code index per schema variable, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    pub cells: Vec<u32>,
}

impl Record {
    pub fn new(cells: Vec<u32>) -> Self {
        Self { cells }
    }

    pub fn get(&self, var: usize) -> u32 {
        self.cells[var]
    }
}

/// Why a raw row was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Arity { expected: usize, got: usize },
    UnknownCodes(Vec<(String, String)>),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Arity { expected, got } => write!(f, "expected {expected} columns, got {got}"),
            Rejection::UnknownCodes(bad) => {
                let parts: Vec<String> = bad.iter().map(|(v, c)| format!("{v}=`{c}`")).collect();
                write!(f, "unknown codes: {}", parts.join(", "))
            }
        }
    }
}

/// Check one raw row of code strings against the schema.
pub fn validate_record<S: AsRef<str>>(schema: &Schema, raw: &[S]) -> Result<Record, Rejection> {
    if raw.len() != schema.len() {
        return Err(Rejection::Arity { expected: schema.len(), got: raw.len() });
    }
    let mut cells = Vec::with_capacity(raw.len());
    let mut bad = Vec::new();
    for (var, tok) in schema.variables.iter().zip(raw) {
        let tok = tok.as_ref().trim();
        match var.index_of(tok) {
            Some(i) => cells.push(i),
            None => bad.push((var.name.clone(), tok.to_string())),
        }
    }
    if bad.is_empty() {
        Ok(Record { cells })
    } else {
        Err(Rejection::UnknownCodes(bad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Private,
    Public,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
    None,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub records: Vec<Record>,
    pub role: Role,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Record>, role: Role) -> Self {
        let splits = vec![Split::None; records.len()];
        Self { schema, records, role, splits }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Records with the given split label, as a new unlabeled dataset.
    pub fn split(&self, which: Split) -> Dataset {
        let records = self
            .records
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == which)
            .map(|(r, _)| r.clone())
            .collect();
        Dataset::new(self.schema.clone(), records, self.role)
    }

    pub fn column(&self, var: usize) -> impl Iterator<Item = u32> + '_ {
        self.records.iter().map(move |r| r.cells[var])
    }

    pub fn same_schema(&self, other: &Dataset) -> bool {
        Arc::ptr_eq(&self.schema, &other.schema) || *self.schema == *other.schema
    }

    pub fn read_csv<R: Read>(schema: Arc<Schema>, reader: R, role: Role) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<String> = schema.names().into_iter().map(str::to_string).collect();
        // allow any column order as long as the names match
        let mut perm = Vec::with_capacity(expected.len());
        for name in &expected {
            match header.iter().position(|h| h == name) {
                Some(p) => perm.push(p),
                None => return Err(DatasetError::Header { expected, got: header }),
            }
        }
        if header.len() != expected.len() {
            return Err(DatasetError::Header { expected, got: header });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let ordered: Vec<&str> = perm.iter().map(|&p| row.get(p).unwrap_or("")).collect();
            let rec = validate_record(&schema, &ordered)
                .map_err(|rejection| DatasetError::InvalidRow { row: i + 1, rejection })?;
            records.push(rec);
        }
        Ok(Dataset::new(schema, records, role))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.names())?;
        for r in &self.records {
            w.write_record(r.cells.iter().enumerate().map(|(v, &c)| self.schema.variables[v].code(c)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 codes")
    }
}

/// Split counts for the 72:8:20 ratio by largest-remainder rounding.
pub fn split_counts(n: usize) -> [usize; 3] {
    const RATIO: [usize; 3] = [72, 8, 20];
    let mut counts = [0usize; 3];
    let mut rems = [(0usize, 0usize); 3];
    for (i, r) in RATIO.iter().enumerate() {
        counts[i] = n * r / 100;
        rems[i] = (n * r % 100, i);
    }
    let mut left = n - counts.iter().sum::<usize>();
    // larger remainder first, earlier split wins ties
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Label records train/valid/test in 72:8:20 proportions, shuffled by `seed`.
pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<Dataset, DatasetError> {
    let n = dataset.len();
    if n < 10 {
        return Err(DatasetError::TooSmall { got: n, need: 10 });
    }
    let [train, valid, _] = split_counts(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut splits = vec![Split::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        splits[idx] = if pos < train {
            Split::Train
        } else if pos < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(Dataset { splits, ..dataset.clone() })
}

/// Downsample the majority class of a binary `target` to the minority count.
pub fn balance_by_downsampling(dataset: &Dataset, target: &str, seed: u64) -> Result<Dataset, DatasetError> {
    let t = dataset.schema.index_of(target).ok_or_else(|| DatasetError::UnknownVariable(target.into()))?;
    let var = &dataset.schema.variables[t];
    if var.cardinality() != 2 {
        return Err(DatasetError::NotBinary(target.into()));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in dataset.records.iter().enumerate() {
        by_class[r.cells[t] as usize].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.is_empty() {
            return Err(DatasetError::ClassAbsent { target: target.into(), code: var.code(c as u32).into() });
        }
    }
    let minority = by_class[0].len().min(by_class[1].len());
    let mut rng = rng::seeded(seed);
    let mut keep = vec![false; dataset.len()];
    for idx in by_class.iter_mut() {
        if idx.len() > minority {
            idx.shuffle(&mut rng);
            idx.truncate(minority);
        }
        for &i in idx.iter() {
            keep[i] = true;
        }
    }
    let records = dataset
        .records
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(Dataset::new(dataset.schema.clone(), records, dataset.role))
}
