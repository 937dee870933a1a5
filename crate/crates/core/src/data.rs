//! Tabular datasets bound by templates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Number,
    String,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Number => "number",
            ColumnKind::String => "string",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column { name: name.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Text(_) => None,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Value::Number(_) => ColumnKind::Number,
            Value::Text(_) => ColumnKind::String,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => f.write_str(&fmt_num(*v)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Value>>) -> Self {
        Dataset { columns, rows }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Checks rectangularity, kinds and finiteness; returns the first problem.
    pub fn check(&self) -> Result<(), String> {
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(format!("row {r} has {} cells, expected {}", row.len(), self.columns.len()));
            }
            for (c, (cell, col)) in row.iter().zip(&self.columns).enumerate() {
                match (cell, col.kind) {
                    (Value::Number(v), ColumnKind::Number) if v.is_finite() => {}
                    (Value::Number(_), ColumnKind::Number) => {
                        return Err(format!("row {r} column {c}: non-finite number"))
                    }
                    (Value::Text(_), ColumnKind::String) => {}
                    _ => {
                        return Err(format!(
                            "row {r} column {c}: {} cell in {} column `{}`",
                            cell.kind(),
                            col.kind,
                            col.name
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CsvError {
    #[error("CSV has no header row")]
    MissingHeader,
    /// `row` is the 1-based line number, counting the header as line 1.
    #[error("ragged row at line {0}")]
    RaggedRows(usize),
    #[error("CSV parse error at line {row}, column {col}: {message}")]
    Parse { row: usize, col: usize, message: String },
}

fn finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a CSV with a header row. A column is numeric iff every non-empty
/// cell is a finite real; numeric columns may not contain empty cells.
pub fn parse_csv(bytes: &[u8]) -> Result<Dataset, CsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CsvError::Parse { row: i + 1, col: 0, message: e.to_string() })?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<String>>());
    }
    let header = records.first().filter(|h| h.iter().any(|c| !c.trim().is_empty())).ok_or(CsvError::MissingHeader)?;
    let width = header.len();
    if let Some(i) = records.iter().position(|r| r.len() != width) {
        return Err(CsvError::RaggedRows(i + 1));
    }
    let body = &records[1..];
    let mut columns = Vec::with_capacity(width);
    for (c, name) in header.iter().enumerate() {
        let cells: Vec<&str> = body.iter().map(|r| r[c].trim()).collect();
        let numeric = cells.iter().any(|v| !v.is_empty()) && cells.iter().all(|v| v.is_empty() || finite(v).is_some());
        if numeric {
            if let Some(r) = cells.iter().position(|v| v.is_empty()) {
                return Err(CsvError::Parse { row: r + 2, col: c + 1, message: format!("empty cell in numeric column `{name}`") });
            }
        }
        columns.push(Column::new(name.trim(), if numeric { ColumnKind::Number } else { ColumnKind::String }));
    }
    let rows = body
        .iter()
        .map(|r| {
            r.iter()
                .zip(&columns)
                .map(|(v, col)| match col.kind {
                    ColumnKind::Number => Value::Number(finite(v).expect("checked above")),
                    ColumnKind::String => Value::Text(v.clone()),
                })
                .collect()
        })
        .collect();
    Ok(Dataset::new(columns, rows))
}

/// Writes a dataset as CSV with a header row.
pub fn to_csv(data: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(data.columns.iter().map(|c| c.name.as_str())).expect("writing to memory");
    for row in &data.rows {
        // exact, unlike Display, so that data survives a round trip
        w.write_record(row.iter().map(|v| match v {
            Value::Number(x) if *x == 0.0 => "0".to_string(),
            Value::Number(x) => format!("{x}"),
            Value::Text(t) => t.clone(),
        }))
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV of UTF-8 strings")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("no column is mapped to `{0}`")]
    Incomplete(String),
    #[error("the data has no column `{0}`")]
    UnknownColumn(String),
    #[error("column `{user}` is {found}, but `{schema}` needs {expected}")]
    KindMismatch { user: String, schema: String, found: ColumnKind, expected: ColumnKind },
}

/// Renames and reorders `data` to `schema` through `mapping` (user column to
/// schema column). Schema columns left unmapped fall back to a user column of
/// the same name. Numbers may fill text columns; text never fills numbers.
pub fn apply_mapping(data: &Dataset, mapping: &BTreeMap<String, String>, schema: &[Column]) -> Result<Dataset, MappingError> {
    let mut picks = Vec::with_capacity(schema.len());
    for want in schema {
        let user = mapping
            .iter()
            .find(|(_, s)| **s == want.name)
            .map(|(u, _)| u.clone())
            .or_else(|| (!mapping.contains_key(&want.name) && data.column(&want.name).is_some()).then(|| want.name.clone()))
            .ok_or_else(|| MappingError::Incomplete(want.name.clone()))?;
        let idx = data.column_index(&user).ok_or_else(|| MappingError::UnknownColumn(user.clone()))?;
        let found = data.columns[idx].kind;
        if found == ColumnKind::String && want.kind == ColumnKind::Number {
            return Err(MappingError::KindMismatch { user, schema: want.name.clone(), found, expected: want.kind });
        }
        picks.push((idx, want.kind));
    }
    let rows = data
        .rows
        .iter()
        .map(|r| {
            picks
                .iter()
                .map(|(i, kind)| match (kind, &r[*i]) {
                    (ColumnKind::String, Value::Number(v)) => Value::Text(fmt_num(*v)),
                    (_, v) => v.clone(),
                })
                .collect()
        })
        .collect();
    Ok(Dataset::new(schema.to_vec(), rows))
}
