//! Result tables shared by the SPARQL evaluator, the reference interpreter
//! and the matcher.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::qdmr::Aggregator;
use crate::schema::ColumnRef;
use crate::value::{Cell, Datatype, Value};

/// Where an output column's values come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Provenance {
    Column(ColumnRef),
    Aggregate { op: Aggregator, of: Option<ColumnRef> },
    Unknown,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Column(c) => write!(f, "{c}"),
            Provenance::Aggregate { op, of: Some(c) } => write!(f, "{}({c})", op.name()),
            Provenance::Aggregate { op, of: None } => write!(f, "{}(?)", op.name()),
            Provenance::Unknown => f.write_str("?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultColumn {
    pub name: String,
    pub provenance: Provenance,
    pub datatype: Option<Datatype>,
}

impl ResultColumn {
    pub fn new(name: impl Into<String>, provenance: Provenance) -> Self {
        ResultColumn { name: name.into(), provenance, datatype: None }
    }
}

/// Sorting metadata: the key value each row was ordered by.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SortMeta {
    pub keys: Vec<Cell>,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Cell>>,
    pub sort_meta: Option<SortMeta>,
    /// The table is an argmin/argmax answer that kept a single row.
    pub limit1: bool,
}

#[derive(Debug, Error)]
pub enum ResultError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: row {row} has {got} cells, expected {expected}")]
    Arity { path: String, row: usize, got: usize, expected: usize },
    #[error("{path}: no column named `{name}`")]
    MissingColumn { path: String, name: String },
}

impl ResultTable {
    pub fn new(columns: Vec<ResultColumn>, rows: Vec<Vec<Cell>>) -> ResultTable {
        let mut t = ResultTable { columns, rows, sort_meta: None, limit1: false };
        t.infer_datatypes();
        t
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sets each column's datatype to the common datatype of its non-null
    /// cells (None when empty or mixed).
    pub fn infer_datatypes(&mut self) {
        for (i, col) in self.columns.iter_mut().enumerate() {
            let mut types = self.rows.iter().filter_map(|r| r[i].as_ref().map(Value::datatype));
            col.datatype = match types.next() {
                Some(first) if types.all(|t| t == first) => Some(first),
                _ => None,
            };
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_ref().map(Value::lexical).unwrap_or_default()))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Reads a CSV with a header row. Cells are kept as text (empty cells are
    /// null); typing is left to standardization.
    pub fn from_csv(text: &str, origin: &str) -> Result<ResultTable, ResultError> {
        let csv_err = |source| ResultError::Csv { path: origin.to_string(), source };
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns: Vec<ResultColumn> =
            r.headers().map_err(csv_err)?.iter().map(|h| ResultColumn::new(h.trim(), Provenance::Unknown)).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != columns.len() {
                return Err(ResultError::Arity {
                    path: origin.to_string(),
                    row: i + 1,
                    got: rec.len(),
                    expected: columns.len(),
                });
            }
            rows.push(rec.iter().map(|c| (!c.is_empty()).then(|| Value::text(c))).collect());
        }
        Ok(ResultTable::new(columns, rows))
    }

    pub fn load_csv(path: &Path) -> Result<ResultTable, ResultError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ResultError::Io { path: path.display().to_string(), source })?;
        ResultTable::from_csv(&text, &path.display().to_string())
    }

    /// Attaches sorting metadata taken from one of the table's columns.
    pub fn with_sort_column(mut self, name: &str, descending: bool, origin: &str) -> Result<ResultTable, ResultError> {
        let i = self
            .columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| ResultError::MissingColumn { path: origin.to_string(), name: name.to_string() })?;
        let keys = self.rows.iter().map(|r| r[i].clone()).collect();
        self.sort_meta = Some(SortMeta { keys, descending });
        Ok(self)
    }
}

impl fmt::Display for ResultTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_nulls() {
        let t = ResultTable::new(
            vec![ResultColumn::new("a", Provenance::Unknown), ResultColumn::new("b", Provenance::Unknown)],
            vec![vec![Some(Value::number(1.0)), None], vec![Some(Value::text("x, y")), Some(Value::text("z"))]],
        );
        let text = t.to_csv();
        assert_eq!(text, "a,b\n1,\n\"x, y\",z\n");
        let back = ResultTable::from_csv(&text, "mem").unwrap();
        assert_eq!(back.rows[0], vec![Some(Value::text("1")), None]);
        assert_eq!(back.rows[1][0], Some(Value::text("x, y")));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            ResultTable::from_csv("a,b\n1\n", "mem"),
            Err(ResultError::Csv { .. } | ResultError::Arity { .. })
        ));
    }

    #[test]
    fn datatypes_are_inferred_per_column() {
        let t = ResultTable::new(
            vec![ResultColumn::new("a", Provenance::Unknown), ResultColumn::new("b", Provenance::Unknown)],
            vec![vec![Some(Value::number(1.0)), Some(Value::text("x"))], vec![None, Some(Value::number(2.0))]],
        );
        assert_eq!(t.columns[0].datatype, Some(Datatype::Number));
        assert_eq!(t.columns[1].datatype, None);
    }
}
