//! Relational schema and row data, with JSON/CSV ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{Cell, Datatype, Value};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("table `{table}`: {message}")]
    Data { table: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Folds an identifier for schema lookups: lowercase, with whitespace and
/// underscores removed.
pub fn fold_ident(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '_').flat_map(char::to_lowercase).collect()
}

/// A `table.column` reference using the schema's canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { table: table.into(), column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub datatype: Datatype,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

/// Primary key as written in schema JSON: absent, one column, or several.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrimaryKey {
    Single(String),
    Composite(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub primary_key: Option<PrimaryKey>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let f = fold_ident(name);
        self.columns.iter().position(|c| fold_ident(&c.name) == f)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    /// The single key column, if the table has exactly one.
    pub fn key(&self) -> Option<&str> {
        match &self.primary_key {
            Some(PrimaryKey::Single(k)) => Some(k),
            Some(PrimaryKey::Composite(ks)) if ks.len() == 1 => Some(&ks[0]),
            _ => None,
        }
    }

    pub fn key_index(&self) -> Option<usize> {
        self.key().and_then(|k| self.column_index(k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<Table>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema, SchemaError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Schema, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
        Schema::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        let f = fold_ident(name);
        self.tables.iter().position(|t| fold_ident(&t.name) == f)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.table_index(name).map(|i| &self.tables[i])
    }

    /// Resolves a possibly differently-cased `table.column` pair.
    pub fn resolve_column(&self, table: &str, column: &str) -> Option<ColumnRef> {
        let t = self.table(table)?;
        let c = t.column(column)?;
        Some(ColumnRef::new(&t.name, &c.name))
    }

    pub fn datatype(&self, col: &ColumnRef) -> Option<Datatype> {
        self.table(&col.table)?.column(&col.column).map(|c| c.datatype)
    }

    pub fn key_of(&self, table: &str) -> Option<ColumnRef> {
        let t = self.table(table)?;
        let k = t.key()?;
        let c = t.column(k)?;
        Some(ColumnRef::new(&t.name, &c.name))
    }

    pub fn is_key(&self, col: &ColumnRef) -> bool {
        self.key_of(&col.table).is_some_and(|k| fold_ident(&k.column) == fold_ident(&col.column))
    }

    /// Checks the invariants every downstream stage relies on: unique names,
    /// identifier-safe names, one single-column key per table, and foreign
    /// keys that target keys.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for t in &self.tables {
            check_ident(&t.name)?;
            if !seen.insert(fold_ident(&t.name)) {
                return Err(SchemaError::Invalid(format!("duplicate table `{}`", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                check_ident(&c.name)?;
                if !cols.insert(fold_ident(&c.name)) {
                    return Err(SchemaError::Invalid(format!("duplicate column `{}` in `{}`", c.name, t.name)));
                }
            }
            let key = t
                .key()
                .ok_or_else(|| SchemaError::Invalid(format!("table `{}` lacks a single-column primary key", t.name)))?;
            if t.column(key).is_none() {
                return Err(SchemaError::Invalid(format!("primary key `{key}` is not a column of `{}`", t.name)));
            }
            for fk in &t.foreign_keys {
                if t.column(&fk.column).is_none() {
                    return Err(SchemaError::Invalid(format!(
                        "foreign key column `{}.{}` does not exist",
                        t.name, fk.column
                    )));
                }
                let target = self.key_of(&fk.ref_table).ok_or_else(|| {
                    SchemaError::Invalid(format!("foreign key target table `{}` unknown or keyless", fk.ref_table))
                })?;
                if fold_ident(&target.column) != fold_ident(&fk.ref_column) {
                    return Err(SchemaError::Invalid(format!(
                        "foreign key {}.{} -> {}.{} does not target a primary key",
                        t.name, fk.column, fk.ref_table, fk.ref_column
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_ident(name: &str) -> Result<(), SchemaError> {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit());
    if ok {
        Ok(())
    } else {
        Err(SchemaError::Invalid(format!("`{name}` is not a plain identifier")))
    }
}

/// One row: cells aligned with the owning table's column order.
pub type Row = Vec<Cell>;

/// Row data per table, keyed by canonical table name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableData {
    pub tables: BTreeMap<String, Vec<Row>>,
}

impl TableData {
    pub fn rows(&self, table: &str) -> &[Row] {
        self.tables.get(table).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Empty data for every table of `schema`.
    pub fn empty(schema: &Schema) -> TableData {
        TableData { tables: schema.tables.iter().map(|t| (t.name.clone(), Vec::new())).collect() }
    }

    /// Checks row arity, cell datatypes, and key uniqueness.
    pub fn check(&self, schema: &Schema) -> Result<(), SchemaError> {
        for (name, rows) in &self.tables {
            let t = schema
                .table(name)
                .ok_or_else(|| SchemaError::Data { table: name.clone(), message: "not in schema".into() })?;
            let key = t.key_index();
            let mut keys = HashSet::new();
            for (i, row) in rows.iter().enumerate() {
                if row.len() != t.columns.len() {
                    return Err(SchemaError::Data {
                        table: name.clone(),
                        message: format!("row {} has {} cells, expected {}", i + 1, row.len(), t.columns.len()),
                    });
                }
                for (cell, col) in row.iter().zip(&t.columns) {
                    if let Some(v) = cell {
                        if v.datatype() != col.datatype {
                            return Err(SchemaError::Data {
                                table: name.clone(),
                                message: format!("row {}: `{}` holds a {} value", i + 1, col.name, v.datatype()),
                            });
                        }
                    }
                }
                if let Some(k) = key {
                    match &row[k] {
                        None => {
                            return Err(SchemaError::Data {
                                table: name.clone(),
                                message: format!("row {}: null primary key", i + 1),
                            })
                        }
                        Some(v) => {
                            if !keys.insert(v.clone()) {
                                return Err(SchemaError::Data {
                                    table: name.clone(),
                                    message: format!("duplicate primary key {v}"),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Loads `<table>.csv` for every table from `dir`. Header names are
    /// matched case-insensitively; empty cells are nulls. Tables without a
    /// file are empty.
    pub fn load_csv_dir(schema: &Schema, dir: &Path) -> Result<TableData, SchemaError> {
        let entries =
            std::fs::read_dir(dir).map_err(|source| SchemaError::Io { path: dir.display().to_string(), source })?;
        let mut files = BTreeMap::new();
        for e in entries {
            let e = e.map_err(|source| SchemaError::Io { path: dir.display().to_string(), source })?;
            let path = e.path();
            if path.extension().and_then(|x| x.to_str()).is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    files.insert(fold_ident(stem), path.clone());
                }
            }
        }
        let mut data = TableData::empty(schema);
        for t in &schema.tables {
            let Some(path) = files.get(&fold_ident(&t.name)) else { continue };
            let text = std::fs::read_to_string(path)
                .map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
            let rows = parse_table_csv(t, &text).map_err(|e| match e {
                SchemaError::Csv { source, .. } => SchemaError::Csv { path: path.display().to_string(), source },
                other => other,
            })?;
            data.tables.insert(t.name.clone(), rows);
        }
        Ok(data)
    }

    /// Writes one CSV per table into `dir`.
    pub fn write_csv_dir(&self, schema: &Schema, dir: &Path) -> Result<(), SchemaError> {
        std::fs::create_dir_all(dir).map_err(|source| SchemaError::Io { path: dir.display().to_string(), source })?;
        for t in &schema.tables {
            let path = dir.join(format!("{}.csv", t.name));
            let csv_err = |source| SchemaError::Csv { path: path.display().to_string(), source };
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(t.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
            for row in self.rows(&t.name) {
                w.write_record(row.iter().map(|c| c.as_ref().map(Value::lexical).unwrap_or_default()))
                    .map_err(csv_err)?;
            }
            w.flush().map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
        }
        Ok(())
    }
}

/// Parses one table's CSV text against its column types.
pub fn parse_table_csv(table: &Table, text: &str) -> Result<Vec<Row>, SchemaError> {
    let csv_err = |source| SchemaError::Csv { path: format!("{}.csv", table.name), source };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut mapping = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let idx = table.column_index(h.trim()).ok_or_else(|| SchemaError::Data {
            table: table.name.clone(),
            message: format!("CSV column `{h}` is not in the schema"),
        })?;
        mapping.push(idx);
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut row: Row = vec![None; table.columns.len()];
        for (field, &idx) in rec.iter().zip(&mapping) {
            if field.is_empty() {
                continue;
            }
            let col = &table.columns[idx];
            let v = Value::parse_as(col.datatype, field).ok_or_else(|| SchemaError::Data {
                table: table.name.clone(),
                message: format!("row {}: `{field}` is not a valid {} for `{}`", line + 1, col.datatype, col.name),
            })?;
            row[idx] = Some(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Gives every table a single-column primary key. Tables without a key, or
/// with a composite key, gain a synthetic `ID` column (numbered from 1 in
/// row order) placed first; composite-key columns stay as plain columns.
/// Foreign keys that targeted a composite key are dropped since they no
/// longer reference a key.
pub fn ensure_key(schema: &Schema, data: &TableData) -> (Schema, TableData) {
    let mut schema = schema.clone();
    let mut data = data.clone();
    let mut rekeyed = Vec::new();
    for t in &mut schema.tables {
        let single_ok = t.key().is_some_and(|k| t.column(k).is_some());
        if single_ok {
            continue;
        }
        let mut name = "ID".to_string();
        let mut n = 1;
        while t.column(&name).is_some() {
            name = format!("ID_{n}");
            n += 1;
        }
        t.columns.insert(0, Column { name: name.clone(), datatype: Datatype::Number });
        t.primary_key = Some(PrimaryKey::Single(name));
        rekeyed.push(t.name.clone());
        if let Some(rows) = data.tables.get_mut(&t.name) {
            for (i, row) in rows.iter_mut().enumerate() {
                row.insert(0, Some(Value::number((i + 1) as f64)));
            }
        }
    }
    if !rekeyed.is_empty() {
        let snapshot = schema.clone();
        for t in &mut schema.tables {
            t.foreign_keys.retain(|fk| {
                let target_rekeyed = rekeyed.iter().any(|r| fold_ident(r) == fold_ident(&fk.ref_table));
                !target_rekeyed
                    || snapshot
                        .key_of(&fk.ref_table)
                        .is_some_and(|k| fold_ident(&k.column) == fold_ident(&fk.ref_column))
            });
        }
    }
    (schema, data)
}
