//! Test-suite cases on disk and the end-to-end pipeline that checks them.
//!
//! A case is a directory holding `qdmr.txt` and `gold.csv`, optionally
//! `question.txt` and a `meta.txt` of `key = value` lines (`limit1`,
//! `sort_key`, `sort_desc`). The schema (`schema.json`) and data (`data/`)
//! are looked up in the case directory and then in its ancestors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::execmatch::{equivalent, MatchVerdict};
use crate::qdmr::{parse_qdmr, GroundedQdmr, QdmrError};
use crate::rdf::{to_rdf, RdfError};
use crate::result::{ResultError, ResultTable};
use crate::schema::{ensure_key, Schema, SchemaError, TableData};
use crate::sparql::{evaluate, SparqlError, SparqlQuery};
use crate::transpile::{transpile, TranspileError};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}: no schema.json in this directory or its ancestors")]
    NoSchema(String),
    #[error("{0}: no data/ directory in this directory or its ancestors")]
    NoData(String),
    #[error("{path}: {message}")]
    Meta { path: String, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Qdmr(#[from] QdmrError),
    #[error(transparent)]
    Result(#[from] ResultError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Failure anywhere between a QDMR and its result table.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Transpile(#[from] TranspileError),
    #[error(transparent)]
    Rdf(#[from] RdfError),
    #[error(transparent)]
    Sparql(#[from] SparqlError),
}

/// Transpiles, converts the database and evaluates the query.
pub fn execute(
    q: &GroundedQdmr,
    schema: &Schema,
    data: &TableData,
) -> Result<(SparqlQuery, ResultTable), PipelineError> {
    let query = transpile(q, schema)?;
    let graph = to_rdf(schema, data)?.graph;
    let table = evaluate(&query, &graph)?;
    Ok((query, table))
}

/// Parses a `key = value` file; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub dir: PathBuf,
    pub question: Option<String>,
    pub schema: Schema,
    pub data: TableData,
    pub qdmr: GroundedQdmr,
    pub gold: ResultTable,
}

/// The nearest `name` in `dir` or its ancestors.
pub fn find_upwards(dir: &Path, name: &str) -> Option<PathBuf> {
    dir.ancestors().map(|d| d.join(name)).find(|p| p.exists())
}

fn read(path: &Path) -> Result<String, SuiteError> {
    std::fs::read_to_string(path).map_err(|source| SuiteError::Io { path: path.display().to_string(), source })
}

/// Reads gold results, applying `limit1` and sort options from `meta`.
pub fn load_gold(path: &Path, meta: &BTreeMap<String, String>) -> Result<ResultTable, SuiteError> {
    let origin = path.display().to_string();
    let bad = |message: String| SuiteError::Meta { path: origin.clone(), message };
    let mut gold = ResultTable::load_csv(path)?;
    if let Some(v) = meta.get("limit1") {
        gold.limit1 = parse_bool(v).ok_or_else(|| bad(format!("limit1 = {v} is not a boolean")))?;
    }
    if let Some(key) = meta.get("sort_key") {
        let desc = match meta.get("sort_desc") {
            Some(v) => parse_bool(v).ok_or_else(|| bad(format!("sort_desc = {v} is not a boolean")))?,
            None => false,
        };
        gold = gold.with_sort_column(key, desc, &origin)?;
    }
    Ok(gold)
}

impl Case {
    pub fn load(dir: &Path) -> Result<Case, SuiteError> {
        let shown = dir.display().to_string();
        let schema_path = find_upwards(dir, "schema.json").ok_or_else(|| SuiteError::NoSchema(shown.clone()))?;
        let data_dir = find_upwards(dir, "data").ok_or_else(|| SuiteError::NoData(shown.clone()))?;
        let schema = Schema::load(&schema_path)?;
        let data = TableData::load_csv_dir(&schema, &data_dir)?;
        let (schema, data) = ensure_key(&schema, &data);
        let qdmr = parse_qdmr(&read(&dir.join("qdmr.txt"))?, &schema)?;
        let meta_path = dir.join("meta.txt");
        let meta = if meta_path.exists() {
            parse_key_values(&read(&meta_path)?)
                .map_err(|message| SuiteError::Meta { path: meta_path.display().to_string(), message })?
        } else {
            BTreeMap::new()
        };
        let gold = load_gold(&dir.join("gold.csv"), &meta)?;
        let question_path = dir.join("question.txt");
        let question = if question_path.exists() { Some(read(&question_path)?.trim().to_string()) } else { None };
        let name = dir.file_name().map_or(shown, |n| n.to_string_lossy().into_owned());
        Ok(Case { name, dir: dir.to_path_buf(), question, schema, data, qdmr, gold })
    }

    pub fn check(&self) -> Result<CaseOutcome, PipelineError> {
        let (query, predicted) = execute(&self.qdmr, &self.schema, &self.data)?;
        let verdict = equivalent(&predicted, &self.gold);
        Ok(CaseOutcome { query, predicted, verdict })
    }
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub query: SparqlQuery,
    pub predicted: ResultTable,
    pub verdict: MatchVerdict,
}

/// All case directories under `root` (those holding a `qdmr.txt` and a
/// `gold.csv`), sorted by path.
pub fn discover(root: &Path) -> Result<Vec<PathBuf>, SuiteError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("qdmr.txt").is_file() && dir.join("gold.csv").is_file() {
            out.push(dir.clone());
        }
        let entries =
            std::fs::read_dir(&dir).map_err(|source| SuiteError::Io { path: dir.display().to_string(), source })?;
        for e in entries {
            let e = e.map_err(|source| SuiteError::Io { path: dir.display().to_string(), source })?;
            if e.path().is_dir() {
                stack.push(e.path());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub case: String,
    #[serde(rename = "match")]
    pub matched: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub matched: usize,
    pub total: usize,
    pub execution_accuracy: f64,
}

/// Checks every case under `root`. A case that fails to load or run counts
/// as a mismatch.
pub fn run_suite(root: &Path) -> Result<SuiteReport, SuiteError> {
    let mut cases = Vec::new();
    for dir in discover(root)? {
        let name = dir.strip_prefix(root).unwrap_or(&dir).display().to_string();
        let outcome = Case::load(&dir).map_err(|e| e.to_string()).and_then(|c| c.check().map_err(|e| e.to_string()));
        cases.push(match outcome {
            Ok(o) => CaseReport { case: name, matched: o.verdict.matched, error: None },
            Err(e) => CaseReport { case: name, matched: false, error: Some(e) },
        });
    }
    let matched = cases.iter().filter(|c| c.matched).count();
    let total = cases.len();
    let execution_accuracy = if total == 0 { 0.0 } else { matched as f64 / total as f64 };
    Ok(SuiteReport { cases, matched, total, execution_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_skip_comments_and_trim() {
        let kv = parse_key_values("# c\n limit1 = true\n\nsort_key=Year\n").unwrap();
        assert_eq!(kv["limit1"], "true");
        assert_eq!(kv["sort_key"], "Year");
        assert!(parse_key_values("nonsense").is_err());
    }
}
