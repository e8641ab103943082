//! Execution-accuracy comparison of result tables.
//!
//! Tables are first standardized column by column. Two tables then match
//! when some alignment of their columns makes the row bags equal. Columns
//! are aligned by provenance first, then in the given order, and finally by
//! searching all permutations when provenance is missing. Sorted outputs
//! must agree up to reordering of rows with equal sort keys, and a
//! single-row argmax/argmin answer only needs to appear in the other table.

use serde::Serialize;
use thiserror::Error;

use crate::result::{Provenance, ResultTable, SortMeta};
use crate::value::{normalize_date, parse_number, Cell, Value};

/// Decimal digits kept for numbers.
pub const NUMBER_DIGITS: i32 = 6;
/// Widest table for which all column permutations are tried.
pub const MAX_PERMUTED_COLUMNS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("a single-row answer must have exactly one row, found {rows}")]
pub struct MisuseError {
    pub rows: usize,
}

/// How the columns of the two tables were aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRule {
    Provenance,
    GivenOrder,
    PermutationSearch,
}

/// How rows were compared once columns were aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowRule {
    Bag,
    SortedBlocks,
    Limit1Contained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchVerdict {
    #[serde(rename = "match")]
    pub matched: bool,
    /// Column alignment that succeeded; None when nothing matched.
    pub rule_applied: Option<ColumnRule>,
    pub row_rule: RowRule,
    /// For each column of the second table, the column of the first table
    /// it was aligned with.
    pub column_permutation: Option<Vec<usize>>,
}

fn standard_number(n: f64) -> Value {
    Value::number(crate::value::round_to(n, NUMBER_DIGITS))
}

/// Standardizes a column given its cells: numbers if every value parses as
/// one, else dates, else trimmed text. Empty text is a null.
fn standardize_column(cells: &[Cell]) -> Vec<Cell> {
    let texts: Vec<Option<String>> = cells
        .iter()
        .map(|c| {
            c.as_ref().and_then(|v| match v {
                Value::Number(_) => Some(v.lexical()),
                _ => {
                    let t = v.lexical().trim().to_string();
                    (!t.is_empty()).then_some(t)
                }
            })
        })
        .collect();
    let present = || texts.iter().flatten();
    if present().all(|t| parse_number(t).is_some()) {
        return texts.iter().map(|t| t.as_ref().and_then(|t| parse_number(t)).map(standard_number)).collect();
    }
    if present().all(|t| normalize_date(t).is_some()) {
        return texts.iter().map(|t| t.as_ref().and_then(|t| normalize_date(t)).map(Value::Date)).collect();
    }
    texts.into_iter().map(|t| t.map(Value::Text)).collect()
}

/// Per-column standardization of values; idempotent.
pub fn standardize(t: &ResultTable) -> ResultTable {
    let width = t.width();
    let mut columns: Vec<Vec<Cell>> = vec![Vec::with_capacity(t.len()); width];
    for row in &t.rows {
        for (j, cell) in row.iter().enumerate() {
            columns[j].push(cell.clone());
        }
    }
    let columns: Vec<Vec<Cell>> = columns.iter().map(|c| standardize_column(c)).collect();
    let rows = (0..t.len()).map(|i| columns.iter().map(|c| c[i].clone()).collect()).collect();
    let mut out = ResultTable::new(t.columns.clone(), rows);
    out.sort_meta =
        t.sort_meta.as_ref().map(|m| SortMeta { keys: standardize_column(&m.keys), descending: m.descending });
    out.limit1 = t.limit1;
    out
}

/// Candidate alignments in the order they are tried.
fn alignments(a: &ResultTable, b: &ResultTable) -> Vec<(ColumnRule, Vec<usize>)> {
    let width = a.width();
    let mut out = Vec::new();
    let known = |t: &ResultTable| t.columns.iter().all(|c| c.provenance != Provenance::Unknown);
    if known(a) && known(b) {
        let mut used = vec![false; width];
        let perm: Option<Vec<usize>> = b
            .columns
            .iter()
            .map(|bc| {
                let j = (0..width).find(|&j| !used[j] && a.columns[j].provenance == bc.provenance)?;
                used[j] = true;
                Some(j)
            })
            .collect();
        if let Some(p) = perm {
            out.push((ColumnRule::Provenance, p));
        }
    }
    out.push((ColumnRule::GivenOrder, (0..width).collect()));
    if !(known(a) && known(b)) && width <= MAX_PERMUTED_COLUMNS {
        for p in permutations(width) {
            out.push((ColumnRule::PermutationSearch, p));
        }
    }
    out
}

/// All permutations of 0..n in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else { break };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
    out
}

/// Rows of `a` with columns rearranged to line up with `b`.
fn rearranged(a: &ResultTable, perm: &[usize]) -> Vec<Vec<Cell>> {
    a.rows.iter().map(|r| perm.iter().map(|&j| r[j].clone()).collect()).collect()
}

fn same_bag(mut x: Vec<Vec<Cell>>, mut y: Vec<Vec<Cell>>) -> bool {
    x.sort();
    y.sort();
    x == y
}

/// Whether `b` equals `a` after reordering rows within runs of equal keys.
fn blocks_match(a: &[Vec<Cell>], keys: &[Cell], b: &[Vec<Cell>]) -> bool {
    if a.len() != b.len() || keys.len() != a.len() {
        return false;
    }
    let mut start = 0;
    while start < a.len() {
        let mut end = start + 1;
        while end < a.len() && keys[end] == keys[start] {
            end += 1;
        }
        if !same_bag(a[start..end].to_vec(), b[start..end].to_vec()) {
            return false;
        }
        start = end;
    }
    true
}

/// Whether `b` can be reordered within equal-key blocks of `a` (given by
/// `a.sort_meta`) to equal `a`. Without sort metadata every row is its own
/// block.
pub fn match_sorted(a: &ResultTable, b: &ResultTable) -> bool {
    let (a, b) = (standardize(a), standardize(b));
    if a.width() != b.width() {
        return false;
    }
    let keys: Vec<Cell> = match &a.sort_meta {
        Some(m) => m.keys.clone(),
        None => (0..a.len()).map(|i| Some(Value::number(i as f64))).collect(),
    };
    blocks_match(&a.rows, &keys, &b.rows)
}

/// Whether the single row of `single_row` appears in `other` under some
/// column alignment.
pub fn limit1_contained(single_row: &ResultTable, other: &ResultTable) -> Result<bool, MisuseError> {
    if single_row.len() != 1 {
        return Err(MisuseError { rows: single_row.len() });
    }
    let (s, o) = (standardize(single_row), standardize(other));
    Ok(contained_alignment(&s, &o).is_some())
}

fn contained_alignment(single: &ResultTable, other: &ResultTable) -> Option<(ColumnRule, Vec<usize>)> {
    if single.width() != other.width() {
        return None;
    }
    alignments(other, single).into_iter().find(|(_, p)| {
        let row = &single.rows[0];
        other.rows.iter().any(|r| p.iter().zip(row).all(|(&j, cell)| r[j] == *cell))
    })
}

/// Compares two result tables under the execution-accuracy rules.
pub fn equivalent(a: &ResultTable, b: &ResultTable) -> MatchVerdict {
    let (a, b) = (standardize(a), standardize(b));
    let fail = |row_rule| MatchVerdict { matched: false, rule_applied: None, row_rule, column_permutation: None };

    let single = |t: &ResultTable| t.limit1 && t.len() == 1;
    if single(&a) || single(&b) {
        let (s, o, flip) = if single(&a) { (&a, &b, false) } else { (&b, &a, true) };
        return match contained_alignment(s, o) {
            Some((rule, p)) => {
                let perm = if flip { p } else { invert(&p) };
                MatchVerdict {
                    matched: true,
                    rule_applied: Some(rule),
                    row_rule: RowRule::Limit1Contained,
                    column_permutation: Some(perm),
                }
            }
            None => fail(RowRule::Limit1Contained),
        };
    }

    let sorted = a.sort_meta.is_some() && b.sort_meta.is_some();
    let row_rule = if sorted { RowRule::SortedBlocks } else { RowRule::Bag };
    if a.width() != b.width() || a.len() != b.len() {
        return fail(row_rule);
    }
    for (rule, perm) in alignments(&a, &b) {
        let ar = rearranged(&a, &perm);
        let ok = if sorted {
            let (ak, bk) = (&a.sort_meta.as_ref().expect("sorted").keys, &b.sort_meta.as_ref().expect("sorted").keys);
            blocks_match(&ar, ak, &b.rows) && blocks_match(&b.rows, bk, &ar)
        } else {
            same_bag(ar, b.rows.clone())
        };
        if ok {
            return MatchVerdict { matched: true, rule_applied: Some(rule), row_rule, column_permutation: Some(perm) };
        }
    }
    fail(row_rule)
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::result::ResultColumn;

    fn table(cols: &[&str], rows: &[&[&str]]) -> ResultTable {
        let columns = cols.iter().map(|c| ResultColumn::new(*c, Provenance::Unknown)).collect();
        let rows = rows.iter().map(|r| r.iter().map(|c| (!c.is_empty()).then(|| Value::text(*c))).collect()).collect();
        ResultTable::new(columns, rows)
    }

    #[test]
    fn numbers_are_canonical() {
        let a = table(&["x"], &[&["5000.0"], &[" 2014 "]]);
        let b = ResultTable::new(
            a.columns.clone(),
            vec![vec![Some(Value::number(5000.0))], vec![Some(Value::number(2014.0))]],
        );
        assert!(equivalent(&a, &b).matched);
        assert_eq!(standardize(&a).rows[0][0], Some(Value::number(5000.0)));
    }

    #[test]
    fn dates_are_iso() {
        let a = table(&["d"], &[&["2014-01-02"]]);
        let b = table(&["d"], &[&["2014-1-2"]]);
        assert!(equivalent(&a, &b).matched);
    }

    #[test]
    fn standardize_is_idempotent() {
        let a = table(&["a", "b"], &[&["1.50", " x "], &["", "y"]]);
        let once = standardize(&a);
        assert_eq!(standardize(&once), once);
    }

    #[test]
    fn swapped_columns_match_by_search() {
        let a = table(&["a", "b"], &[&["1", "x"], &["2", "y"]]);
        let b = table(&["b", "a"], &[&["y", "2"], &["x", "1"]]);
        let v = equivalent(&a, &b);
        assert!(v.matched);
        assert_eq!(v.rule_applied, Some(ColumnRule::PermutationSearch));
        assert_eq!(v.column_permutation, Some(vec![1, 0]));
    }

    #[test]
    fn one_cell_differs() {
        let a = table(&["a"], &[&["1"], &["2"]]);
        let b = table(&["a"], &[&["1"], &["3"]]);
        assert!(!equivalent(&a, &b).matched);
    }

    #[test]
    fn limit1_rules() {
        let all = table(&["n"], &[&["a"], &["b"]]);
        let one = table(&["n"], &[&["b"]]);
        assert!(limit1_contained(&one, &all).unwrap());
        assert!(!limit1_contained(&table(&["n"], &[&["c"]]), &all).unwrap());
        assert_eq!(limit1_contained(&all, &one), Err(MisuseError { rows: 2 }));
    }

    #[test]
    fn sorted_blocks() {
        let keyed = |rows: &[&[&str]], keys: &[f64]| {
            let mut t = table(&["n", "k"], rows);
            t.sort_meta =
                Some(SortMeta { keys: keys.iter().map(|k| Some(Value::number(*k))).collect(), descending: false });
            t
        };
        let a = keyed(&[&["a", "1"], &["b", "1"], &["c", "2"]], &[1.0, 1.0, 2.0]);
        let tie_swap = keyed(&[&["b", "1"], &["a", "1"], &["c", "2"]], &[1.0, 1.0, 2.0]);
        let cross = keyed(&[&["c", "2"], &["b", "1"], &["a", "1"]], &[2.0, 1.0, 1.0]);
        assert!(match_sorted(&a, &tie_swap));
        assert!(!match_sorted(&a, &cross));
        assert!(equivalent(&a, &tie_swap).matched);
        assert!(!equivalent(&a, &cross).matched);
        assert!(match_sorted(&keyed(&[], &[]), &keyed(&[], &[])));
    }
}
