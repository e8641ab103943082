//! Relational-to-RDF conversion and an indexed, immutable triple store.
//!
//! Every row of table `tbl` with key column `key` becomes a key node
//! identified by `(tbl, key value)`. The node gets a self-link
//! `arc:tbl:key`, one `arc:tbl:col` arc per non-null non-key cell pointing
//! at a typed literal, and one `arc:t_src:c_src:t_tgt:c_tgt` arc per
//! resolvable foreign-key cell pointing at the target row's key node.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::schema::{Schema, SchemaError, TableData};
use crate::value::{Term, Value};

#[derive(Debug, Error)]
pub enum RdfError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Predicate of a column arc: `arc:tbl:col`.
pub fn column_arc(table: &str, column: &str) -> String {
    format!("arc:{table}:{column}")
}

/// Predicate of a foreign-key arc: `arc:t_src:c_src:t_tgt:c_tgt`.
pub fn fk_arc(src_table: &str, src_column: &str, tgt_table: &str, tgt_column: &str) -> String {
    format!("arc:{src_table}:{src_column}:{tgt_table}:{tgt_column}")
}

/// A parsed predicate name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArcKind<'a> {
    Column { table: &'a str, column: &'a str },
    ForeignKey { src_table: &'a str, src_column: &'a str, tgt_table: &'a str, tgt_column: &'a str },
}

pub fn parse_arc(predicate: &str) -> Option<ArcKind<'_>> {
    let rest = predicate.strip_prefix("arc:")?;
    let parts: Vec<&str> = rest.split(':').collect();
    match parts.as_slice() {
        [t, c] => Some(ArcKind::Column { table: t, column: c }),
        [ts, cs, tt, ct] => Some(ArcKind::ForeignKey { src_table: ts, src_column: cs, tgt_table: tt, tgt_column: ct }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// A foreign-key cell whose value matches no key of the target table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingForeignKey {
    pub table: String,
    pub column: String,
    pub value: Value,
    pub ref_table: String,
}

impl fmt::Display for DanglingForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dangling foreign key {}.{} = {} (no such key in {})",
            self.table, self.column, self.value, self.ref_table
        )
    }
}

/// Result of [`to_rdf`]: the graph plus skipped foreign-key cells.
#[derive(Debug, Clone)]
pub struct Conversion {
    pub graph: RdfGraph,
    pub dangling: Vec<DanglingForeignKey>,
}

/// Immutable set of triples with predicate, subject-predicate and
/// predicate-object indexes. Iteration follows the lexicographic order of
/// the serialized triples.
#[derive(Debug, Clone)]
pub struct RdfGraph {
    schema: Schema,
    triples: Vec<Triple>,
    by_predicate: HashMap<String, Vec<u32>>,
    by_subject_predicate: HashMap<(Term, String), Vec<u32>>,
    by_predicate_object: HashMap<(String, Term), Vec<u32>>,
}

/// Converts a keyed database into its RDF graph.
pub fn to_rdf(schema: &Schema, data: &TableData) -> Result<Conversion, RdfError> {
    schema.validate()?;
    data.check(schema)?;
    let mut triples = HashSet::new();
    let mut dangling = Vec::new();

    let mut keys: HashMap<&str, HashSet<&Value>> = HashMap::new();
    for t in &schema.tables {
        let k = t.key_index().expect("validated schema");
        keys.insert(t.name.as_str(), data.rows(&t.name).iter().filter_map(|r| r[k].as_ref()).collect());
    }

    for t in &schema.tables {
        let k = t.key_index().expect("validated schema");
        let key_name = &t.columns[k].name;
        for row in data.rows(&t.name) {
            let key = row[k].clone().expect("checked data");
            let node = Term::node(&t.name, key);
            triples.insert(Triple {
                subject: node.clone(),
                predicate: column_arc(&t.name, key_name),
                object: node.clone(),
            });
            for (i, (cell, col)) in row.iter().zip(&t.columns).enumerate() {
                if i == k {
                    continue;
                }
                if let Some(v) = cell {
                    triples.insert(Triple {
                        subject: node.clone(),
                        predicate: column_arc(&t.name, &col.name),
                        object: Term::Literal(v.clone()),
                    });
                }
            }
            for fk in &t.foreign_keys {
                let ci = t.column_index(&fk.column).expect("validated schema");
                let Some(v) = &row[ci] else { continue };
                let target = schema.table(&fk.ref_table).expect("validated schema");
                let tgt_key = target.key().expect("validated schema");
                if keys[target.name.as_str()].contains(v) {
                    triples.insert(Triple {
                        subject: node.clone(),
                        predicate: fk_arc(&t.name, &t.columns[ci].name, &target.name, tgt_key),
                        object: Term::node(&target.name, v.clone()),
                    });
                } else {
                    dangling.push(DanglingForeignKey {
                        table: t.name.clone(),
                        column: t.columns[ci].name.clone(),
                        value: v.clone(),
                        ref_table: target.name.clone(),
                    });
                }
            }
        }
    }

    Ok(Conversion { graph: RdfGraph::from_triples(schema.clone(), triples), dangling })
}

impl RdfGraph {
    fn from_triples(schema: Schema, triples: impl IntoIterator<Item = Triple>) -> RdfGraph {
        let mut keyed: Vec<(String, Triple)> = triples.into_iter().map(|t| (t.to_string(), t)).collect();
        keyed.sort();
        keyed.dedup_by(|a, b| a.0 == b.0);
        let triples: Vec<Triple> = keyed.into_iter().map(|(_, t)| t).collect();

        let mut by_predicate: HashMap<String, Vec<u32>> = HashMap::new();
        let mut by_subject_predicate: HashMap<(Term, String), Vec<u32>> = HashMap::new();
        let mut by_predicate_object: HashMap<(String, Term), Vec<u32>> = HashMap::new();
        for (i, t) in triples.iter().enumerate() {
            let i = i as u32;
            by_predicate.entry(t.predicate.clone()).or_default().push(i);
            by_subject_predicate.entry((t.subject.clone(), t.predicate.clone())).or_default().push(i);
            by_predicate_object.entry((t.predicate.clone(), t.object.clone())).or_default().push(i);
        }
        RdfGraph { schema, triples, by_predicate, by_subject_predicate, by_predicate_object }
    }

    /// The (keyed) schema the graph was built from.
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// All triples matching the bound components, in serialized order.
    pub fn matching<'a>(
        &'a self,
        subject: Option<&'a Term>,
        predicate: Option<&'a str>,
        object: Option<&'a Term>,
    ) -> Box<dyn Iterator<Item = &'a Triple> + 'a> {
        let filter = move |t: &&Triple| {
            subject.is_none_or(|s| &t.subject == s)
                && predicate.is_none_or(|p| t.predicate == p)
                && object.is_none_or(|o| &t.object == o)
        };
        match (subject, predicate, object) {
            (Some(s), Some(p), _) => {
                Box::new(self.lookup(self.by_subject_predicate.get(&(s.clone(), p.to_string()))).filter(filter))
            }
            (None, Some(p), Some(o)) => {
                Box::new(self.lookup(self.by_predicate_object.get(&(p.to_string(), o.clone()))))
            }
            (None, Some(p), None) => Box::new(self.lookup(self.by_predicate.get(p))),
            _ => Box::new(self.triples.iter().filter(filter)),
        }
    }

    /// Upper bound on the number of matches, read from the indexes.
    pub fn estimate(&self, subject: Option<&Term>, predicate: Option<&str>, object: Option<&Term>) -> usize {
        let get = |v: Option<&Vec<u32>>| v.map_or(0, Vec::len);
        match (subject, predicate, object) {
            (Some(s), Some(p), _) => get(self.by_subject_predicate.get(&(s.clone(), p.to_string()))),
            (None, Some(p), Some(o)) => get(self.by_predicate_object.get(&(p.to_string(), o.clone()))),
            (None, Some(p), None) => get(self.by_predicate.get(p)),
            _ => self.triples.len(),
        }
    }

    fn lookup<'a>(&'a self, ids: Option<&'a Vec<u32>>) -> impl Iterator<Item = &'a Triple> + 'a {
        ids.into_iter().flatten().map(move |&i| &self.triples[i as usize])
    }

    /// One `S P O` line per triple.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    /// Number of self-link triples per key node.
    pub fn self_link_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.triples {
            if t.subject == t.object {
                *counts.entry(t.subject.to_string()).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Closed-form triple count: for every row, one self-link plus one arc per
/// non-null non-key cell, plus one arc per resolvable foreign-key cell.
pub fn expected_triple_count(schema: &Schema, data: &TableData) -> usize {
    let mut total = 0;
    for t in &schema.tables {
        let k = t.key_index().unwrap_or(usize::MAX);
        for row in data.rows(&t.name) {
            total += 1 + row.iter().enumerate().filter(|(i, c)| *i != k && c.is_some()).count();
            for fk in &t.foreign_keys {
                let ci = t.column_index(&fk.column).unwrap();
                let Some(v) = &row[ci] else { continue };
                let target = schema.table(&fk.ref_table).unwrap();
                let tk = target.key_index().unwrap();
                if data.rows(&target.name).iter().any(|r| r[tk].as_ref() == Some(v)) {
                    total += 1;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Column, ForeignKey, PrimaryKey, Table};
    use crate::value::Datatype;

    fn teacher_school() -> (Schema, TableData) {
        let school = Table {
            name: "school".into(),
            columns: vec![
                Column { name: "ID".into(), datatype: Datatype::Number },
                Column { name: "State".into(), datatype: Datatype::Text },
            ],
            primary_key: Some(PrimaryKey::Single("ID".into())),
            foreign_keys: vec![],
        };
        let teacher = Table {
            name: "teacher".into(),
            columns: vec![
                Column { name: "ID".into(), datatype: Datatype::Number },
                Column { name: "Name".into(), datatype: Datatype::Text },
                Column { name: "School_ID".into(), datatype: Datatype::Number },
            ],
            primary_key: Some(PrimaryKey::Single("ID".into())),
            foreign_keys: vec![ForeignKey {
                column: "School_ID".into(),
                ref_table: "school".into(),
                ref_column: "ID".into(),
            }],
        };
        let schema = Schema { tables: vec![school, teacher] };
        let mut data = TableData::empty(&schema);
        data.tables.insert("school".into(), vec![vec![Some(Value::number(10.0)), Some(Value::text("Texas"))]]);
        data.tables.insert(
            "teacher".into(),
            vec![vec![Some(Value::number(1.0)), Some(Value::text("Alice")), Some(Value::number(10.0))]],
        );
        (schema, data)
    }

    #[test]
    fn teacher_row_expands_to_four_triples() {
        let (schema, mut data) = teacher_school();
        data.tables.insert("school".into(), vec![]);
        // Keep only the teacher row; the FK target is added back below so
        // the FK arc resolves.
        data.tables.insert("school".into(), vec![vec![Some(Value::number(10.0)), None]]);
        let conv = to_rdf(&schema, &data).unwrap();
        let t1 = Term::node("teacher", Value::number(1.0));
        let teacher_triples: Vec<String> = conv.graph.matching(Some(&t1), None, None).map(|t| t.to_string()).collect();
        assert_eq!(
            teacher_triples,
            vec![
                "<teacher:1> arc:teacher:ID <teacher:1>",
                "<teacher:1> arc:teacher:Name \"Alice\"",
                "<teacher:1> arc:teacher:School_ID 10",
                "<teacher:1> arc:teacher:School_ID:school:ID <school:10>",
            ]
        );
        assert!(conv.dangling.is_empty());
    }

    #[test]
    fn dangling_fk_is_reported_and_skipped() {
        let (schema, mut data) = teacher_school();
        data.tables.insert("school".into(), vec![]);
        let conv = to_rdf(&schema, &data).unwrap();
        assert_eq!(conv.dangling.len(), 1);
        assert_eq!(conv.graph.len(), 3);
        assert_eq!(conv.graph.len(), expected_triple_count(&schema, &data));
    }

    #[test]
    fn empty_data_gives_empty_graph() {
        let (schema, _) = teacher_school();
        let conv = to_rdf(&schema, &TableData::empty(&schema)).unwrap();
        assert!(conv.graph.is_empty());
    }

    #[test]
    fn key_only_table_has_only_self_links() {
        let t = Table {
            name: "k".into(),
            columns: vec![Column { name: "id".into(), datatype: Datatype::Number }],
            primary_key: Some(PrimaryKey::Single("id".into())),
            foreign_keys: vec![],
        };
        let schema = Schema { tables: vec![t] };
        let mut data = TableData::empty(&schema);
        data.tables.insert("k".into(), (1..=3).map(|i| vec![Some(Value::number(i as f64))]).collect());
        let g = to_rdf(&schema, &data).unwrap().graph;
        assert_eq!(g.len(), 3);
        assert!(g.triples().iter().all(|t| t.subject == t.object));
    }

    #[test]
    fn match_probes() {
        let (schema, data) = teacher_school();
        let g = to_rdf(&schema, &data).unwrap().graph;
        assert_eq!(g.matching(None, Some("arc:school:State"), None).count(), 1);
        assert_eq!(g.matching(None, Some("arc:nope:x"), None).count(), 0);
        let t = g.triples()[0].clone();
        let found: Vec<_> = g.matching(Some(&t.subject), Some(&t.predicate), Some(&t.object)).collect();
        assert_eq!(found, vec![&t]);
        assert_eq!(g.estimate(None, Some("arc:school:State"), None), 1);
    }

    #[test]
    fn arcs_parse() {
        assert_eq!(parse_arc("arc:school:State"), Some(ArcKind::Column { table: "school", column: "State" }));
        assert!(matches!(parse_arc("arc:a:b:c:d"), Some(ArcKind::ForeignKey { tgt_column: "d", .. })));
        assert_eq!(parse_arc("arc:a:b:c"), None);
        assert_eq!(parse_arc("rdf:type"), None);
    }
}
