//! The SPARQL subset produced by the translator: AST, canonical text,
//! parser and an evaluator over [`RdfGraph`](crate::rdf::RdfGraph).

mod eval;
mod parse;
mod serialize;

use std::collections::HashMap;

use thiserror::Error;

use crate::qdmr::Aggregator;
use crate::rdf::{parse_arc, ArcKind};
use crate::result::Provenance;
use crate::schema::ColumnRef;
use crate::value::{Comparator, Value};

pub use eval::{evaluate, evaluate_with, EvalOptions, JoinOrder};
pub use parse::parse_sparql;
pub use serialize::{with_prefixes, ARC_PREFIX_IRI};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparqlError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unsupported SPARQL feature: {0}")]
    UnsupportedFeature(String),
}

/// Subject or object of a triple pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Var(String),
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    /// Arc name, such as `arc:school:State`.
    pub predicate: String,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn vars(s: &str, predicate: impl Into<String>, o: &str) -> TriplePattern {
        TriplePattern {
            subject: PatternTerm::Var(s.to_string()),
            predicate: predicate.into(),
            object: PatternTerm::Var(o.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Literal(Value),
    /// Binary comparison; never `Comparator::Like`.
    Compare(Comparator, Box<Expr>, Box<Expr>),
    /// `CONTAINS(LCASE(STR(?v)), "needle")`; the needle is lowercase.
    Contains(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Element {
    Triple(TriplePattern),
    Filter(Expr),
    SubQuery(Box<SelectQuery>),
    Union(Vec<GroupPattern>),
    Minus(GroupPattern),
    Group(GroupPattern),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct GroupPattern {
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    Var(String),
    /// `(?source AS ?var)`
    Alias {
        source: String,
        var: String,
    },
    /// `(OP(?arg) AS ?var)`
    Aggregate {
        op: Aggregator,
        arg: String,
        var: String,
    },
}

impl Projection {
    pub fn var(&self) -> &str {
        match self {
            Projection::Var(v) => v,
            Projection::Alias { var, .. } | Projection::Aggregate { var, .. } => var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub var: String,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectQuery {
    pub distinct: bool,
    pub projection: Vec<Projection>,
    pub pattern: GroupPattern,
    pub group_by: Vec<String>,
    pub order_by: Vec<OrderKey>,
}

impl SelectQuery {
    pub fn is_aggregate(&self) -> bool {
        !self.group_by.is_empty() || self.projection.iter().any(|p| matches!(p, Projection::Aggregate { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputColumn {
    pub var: String,
    pub provenance: Provenance,
}

/// A query with its canonical text and output columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparqlQuery {
    pub ast: SelectQuery,
    pub text: String,
    pub output_columns: Vec<OutputColumn>,
}

impl SparqlQuery {
    pub fn new(ast: SelectQuery) -> SparqlQuery {
        let text = ast.to_string();
        let prov = query_provenance(&ast);
        let output_columns = ast
            .projection
            .iter()
            .map(|p| OutputColumn {
                var: p.var().to_string(),
                provenance: prov.get(p.var()).cloned().unwrap_or(Provenance::Unknown),
            })
            .collect();
        SparqlQuery { ast, text, output_columns }
    }
}

/// Provenance of the variables a query projects.
fn query_provenance(q: &SelectQuery) -> HashMap<String, Provenance> {
    let inner = group_provenance(&q.pattern);
    let col = |v: &str| match inner.get(v) {
        Some(Provenance::Column(c)) => Some(c.clone()),
        _ => None,
    };
    q.projection
        .iter()
        .map(|p| {
            let prov = match p {
                Projection::Var(v) => inner.get(v).cloned().unwrap_or(Provenance::Unknown),
                Projection::Alias { source, .. } => inner.get(source).cloned().unwrap_or(Provenance::Unknown),
                Projection::Aggregate { op, arg, .. } => Provenance::Aggregate { op: *op, of: col(arg) },
            };
            (p.var().to_string(), prov)
        })
        .collect()
}

fn group_provenance(g: &GroupPattern) -> HashMap<String, Provenance> {
    let mut out: HashMap<String, Provenance> = HashMap::new();
    let put = |out: &mut HashMap<String, Provenance>, v: &str, p: Provenance| {
        out.entry(v.to_string()).or_insert(p);
    };
    for e in &g.elements {
        match e {
            Element::Triple(t) => {
                let (PatternTerm::Var(s), PatternTerm::Var(o)) = (&t.subject, &t.object) else { continue };
                match parse_arc(&t.predicate) {
                    Some(ArcKind::Column { table, column }) if s == o => {
                        put(&mut out, s, Provenance::Column(ColumnRef::new(table, column)));
                    }
                    Some(ArcKind::Column { table, column }) => {
                        put(&mut out, o, Provenance::Column(ColumnRef::new(table, column)));
                    }
                    Some(ArcKind::ForeignKey { tgt_table, tgt_column, .. }) => {
                        put(&mut out, o, Provenance::Column(ColumnRef::new(tgt_table, tgt_column)));
                    }
                    None => {}
                }
            }
            Element::SubQuery(q) => {
                for (v, p) in query_provenance(q) {
                    put(&mut out, &v, p);
                }
            }
            Element::Union(branches) => {
                for b in branches {
                    for (v, p) in group_provenance(b) {
                        put(&mut out, &v, p);
                    }
                }
            }
            Element::Group(inner) => {
                for (v, p) in group_provenance(inner) {
                    put(&mut out, &v, p);
                }
            }
            Element::Filter(_) | Element::Minus(_) => {}
        }
    }
    out
}
