//! Shortest join paths in the undirected column graph of a schema.
//!
//! Nodes are all columns of all tables. Each table's key is linked to every
//! other column of the table, and every foreign key links its source column
//! to the referenced key. Ties are broken by declaration order.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::schema::{ColumnRef, Schema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no join path between {from} and {to}")]
pub struct NoJoinPath {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

/// How one hop moves between rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HopKind {
    /// From a row's key to another column of the same row.
    KeyToColumn,
    /// From a column to the key of the same row.
    ColumnToKey,
    /// From a foreign-key column to the referenced row's key.
    FkForward,
    /// From a key to the foreign-key column of the referencing rows.
    FkBackward,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hop {
    pub from: ColumnRef,
    pub to: ColumnRef,
    pub kind: HopKind,
}

impl Hop {
    /// The foreign key crossed by this hop as (source column, target key).
    pub fn foreign_key(&self) -> Option<(&ColumnRef, &ColumnRef)> {
        match self.kind {
            HopKind::FkForward => Some((&self.from, &self.to)),
            HopKind::FkBackward => Some((&self.to, &self.from)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JoinPath {
    pub from: ColumnRef,
    pub to: ColumnRef,
    pub hops: Vec<Hop>,
}

impl JoinPath {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn nodes(&self) -> Vec<&ColumnRef> {
        std::iter::once(&self.from).chain(self.hops.iter().map(|h| &h.to)).collect()
    }
}

impl fmt::Display for JoinPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = self.nodes().iter().map(|c| c.to_string()).collect();
        f.write_str(&nodes.join(" - "))
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    kind: HopKind,
}

/// Column graph of a schema.
#[derive(Debug, Clone)]
pub struct SchemaGraph {
    nodes: Vec<ColumnRef>,
    adj: Vec<Vec<Edge>>,
}

impl SchemaGraph {
    pub fn new(schema: &Schema) -> SchemaGraph {
        let mut nodes = Vec::new();
        for t in &schema.tables {
            for c in &t.columns {
                nodes.push(ColumnRef::new(&t.name, &c.name));
            }
        }
        let mut g = SchemaGraph { adj: vec![Vec::new(); nodes.len()], nodes };
        for t in &schema.tables {
            let Some(key) = schema.key_of(&t.name) else { continue };
            let k = g.index(&key).expect("key column");
            for c in &t.columns {
                let i = g.index(&ColumnRef::new(&t.name, &c.name)).expect("column");
                if i != k {
                    g.adj[k].push(Edge { to: i, kind: HopKind::KeyToColumn });
                    g.adj[i].push(Edge { to: k, kind: HopKind::ColumnToKey });
                }
            }
        }
        for t in &schema.tables {
            for fk in &t.foreign_keys {
                let (Some(src), Some(tgt)) =
                    (schema.resolve_column(&t.name, &fk.column), schema.resolve_column(&fk.ref_table, &fk.ref_column))
                else {
                    continue;
                };
                let (s, d) = (g.index(&src).expect("fk source"), g.index(&tgt).expect("fk target"));
                g.adj[s].push(Edge { to: d, kind: HopKind::FkForward });
                g.adj[d].push(Edge { to: s, kind: HopKind::FkBackward });
            }
        }
        g
    }

    pub fn columns(&self) -> &[ColumnRef] {
        &self.nodes
    }

    fn index(&self, c: &ColumnRef) -> Option<usize> {
        self.nodes.iter().position(|n| n == c)
    }

    fn path_from(&self, from: usize, edges: &[(usize, Edge)]) -> JoinPath {
        let hops = edges
            .iter()
            .map(|(src, e)| Hop { from: self.nodes[*src].clone(), to: self.nodes[e.to].clone(), kind: e.kind })
            .collect::<Vec<_>>();
        let to = hops.last().map_or_else(|| self.nodes[from].clone(), |h| h.to.clone());
        JoinPath { from: self.nodes[from].clone(), to, hops }
    }

    /// Breadth-first shortest path; neighbors are visited in declaration order.
    pub fn shortest(&self, from: &ColumnRef, to: &ColumnRef) -> Result<JoinPath, NoJoinPath> {
        let err = || NoJoinPath { from: from.clone(), to: to.clone() };
        let (s, t) = (self.index(from).ok_or_else(err)?, self.index(to).ok_or_else(err)?);
        let mut parent: Vec<Option<(usize, Edge)>> = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for e in &self.adj[u] {
                if !seen[e.to] {
                    seen[e.to] = true;
                    parent[e.to] = Some((u, *e));
                    queue.push_back(e.to);
                }
            }
        }
        if !seen[t] {
            return Err(err());
        }
        let mut edges = Vec::new();
        let mut cur = t;
        while let Some((p, e)) = parent[cur] {
            edges.push((p, e));
            cur = p;
        }
        edges.reverse();
        Ok(self.path_from(s, &edges))
    }

    /// Candidate paths in nondecreasing length: the BFS path first, then the
    /// other simple paths, at most `limit` in total.
    pub fn candidates(&self, from: &ColumnRef, to: &ColumnRef, limit: usize) -> Result<Vec<JoinPath>, NoJoinPath> {
        let first = self.shortest(from, to)?;
        let mut out = vec![first];
        let (s, t) = (self.index(from).expect("checked"), self.index(to).expect("checked"));
        if s == t {
            return Ok(out);
        }
        // Breadth-first expansion of partial simple paths; bounded so that
        // large schemas cannot blow up.
        const MAX_PARTIAL: usize = 200_000;
        let mut queue: VecDeque<Vec<(usize, Edge)>> = VecDeque::from([Vec::new()]);
        let mut expanded = 0usize;
        while let Some(partial) = queue.pop_front() {
            if out.len() >= limit || expanded > MAX_PARTIAL {
                break;
            }
            expanded += 1;
            let end = partial.last().map_or(s, |(_, e)| e.to);
            for e in &self.adj[end] {
                let visited = e.to == s || partial.iter().any(|(_, pe)| pe.to == e.to);
                if visited {
                    continue;
                }
                let mut next = partial.clone();
                next.push((end, *e));
                if e.to == t {
                    let p = self.path_from(s, &next);
                    if !out.contains(&p) && out.len() < limit {
                        out.push(p);
                    }
                } else {
                    queue.push_back(next);
                }
            }
        }
        Ok(out)
    }
}

/// How many candidate paths are tried before giving up.
pub const MAX_PATH_TRIES: usize = 8;

/// Whether a path crosses a foreign key whose two ends have different
/// datatypes; such a link can never match and the next candidate is used.
pub fn crosses_mismatched_key(schema: &Schema, path: &JoinPath) -> bool {
    path.hops.iter().filter_map(Hop::foreign_key).any(|(src, tgt)| schema.datatype(src) != schema.datatype(tgt))
}

/// The first of up to [`MAX_PATH_TRIES`] candidates that does not cross a
/// mismatched foreign key.
pub fn usable_path(
    graph: &SchemaGraph,
    schema: &Schema,
    from: &ColumnRef,
    to: &ColumnRef,
) -> Result<JoinPath, NoJoinPath> {
    graph
        .candidates(from, to, MAX_PATH_TRIES)?
        .into_iter()
        .find(|p| !crosses_mismatched_key(schema, p))
        .ok_or_else(|| NoJoinPath { from: from.clone(), to: to.clone() })
}

/// Shortest path between two columns.
pub fn join_path(schema: &Schema, from: &ColumnRef, to: &ColumnRef) -> Result<JoinPath, NoJoinPath> {
    SchemaGraph::new(schema).shortest(from, to)
}
