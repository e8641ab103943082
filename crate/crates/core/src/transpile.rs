//! Grounded QDMR to SPARQL.
//!
//! Steps are realized lazily inside a context: a list of pattern elements
//! plus the variables of every step already present in it. A step is added
//! by first adding its arguments to the same context, so arguments realized
//! once are shared by everything that uses them. Operators that need a full
//! `SELECT` (aggregation, grouping, ordering, `DISTINCT`) wrap the context
//! into a subquery; only the variables they project survive, and steps that
//! are lost this way are added again on the next pass.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::joinpath::{usable_path, HopKind, NoJoinPath, SchemaGraph};
use crate::qdmr::{
    grounding_location, union_kind, AggregateSpec, Aggregator, CompareValue, Direction, GroundedQdmr, Grounding, Op,
    StepIndex, UnionKind,
};
use crate::rdf::{column_arc, fk_arc};
use crate::schema::{ColumnRef, Schema};
use crate::sparql::{Element, Expr, GroupPattern, OrderKey, Projection, SelectQuery, SparqlQuery, TriplePattern};
use crate::value::{like_needle, Comparator};

/// Passes over the arguments before a context is declared unrealizable.
const MAX_CONTEXT_TRIES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranspileError {
    #[error(transparent)]
    NoJoinPath(#[from] NoJoinPath),
    #[error("step #{step}: unsupported shape: {message}")]
    UnsupportedShape { step: StepIndex, message: String },
}

/// One output column of a realized step.
#[derive(Debug, Clone, PartialEq)]
struct Col {
    var: String,
    /// Database column the values come from; None for computed values.
    loc: Option<ColumnRef>,
    /// Row node the value was read from, while it is still in scope. For
    /// key columns this is the value variable itself.
    row: Option<String>,
}

type StepVars = BTreeMap<StepIndex, Vec<Col>>;

#[derive(Debug, Clone, Default)]
struct Ctx {
    elements: Vec<Element>,
    map: StepVars,
}

/// Compiles a grounded QDMR into a single SPARQL query.
pub fn transpile(q: &GroundedQdmr, schema: &Schema) -> Result<SparqlQuery, TranspileError> {
    let mut t = Translator { q, schema, graph: SchemaGraph::new(schema), used: HashSet::new() };
    let out = q.output();
    let (query, cols) = if t.makes_full(out) {
        let (query, map) = t.full(out, Ctx::default())?;
        (query, map[&out].clone())
    } else {
        let c = t.context(out, &[out], Ctx::default())?;
        let cols = c.map[&out].clone();
        (select(vars(&cols), c.elements), cols)
    };
    let wanted = vars(&cols);
    let projected: Vec<String> = query.projection.iter().map(|p| p.var().to_string()).collect();
    let query = if projected == wanted { query } else { select(wanted, vec![Element::SubQuery(Box::new(query))]) };
    Ok(SparqlQuery::new(query))
}

fn vars(cols: &[Col]) -> Vec<String> {
    cols.iter().map(|c| c.var.clone()).collect()
}

fn select(vars: Vec<String>, elements: Vec<Element>) -> SelectQuery {
    SelectQuery {
        distinct: false,
        projection: vars.into_iter().map(Projection::Var).collect(),
        pattern: GroupPattern { elements },
        group_by: vec![],
        order_by: vec![],
    }
}

/// Columns that remain usable once their pattern is wrapped in a subquery:
/// row nodes are no longer visible unless they are the value itself.
fn exported(cols: &[Col]) -> Vec<Col> {
    cols.iter().map(|c| Col { row: c.row.clone().filter(|r| *r == c.var), ..c.clone() }).collect()
}

fn triple(s: &str, predicate: String, o: &str) -> Element {
    Element::Triple(TriplePattern::vars(s, predicate, o))
}

fn compare(op: Comparator, lhs: &str, rhs: Expr) -> Element {
    Element::Filter(Expr::Compare(op, Box::new(Expr::Var(lhs.to_string())), Box::new(rhs)))
}

struct Translator<'a> {
    q: &'a GroundedQdmr,
    schema: &'a Schema,
    graph: SchemaGraph,
    used: HashSet<String>,
}

impl Translator<'_> {
    fn unsupported(&self, step: StepIndex, message: impl Into<String>) -> TranspileError {
        TranspileError::UnsupportedShape { step, message: message.into() }
    }

    /// A variable name not used anywhere else in the query.
    fn fresh(&mut self, base: &str) -> String {
        let base: String = base.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
        let base = if base.is_empty() { "v".to_string() } else { base };
        let mut name = base.clone();
        let mut n = 2;
        while self.used.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        self.used.insert(name.clone());
        name
    }

    fn key(&self, step: StepIndex, table: &str) -> Result<ColumnRef, TranspileError> {
        self.schema.key_of(table).ok_or_else(|| self.unsupported(step, format!("table `{table}` has no key")))
    }

    /// Whether the step's pattern is a complete `SELECT` rather than a group.
    fn makes_full(&self, i: StepIndex) -> bool {
        let op = &self.q.step(i).op;
        if op.distinct() {
            return true;
        }
        match op {
            Op::Aggregate { aggregator, .. } | Op::Group { aggregator, .. } => {
                matches!(aggregator, AggregateSpec::Op(_))
            }
            Op::Sort { .. } => true,
            Op::Union { .. } => matches!(
                union_kind(self.q, self.schema, i),
                Some(UnionKind::AfterGroup | UnionKind::Aggregators { .. })
            ),
            _ => false,
        }
    }

    /// Makes every step in `indices` present in `c`.
    fn context(&mut self, step: StepIndex, indices: &[StepIndex], mut c: Ctx) -> Result<Ctx, TranspileError> {
        for _ in 0..MAX_CONTEXT_TRIES {
            if indices.iter().all(|i| c.map.contains_key(i)) {
                return Ok(c);
            }
            for &i in indices {
                if !c.map.contains_key(&i) {
                    c = self.add(i, c)?;
                }
            }
        }
        if indices.iter().all(|i| c.map.contains_key(i)) {
            Ok(c)
        } else {
            Err(self.unsupported(step, "arguments cannot share one pattern"))
        }
    }

    /// Adds one step to a context as a group pattern.
    fn add(&mut self, i: StepIndex, mut c: Ctx) -> Result<Ctx, TranspileError> {
        if !self.makes_full(i) {
            return self.inner(i, c);
        }
        let deps = self.q.dependencies(i);
        if c.map.keys().all(|k| deps.contains(k)) {
            // Nothing else lives in the context: the subquery consumes it.
            let (query, map) = self.full(i, c)?;
            Ok(Ctx { elements: vec![Element::SubQuery(Box::new(query))], map })
        } else {
            // Keep unrelated steps: realize in a fresh scope and join.
            let (query, map) = self.full(i, Ctx::default())?;
            c.elements.push(Element::SubQuery(Box::new(query)));
            for (k, v) in map {
                c.map.entry(k).or_insert(v);
            }
            Ok(c)
        }
    }

    /// Builds a full `SELECT` for a step, returning it with the variables of
    /// the steps it exports.
    fn full(&mut self, i: StepIndex, c: Ctx) -> Result<(SelectQuery, StepVars), TranspileError> {
        let op = self.q.step(i).op.clone();
        if op.distinct() {
            let c = self.inner(i, c)?;
            let cols = exported(&c.map[&i]);
            let mut query = select(vars(&cols), c.elements);
            query.distinct = true;
            return Ok((query, BTreeMap::from([(i, cols)])));
        }
        match op {
            Op::Aggregate { aggregator: AggregateSpec::Op(agg), subject } => {
                let c = self.context(i, &[subject], c)?;
                let arg = c.map[&subject][0].var.clone();
                let var = self.fresh(agg.name());
                let query = SelectQuery {
                    projection: vec![Projection::Aggregate { op: agg, arg, var: var.clone() }],
                    ..select(vec![], c.elements)
                };
                Ok((query, BTreeMap::from([(i, vec![Col { var, loc: None, row: None }])])))
            }
            Op::Group { aggregator: AggregateSpec::Op(agg), subject, attr } => {
                let c = self.context(i, &[subject, attr], c)?;
                let keys = exported(&c.map[&attr]);
                let arg = c.map[&subject][0].var.clone();
                let var = self.fresh(agg.name());
                let mut query = select(vars(&keys), c.elements);
                query.projection.push(Projection::Aggregate { op: agg, arg, var: var.clone() });
                query.group_by = vars(&keys);
                let map = BTreeMap::from([(attr, keys), (i, vec![Col { var, loc: None, row: None }])]);
                Ok((query, map))
            }
            Op::Sort { subject, attr, direction } => {
                let c = self.context(i, &[subject, attr], c)?;
                let cols = exported(&c.map[&subject]);
                let mut query = select(vars(&cols), c.elements);
                query.order_by =
                    vec![OrderKey { var: c.map[&attr][0].var.clone(), descending: direction == Direction::Desc }];
                Ok((query, BTreeMap::from([(subject, cols.clone()), (i, cols)])))
            }
            Op::Union { refs } => match union_kind(self.q, self.schema, i) {
                Some(UnionKind::AfterGroup) => self.union_after_group(i, &refs, c),
                Some(UnionKind::Aggregators { shared }) => self.union_aggregators(i, &refs, shared, c),
                _ => Err(self.unsupported(i, "union is not a full pattern")),
            },
            _ => Err(self.unsupported(i, "operator is not a full pattern")),
        }
    }

    fn union_after_group(
        &mut self,
        i: StepIndex,
        refs: &[StepIndex],
        c: Ctx,
    ) -> Result<(SelectQuery, StepVars), TranspileError> {
        let (subject, attr) = refs
            .iter()
            .find_map(|r| match self.q.step(*r).op {
                Op::Group { subject, attr, .. } => Some((subject, attr)),
                _ => None,
            })
            .expect("classified as a union after GROUP");
        let c = self.context(i, &[subject, attr], c)?;
        let keys = exported(&c.map[&attr]);
        let arg = c.map[&subject][0].var.clone();
        let mut query = select(vec![], c.elements);
        query.group_by = vars(&keys);
        let mut map = BTreeMap::from([(attr, keys.clone())]);
        let mut out = Vec::new();
        for &r in refs {
            if r == attr {
                query.projection.extend(keys.iter().map(|k| Projection::Var(k.var.clone())));
                out.extend(keys.iter().cloned());
                continue;
            }
            let Op::Group { aggregator: AggregateSpec::Op(agg), .. } = self.q.step(r).op else {
                unreachable!("classified as a union after GROUP")
            };
            let var = self.fresh(agg.name());
            query.projection.push(Projection::Aggregate { op: agg, arg: arg.clone(), var: var.clone() });
            let col = Col { var, loc: None, row: None };
            map.insert(r, vec![col.clone()]);
            out.push(col);
        }
        map.insert(i, out);
        Ok((query, map))
    }

    fn union_aggregators(
        &mut self,
        i: StepIndex,
        refs: &[StepIndex],
        shared: bool,
        c: Ctx,
    ) -> Result<(SelectQuery, StepVars), TranspileError> {
        let parts: Vec<(Aggregator, StepIndex)> = refs
            .iter()
            .map(|r| match self.q.step(*r).op {
                Op::Aggregate { aggregator: AggregateSpec::Op(agg), subject } => (agg, subject),
                _ => unreachable!("classified as a union of aggregates"),
            })
            .collect();
        let mut map = StepVars::new();
        let mut out = Vec::new();
        let query = if shared {
            let subject = parts[0].1;
            let c = self.context(i, &[subject], c)?;
            let arg = c.map[&subject][0].var.clone();
            let mut query = select(vec![], c.elements);
            for (&r, (agg, _)) in refs.iter().zip(&parts) {
                let var = self.fresh(agg.name());
                query.projection.push(Projection::Aggregate { op: *agg, arg: arg.clone(), var: var.clone() });
                let col = Col { var, loc: None, row: None };
                map.insert(r, vec![col.clone()]);
                out.push(col);
            }
            query
        } else {
            // Each aggregate over its own pattern; one row each, cross-joined.
            let mut elements = Vec::new();
            for (&r, (agg, subject)) in refs.iter().zip(&parts) {
                let sc = self.context(i, &[*subject], Ctx::default())?;
                let arg = sc.map[subject][0].var.clone();
                let var = self.fresh(agg.name());
                let sub = SelectQuery {
                    projection: vec![Projection::Aggregate { op: *agg, arg, var: var.clone() }],
                    ..select(vec![], sc.elements)
                };
                elements.push(Element::SubQuery(Box::new(sub)));
                let col = Col { var, loc: None, row: None };
                map.insert(r, vec![col.clone()]);
                out.push(col);
            }
            select(vars(&out), elements)
        };
        map.insert(i, out);
        Ok((query, map))
    }

    /// Adds a step whose pattern is a group (no projection of its own).
    fn inner(&mut self, i: StepIndex, c: Ctx) -> Result<Ctx, TranspileError> {
        let op = self.q.step(i).op.clone();
        match op {
            Op::Select { subject, .. } => {
                let mut c = c;
                let col = self.ground(i, &subject, &mut c)?;
                c.map.insert(i, vec![col]);
                Ok(c)
            }
            Op::Project { projection, subject, .. } => {
                let mut c = self.context(i, &[subject], c)?;
                let start = c.map[&subject].clone();
                let cols = match projection {
                    None => start,
                    Some(g) => vec![self.project(i, &start[0], &g, &mut c)?],
                };
                c.map.insert(i, cols);
                Ok(c)
            }
            Op::Aggregate { aggregator: AggregateSpec::Grounded(g), subject } => {
                let mut c = self.context(i, &[subject], c)?;
                let start = c.map[&subject][0].clone();
                let col = self.project(i, &start, &g, &mut c)?;
                c.map.insert(i, vec![col]);
                Ok(c)
            }
            Op::Group { aggregator: AggregateSpec::Grounded(g), attr, .. } => {
                let mut c = self.context(i, &[attr], c)?;
                let start = c.map[&attr][0].clone();
                let col = self.project(i, &start, &g, &mut c)?;
                c.map.insert(i, vec![col]);
                Ok(c)
            }
            Op::Comparative { subject, attr, condition, .. } => {
                let mut idx = vec![subject, attr];
                if let CompareValue::Ref(r) = condition.value {
                    idx.push(r);
                }
                let mut c = self.context(i, &idx, c)?;
                let attr_col = c.map[&attr][0].clone();
                let x = match &condition.column {
                    Some(col) if Some(col) != attr_col.loc.as_ref() => self.walk(i, &attr_col, col, &mut c)?,
                    _ => attr_col,
                };
                match (condition.comparator, &condition.value) {
                    (Some(Comparator::Like), CompareValue::Ground(Grounding::Value(v))) => {
                        c.elements.push(Element::Filter(Expr::Contains(x.var.clone(), like_needle(&v.value))));
                    }
                    (Some(Comparator::Like), _) => return Err(self.unsupported(i, "like needs a literal pattern")),
                    (op, CompareValue::Ground(Grounding::Value(v))) => {
                        c.elements.push(compare(op.unwrap_or(Comparator::Eq), &x.var, Expr::Literal(v.value.clone())));
                    }
                    (op, CompareValue::Ref(r)) => {
                        let rhs = c.map[r][0].var.clone();
                        c.elements.push(compare(op.unwrap_or(Comparator::Eq), &x.var, Expr::Var(rhs)));
                    }
                    (None, CompareValue::Ground(g)) => {
                        // Relatedness: some row of the grounding reachable from the attribute.
                        let target = self.location(i, g)?;
                        self.walk(i, &x, &target, &mut c)?;
                    }
                    (Some(_), CompareValue::Ground(_)) => {
                        return Err(self.unsupported(i, "comparison against a table or column"));
                    }
                }
                let cols = c.map[&subject].clone();
                c.map.insert(i, cols);
                Ok(c)
            }
            Op::Superlative { extremum, subject, attr } => {
                let mut c = self.context(i, &[subject, attr], c)?;
                let a = c.map[&attr][0].var.clone();
                // The extremum over the attribute's whole denotation.
                let sc = self.context(i, &[attr], Ctx::default())?;
                let arg = sc.map[&attr][0].var.clone();
                let agg = extremum.aggregator();
                let best = self.fresh(agg.name());
                let sub = SelectQuery {
                    projection: vec![Projection::Aggregate { op: agg, arg, var: best.clone() }],
                    ..select(vec![], sc.elements)
                };
                c.elements.push(Element::SubQuery(Box::new(sub)));
                c.elements.push(compare(Comparator::Eq, &a, Expr::Var(best)));
                let cols = c.map[&subject].clone();
                c.map.insert(i, cols);
                Ok(c)
            }
            Op::Intersect { subject, attrs } => {
                let mut c = self.context(i, &[subject, attrs[0], attrs[1]], c)?;
                let s = c.map[&subject][0].clone();
                for a in attrs {
                    let a = c.map[&a][0].clone();
                    if a.var != s.var && a.loc.is_some() && a.loc == s.loc {
                        c.elements.push(compare(Comparator::Eq, &s.var, Expr::Var(a.var)));
                    }
                }
                let cols = c.map[&subject].clone();
                c.map.insert(i, cols);
                Ok(c)
            }
            Op::Discard { subject, minus } => {
                let mut c = self.context(i, &[subject], c)?;
                let s = c.map[&subject][0].var.clone();
                let mc = self.context(i, &[minus], Ctx::default())?;
                let m = mc.map[&minus][0].var.clone();
                let sub = SelectQuery {
                    projection: vec![Projection::Alias { source: m, var: s }],
                    ..select(vec![], mc.elements)
                };
                c.elements.push(Element::Minus(GroupPattern { elements: vec![Element::SubQuery(Box::new(sub))] }));
                let cols = c.map[&subject].clone();
                c.map.insert(i, cols);
                Ok(c)
            }
            Op::Union { refs } => match union_kind(self.q, self.schema, i) {
                Some(UnionKind::Horizontal) => {
                    let mut c = self.context(i, &refs, c)?;
                    let cols = refs.iter().map(|r| c.map[r][0].clone()).collect();
                    c.map.insert(i, cols);
                    Ok(c)
                }
                Some(UnionKind::Vertical) => {
                    let out = self.fresh(&format!("{}_union", self.first_location_name(refs[0])));
                    let mut branches = Vec::new();
                    let mut loc = None;
                    for &r in &refs {
                        let bc = self.context(i, &[r], Ctx::default())?;
                        let col = bc.map[&r][0].clone();
                        loc = col.loc.clone();
                        let sub = SelectQuery {
                            projection: vec![Projection::Alias { source: col.var, var: out.clone() }],
                            ..select(vec![], bc.elements)
                        };
                        branches.push(GroupPattern { elements: vec![Element::SubQuery(Box::new(sub))] });
                    }
                    let mut c = c;
                    c.elements.push(Element::Union(branches));
                    let row = loc.as_ref().filter(|l| self.schema.is_key(l)).map(|_| out.clone());
                    c.map.insert(i, vec![Col { var: out, loc, row }]);
                    Ok(c)
                }
                _ => Err(self.unsupported(i, "UNION arguments match no supported variant")),
            },
            Op::Aggregate { .. } | Op::Group { .. } | Op::Sort { .. } => {
                unreachable!("full patterns are built by `full`")
            }
        }
    }

    fn first_location_name(&self, step: StepIndex) -> String {
        crate::qdmr::location(self.q, self.schema, step).map_or_else(|| "value".to_string(), |c| c.column)
    }

    fn location(&self, step: StepIndex, g: &Grounding) -> Result<ColumnRef, TranspileError> {
        grounding_location(self.schema, g).ok_or_else(|| self.unsupported(step, "value without a source column"))
    }

    /// Realizes a grounding on its own: the SELECT operator.
    fn ground(&mut self, step: StepIndex, g: &Grounding, c: &mut Ctx) -> Result<Col, TranspileError> {
        let loc = self.location(step, g)?;
        let key = self.key(step, &loc.table)?;
        let row = self.fresh(&key.column);
        let col = if loc == key {
            c.elements.push(triple(&row, column_arc(&key.table, &key.column), &row));
            Col { var: row.clone(), loc: Some(loc), row: Some(row) }
        } else {
            let var = self.fresh(&loc.column);
            c.elements.push(triple(&row, column_arc(&loc.table, &loc.column), &var));
            Col { var, loc: Some(loc), row: Some(row) }
        };
        if let Grounding::Value(v) = g {
            c.elements.push(compare(Comparator::Eq, &col.var, Expr::Literal(v.value.clone())));
        }
        Ok(col)
    }

    /// PROJECT: the grounding's values related to `start`.
    fn project(&mut self, step: StepIndex, start: &Col, g: &Grounding, c: &mut Ctx) -> Result<Col, TranspileError> {
        let target = self.location(step, g)?;
        let col = self.walk(step, start, &target, c)?;
        if let Grounding::Value(v) = g {
            c.elements.push(compare(Comparator::Eq, &col.var, Expr::Literal(v.value.clone())));
        }
        Ok(col)
    }

    /// Follows the join path from `start` to `target`, adding triples.
    fn walk(&mut self, step: StepIndex, start: &Col, target: &ColumnRef, c: &mut Ctx) -> Result<Col, TranspileError> {
        let Some(from) = start.loc.clone() else {
            return Err(self.unsupported(step, "computed values cannot be joined to the database"));
        };
        if &from == target {
            return Ok(start.clone());
        }
        let path = usable_path(&self.graph, self.schema, &from, target)?;
        let mut row = start.row.clone();
        let mut val = Some(start.var.clone());
        for hop in &path.hops {
            match hop.kind {
                HopKind::ColumnToKey => {
                    let r = self.row_of(step, &hop.from, &row, &val, c)?;
                    row = Some(r.clone());
                    val = Some(r);
                }
                HopKind::KeyToColumn => {
                    row = val.clone().or(row);
                    val = None;
                }
                HopKind::FkForward => {
                    let r = self.row_of(step, &hop.from, &row, &val, c)?;
                    let n = self.fresh(&hop.to.column);
                    c.elements.push(triple(
                        &r,
                        fk_arc(&hop.from.table, &hop.from.column, &hop.to.table, &hop.to.column),
                        &n,
                    ));
                    row = Some(n.clone());
                    val = Some(n);
                }
                HopKind::FkBackward => {
                    let node = val.clone().or(row.clone()).expect("key nodes are bound");
                    let key = self.key(step, &hop.to.table)?;
                    let r = self.fresh(&key.column);
                    c.elements.push(triple(
                        &r,
                        fk_arc(&hop.to.table, &hop.to.column, &hop.from.table, &hop.from.column),
                        &node,
                    ));
                    val = (hop.to == key).then(|| r.clone());
                    row = Some(r);
                }
            }
        }
        if self.schema.is_key(target) {
            let r = val.or(row).expect("key nodes are bound");
            c.elements.push(triple(&r, column_arc(&target.table, &target.column), &r));
            return Ok(Col { var: r.clone(), loc: Some(target.clone()), row: Some(r) });
        }
        let var = match val {
            Some(v) => v,
            None => {
                let r = row.clone().expect("pending values have a row");
                let v = self.fresh(&target.column);
                c.elements.push(triple(&r, column_arc(&target.table, &target.column), &v));
                v
            }
        };
        Ok(Col { var, loc: Some(target.clone()), row })
    }

    /// The row node holding a column value, introducing one when the value
    /// was computed away from its row.
    fn row_of(
        &mut self,
        step: StepIndex,
        at: &ColumnRef,
        row: &Option<String>,
        val: &Option<String>,
        c: &mut Ctx,
    ) -> Result<String, TranspileError> {
        if let Some(r) = row {
            return Ok(r.clone());
        }
        let v = val.clone().expect("a value or a row is always bound");
        let key = self.key(step, &at.table)?;
        let r = self.fresh(&key.column);
        c.elements.push(triple(&r, column_arc(&at.table, &at.column), &v));
        Ok(r)
    }
}
