//! Bag-semantics evaluation of the SPARQL subset over an [`RdfGraph`].
//!
//! Groups are evaluated left to right: runs of triple patterns form a basic
//! graph pattern matched by index probes in selectivity order; subqueries,
//! nested groups and unions are evaluated on their own and hash-joined;
//! `MINUS` applies in place; filters apply to the whole group.

use std::collections::{HashMap, HashSet};

use crate::qdmr::Aggregator;
use crate::rdf::RdfGraph;
use crate::result::{ResultColumn, ResultTable, SortMeta};
use crate::value::{round_to, Term, Value};

use super::{
    Element, Expr, GroupPattern, PatternTerm, Projection, SelectQuery, SparqlError, SparqlQuery, TriplePattern,
};

/// Order in which triple patterns of a basic graph pattern are matched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum JoinOrder {
    /// Most bound positions first, then fewest index matches.
    #[default]
    Greedy,
    /// As written.
    Written,
    /// Reverse of the written order.
    Reversed,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub join_order: JoinOrder,
}

type Row = Vec<Option<Term>>;

pub fn evaluate(query: &SparqlQuery, graph: &RdfGraph) -> Result<ResultTable, SparqlError> {
    evaluate_with(query, graph, EvalOptions::default())
}

pub fn evaluate_with(query: &SparqlQuery, graph: &RdfGraph, opts: EvalOptions) -> Result<ResultTable, SparqlError> {
    let mut names = Vec::new();
    collect_vars_query(&query.ast, &mut names);
    let mut vars = HashMap::new();
    for n in names {
        let next = vars.len();
        vars.entry(n).or_insert(next);
    }
    let ev = Evaluator { graph, vars, opts };
    let (rows, keys) = ev.select(&query.ast)?;
    let slots: Vec<usize> = query.ast.projection.iter().map(|p| ev.slot(p.var())).collect();
    let columns = query.output_columns.iter().map(|c| ResultColumn::new(c.var.clone(), c.provenance.clone())).collect();
    let cells =
        rows.into_iter().map(|r| slots.iter().map(|&s| r[s].as_ref().map(|t| t.value().clone())).collect()).collect();
    let mut table = ResultTable::new(columns, cells);
    if let Some(first) = query.ast.order_by.first() {
        table.sort_meta = Some(SortMeta { keys, descending: first.descending });
    }
    Ok(table)
}

struct Evaluator<'a> {
    graph: &'a RdfGraph,
    vars: HashMap<String, usize>,
    opts: EvalOptions,
}

impl Evaluator<'_> {
    fn slot(&self, v: &str) -> usize {
        self.vars[v]
    }

    fn empty_row(&self) -> Row {
        vec![None; self.vars.len()]
    }

    /// Rows of a query, holding only projected variables, plus the first
    /// ORDER BY key of each row.
    fn select(&self, q: &SelectQuery) -> Result<(Vec<Row>, Vec<Option<Value>>), SparqlError> {
        let solutions = self.group(&q.pattern)?;
        let mut rows = if q.is_aggregate() { self.aggregate(q, solutions)? } else { solutions };

        if !q.order_by.is_empty() {
            let keys: Vec<usize> = q.order_by.iter().map(|k| self.slot(&k.var)).collect();
            rows.sort_by(|a, b| {
                for (k, spec) in keys.iter().zip(&q.order_by) {
                    let ord = a[*k].as_ref().map(Term::value).cmp(&b[*k].as_ref().map(Term::value));
                    let ord = if spec.descending { ord.reverse() } else { ord };
                    if ord.is_ne() {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            });
        }
        let first_key = q.order_by.first().map(|k| self.slot(&k.var));

        let mut out = Vec::with_capacity(rows.len());
        let mut sort_keys = Vec::with_capacity(rows.len());
        let mut seen = HashSet::new();
        for r in rows {
            let mut p = self.empty_row();
            for item in &q.projection {
                let (dst, src) = match item {
                    Projection::Var(v) => (self.slot(v), self.slot(v)),
                    Projection::Alias { source, var } => (self.slot(var), self.slot(source)),
                    Projection::Aggregate { var, .. } => (self.slot(var), self.slot(var)),
                };
                p[dst] = r[src].clone();
            }
            if q.distinct {
                let key: Vec<Option<Term>> = q.projection.iter().map(|i| p[self.slot(i.var())].clone()).collect();
                if !seen.insert(key) {
                    continue;
                }
            }
            sort_keys.push(first_key.and_then(|k| r[k].as_ref().map(|t| t.value().clone())));
            out.push(p);
        }
        Ok((out, sort_keys))
    }

    fn aggregate(&self, q: &SelectQuery, solutions: Vec<Row>) -> Result<Vec<Row>, SparqlError> {
        let group_slots: Vec<usize> = q.group_by.iter().map(|v| self.slot(v)).collect();
        for item in &q.projection {
            let ok = match item {
                Projection::Var(v) => q.group_by.contains(v),
                Projection::Alias { source, .. } => q.group_by.contains(source),
                Projection::Aggregate { .. } => true,
            };
            if !ok {
                return Err(SparqlError::UnsupportedFeature(format!(
                    "projection of ungrouped variable ?{}",
                    item.var()
                )));
            }
        }
        let mut order: Vec<Vec<Option<Term>>> = Vec::new();
        let mut groups: HashMap<Vec<Option<Term>>, Vec<Row>> = HashMap::new();
        if group_slots.is_empty() {
            order.push(Vec::new());
            groups.insert(Vec::new(), solutions);
        } else {
            for r in solutions {
                let key: Vec<Option<Term>> = group_slots.iter().map(|&s| r[s].clone()).collect();
                groups
                    .entry(key.clone())
                    .or_insert_with(|| {
                        order.push(key);
                        Vec::new()
                    })
                    .push(r);
            }
        }
        let mut out = Vec::with_capacity(order.len());
        for key in order {
            let members = &groups[&key];
            let mut row = self.empty_row();
            for (s, v) in group_slots.iter().zip(key) {
                row[*s] = v;
            }
            for item in &q.projection {
                if let Projection::Aggregate { op, arg, var } = item {
                    let a = self.slot(arg);
                    let values: Vec<&Value> = members.iter().filter_map(|m| m[a].as_ref().map(Term::value)).collect();
                    row[self.slot(var)] = aggregate_values(*op, &values).map(Term::Literal);
                }
            }
            out.push(row);
        }
        Ok(out)
    }

    fn group(&self, g: &GroupPattern) -> Result<Vec<Row>, SparqlError> {
        let mut sols = vec![self.empty_row()];
        let mut filters = Vec::new();
        let mut i = 0;
        while i < g.elements.len() {
            match &g.elements[i] {
                Element::Triple(_) => {
                    let mut bgp = Vec::new();
                    while let Some(Element::Triple(t)) = g.elements.get(i) {
                        bgp.push(t);
                        i += 1;
                    }
                    sols = self.bgp(sols, &bgp);
                    continue;
                }
                Element::Filter(e) => filters.push(e),
                Element::SubQuery(q) => {
                    let (rows, _) = self.select(q)?;
                    sols = join(sols, rows);
                }
                Element::Group(inner) => {
                    let rows = self.group(inner)?;
                    sols = join(sols, rows);
                }
                Element::Union(branches) => {
                    let mut rows = Vec::new();
                    for b in branches {
                        rows.extend(self.group(b)?);
                    }
                    sols = join(sols, rows);
                }
                Element::Minus(inner) => {
                    let rows = self.group(inner)?;
                    sols = minus(sols, &rows);
                }
            }
            i += 1;
        }
        if !filters.is_empty() {
            sols.retain(|r| filters.iter().all(|f| self.filter(f, r)));
        }
        Ok(sols)
    }

    fn bgp(&self, mut sols: Vec<Row>, triples: &[&TriplePattern]) -> Vec<Row> {
        let mut remaining: Vec<&TriplePattern> = triples.to_vec();
        if self.opts.join_order == JoinOrder::Reversed {
            remaining.reverse();
        }
        while !remaining.is_empty() && !sols.is_empty() {
            let bound = always_bound(&sols);
            let pick = match self.opts.join_order {
                JoinOrder::Greedy => {
                    let score = |t: &TriplePattern| {
                        let b = |pt: &PatternTerm| match pt {
                            PatternTerm::Var(v) => bound.contains(&self.slot(v)),
                            PatternTerm::Literal(_) => true,
                        };
                        let nbound = b(&t.subject) as usize + b(&t.object) as usize;
                        (std::cmp::Reverse(nbound), self.graph.estimate(None, Some(&t.predicate), None))
                    };
                    (0..remaining.len()).min_by_key(|&i| score(remaining[i])).expect("non-empty")
                }
                JoinOrder::Written | JoinOrder::Reversed => 0,
            };
            let t = remaining.remove(pick);
            sols = self.extend(sols, t);
        }
        if !remaining.is_empty() {
            return Vec::new();
        }
        sols
    }

    fn extend(&self, sols: Vec<Row>, t: &TriplePattern) -> Vec<Row> {
        let pos = |pt: &PatternTerm| match pt {
            PatternTerm::Var(v) => Err(self.slot(v)),
            PatternTerm::Literal(l) => Ok(Term::Literal(l.clone())),
        };
        let (s, o) = (pos(&t.subject), pos(&t.object));
        let mut out = Vec::new();
        for row in sols {
            let fixed = |p: &Result<Term, usize>| match p {
                Ok(term) => Some(term.clone()),
                Err(slot) => row[*slot].clone(),
            };
            let (sv, ov) = (fixed(&s), fixed(&o));
            for m in self.graph.matching(sv.as_ref(), Some(&t.predicate), ov.as_ref()) {
                let mut r = row.clone();
                if let Err(slot) = s {
                    r[slot] = Some(m.subject.clone());
                }
                if let Err(slot) = o {
                    match &r[slot] {
                        Some(existing) if *existing != m.object => continue,
                        _ => r[slot] = Some(m.object.clone()),
                    }
                }
                out.push(r);
            }
        }
        out
    }

    fn filter(&self, e: &Expr, row: &Row) -> bool {
        match e {
            Expr::Compare(op, a, b) => match (self.operand(a, row), self.operand(b, row)) {
                (Some(x), Some(y)) => op.holds(&x, &y),
                _ => false,
            },
            Expr::Contains(v, needle) => {
                row[self.slot(v)].as_ref().is_some_and(|t| t.value().lexical().to_lowercase().contains(needle.as_str()))
            }
            Expr::Var(_) | Expr::Literal(_) => false,
        }
    }

    fn operand(&self, e: &Expr, row: &Row) -> Option<Value> {
        match e {
            Expr::Var(v) => row[self.slot(v)].as_ref().map(|t| t.value().clone()),
            Expr::Literal(l) => Some(l.clone()),
            _ => None,
        }
    }
}

/// Aggregates over the bound values of a group. `COUNT` and `SUM` of
/// nothing are 0; `AVG`, `MIN` and `MAX` of nothing are unbound, as is
/// `SUM`/`AVG` over non-numbers.
pub(crate) fn aggregate_values(op: Aggregator, values: &[&Value]) -> Option<Value> {
    let numbers = || values.iter().map(|v| v.as_number()).collect::<Option<Vec<f64>>>();
    match op {
        Aggregator::Count => Some(Value::number(values.len() as f64)),
        Aggregator::Sum => numbers().map(|ns| Value::number(ns.iter().sum())),
        Aggregator::Avg => {
            let ns = numbers()?;
            if ns.is_empty() {
                return None;
            }
            Some(Value::number(round_to(ns.iter().sum::<f64>() / ns.len() as f64, 10)))
        }
        Aggregator::Min => values.iter().min().map(|v| (*v).clone()),
        Aggregator::Max => values.iter().max().map(|v| (*v).clone()),
    }
}

/// Slots bound in every row.
fn always_bound(rows: &[Row]) -> HashSet<usize> {
    let Some(first) = rows.first() else { return HashSet::new() };
    (0..first.len()).filter(|&i| rows.iter().all(|r| r[i].is_some())).collect()
}

fn compatible(a: &Row, b: &Row) -> bool {
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    })
}

fn merge(a: &Row, b: &Row) -> Row {
    a.iter().zip(b).map(|(x, y)| x.clone().or_else(|| y.clone())).collect()
}

/// Bag join: a hash join on the variables bound on both sides in every row,
/// with a full compatibility check for the rest.
fn join(left: Vec<Row>, right: Vec<Row>) -> Vec<Row> {
    if left.is_empty() || right.is_empty() {
        return Vec::new();
    }
    let lb = always_bound(&left);
    let rb = always_bound(&right);
    let mut keys: Vec<usize> = lb.intersection(&rb).copied().collect();
    keys.sort_unstable();
    let key_of = |r: &Row| -> Vec<Term> { keys.iter().map(|&k| r[k].clone().expect("bound")).collect() };
    let mut table: HashMap<Vec<Term>, Vec<usize>> = HashMap::new();
    for (i, r) in right.iter().enumerate() {
        table.entry(key_of(r)).or_default().push(i);
    }
    let mut out = Vec::new();
    for l in &left {
        if let Some(ids) = table.get(&key_of(l)) {
            for &i in ids {
                if compatible(l, &right[i]) {
                    out.push(merge(l, &right[i]));
                }
            }
        }
    }
    out
}

/// Rows of `left` with no compatible row in `right` sharing a variable.
fn minus(left: Vec<Row>, right: &[Row]) -> Vec<Row> {
    left.into_iter()
        .filter(|l| {
            !right.iter().any(|r| {
                let shares = l.iter().zip(r).any(|(x, y)| x.is_some() && y.is_some());
                shares && compatible(l, r)
            })
        })
        .collect()
}

fn collect_vars_query(q: &SelectQuery, out: &mut Vec<String>) {
    for p in &q.projection {
        match p {
            Projection::Var(v) => out.push(v.clone()),
            Projection::Alias { source, var } => {
                out.push(source.clone());
                out.push(var.clone());
            }
            Projection::Aggregate { arg, var, .. } => {
                out.push(arg.clone());
                out.push(var.clone());
            }
        }
    }
    out.extend(q.group_by.iter().cloned());
    out.extend(q.order_by.iter().map(|k| k.var.clone()));
    collect_vars_group(&q.pattern, out);
}

fn collect_vars_group(g: &GroupPattern, out: &mut Vec<String>) {
    for e in &g.elements {
        match e {
            Element::Triple(t) => {
                for pt in [&t.subject, &t.object] {
                    if let PatternTerm::Var(v) = pt {
                        out.push(v.clone());
                    }
                }
            }
            Element::Filter(x) => collect_vars_expr(x, out),
            Element::SubQuery(q) => collect_vars_query(q, out),
            Element::Union(bs) => bs.iter().for_each(|b| collect_vars_group(b, out)),
            Element::Minus(m) | Element::Group(m) => collect_vars_group(m, out),
        }
    }
}

fn collect_vars_expr(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Var(v) | Expr::Contains(v, _) => out.push(v.clone()),
        Expr::Compare(_, a, b) => {
            collect_vars_expr(a, out);
            collect_vars_expr(b, out);
        }
        Expr::Literal(_) => {}
    }
}
