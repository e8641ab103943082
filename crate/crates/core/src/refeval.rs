//! Reference interpreter: evaluates a grounded QDMR directly over table
//! rows with nested loops.
//!
//! It follows the same step semantics as the translator (steps share the
//! bindings of their arguments within one scope, full operators start a new
//! scope from their projected columns) but never builds triples or queries:
//! every operator is applied eagerly to a bag of bindings.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::joinpath::{usable_path, HopKind, NoJoinPath, SchemaGraph};
use crate::qdmr::{
    grounding_location, union_kind, AggregateSpec, Aggregator, CompareValue, Direction, GroundedQdmr, Grounding, Op,
    StepIndex, UnionKind,
};
use crate::result::{Provenance, ResultColumn, ResultTable, SortMeta};
use crate::schema::{ColumnRef, Schema, TableData};
use crate::value::{round_to, Comparator, Value};

const MAX_CONTEXT_TRIES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefEvalError {
    #[error(transparent)]
    NoJoinPath(#[from] NoJoinPath),
    #[error("step #{step}: unsupported shape: {message}")]
    UnsupportedShape { step: StepIndex, message: String },
}

/// A bound item: a table row or a plain value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Item {
    Row { table: usize, row: usize },
    Lit(Value),
}

type Env = Vec<Option<Item>>;

#[derive(Debug, Clone)]
struct RCol {
    slot: usize,
    loc: Option<ColumnRef>,
    /// Slot of the row the value was read from, while in scope.
    row: Option<usize>,
    prov: Provenance,
}

type StepSlots = BTreeMap<StepIndex, Vec<RCol>>;

/// A bag of bindings together with the steps they realize.
#[derive(Debug, Clone)]
struct Scope {
    envs: Vec<Env>,
    map: StepSlots,
}

impl Scope {
    /// The scope with one empty binding.
    fn unit() -> Scope {
        Scope { envs: vec![Vec::new()], map: StepSlots::new() }
    }
}

fn get(env: &Env, slot: usize) -> Option<&Item> {
    env.get(slot).and_then(Option::as_ref)
}

fn bind(env: &Env, slot: usize, item: Item) -> Option<Env> {
    match get(env, slot) {
        Some(existing) => (*existing == item).then(|| env.clone()),
        None => {
            let mut e = env.clone();
            if e.len() <= slot {
                e.resize(slot + 1, None);
            }
            e[slot] = Some(item);
            Some(e)
        }
    }
}

/// Bindings of both sides that agree on every slot bound in both.
fn join(left: &[Env], right: &[Env]) -> Vec<Env> {
    let mut out = Vec::new();
    for l in left {
        'r: for r in right {
            let mut e = l.clone();
            for (slot, item) in r.iter().enumerate() {
                let Some(item) = item else { continue };
                match get(&e, slot) {
                    Some(x) if x != item => continue 'r,
                    Some(_) => {}
                    None => e = bind(&e, slot, item.clone()).expect("unbound"),
                }
            }
            out.push(e);
        }
    }
    out
}

/// Evaluates the query and returns the output step's columns.
pub fn refeval(q: &GroundedQdmr, schema: &Schema, data: &TableData) -> Result<ResultTable, RefEvalError> {
    let mut ev = Interp { q, schema, data, graph: SchemaGraph::new(schema), next: 0 };
    let out = q.output();
    let (envs, cols, sort) = if ev.makes_full(out) {
        let (scope, sort) = ev.full(out, Scope::unit())?;
        let cols = scope.map[&out].clone();
        (scope.envs, cols, sort)
    } else {
        let scope = ev.context(out, &[out], Scope::unit())?;
        let cols = scope.map[&out].clone();
        (scope.envs, cols, None)
    };
    let columns = cols
        .iter()
        .map(|c| {
            let name = match &c.prov {
                Provenance::Column(loc) => loc.column.clone(),
                Provenance::Aggregate { op, .. } => op.name().to_string(),
                Provenance::Unknown => "value".to_string(),
            };
            ResultColumn::new(name, c.prov.clone())
        })
        .collect();
    let rows = envs.iter().map(|e| cols.iter().map(|c| get(e, c.slot).map(|i| ev.value(i))).collect()).collect();
    let mut table = ResultTable::new(columns, rows);
    if let Some((keys, descending)) = sort {
        table.sort_meta = Some(SortMeta { keys, descending });
    }
    Ok(table)
}

struct Interp<'a> {
    q: &'a GroundedQdmr,
    schema: &'a Schema,
    data: &'a TableData,
    graph: SchemaGraph,
    next: usize,
}

type SortKeys = Option<(Vec<Option<Value>>, bool)>;

impl Interp<'_> {
    fn unsupported(&self, step: StepIndex, message: impl Into<String>) -> RefEvalError {
        RefEvalError::UnsupportedShape { step, message: message.into() }
    }

    fn slot(&mut self) -> usize {
        self.next += 1;
        self.next - 1
    }

    fn table_index(&self, name: &str) -> usize {
        self.schema.table_index(name).expect("grounded table")
    }

    fn column_index(&self, c: &ColumnRef) -> usize {
        self.schema.tables[self.table_index(&c.table)].column_index(&c.column).expect("grounded column")
    }

    fn rows(&self, table: usize) -> &[Vec<Option<Value>>] {
        self.data.rows(&self.schema.tables[table].name)
    }

    fn cell(&self, table: usize, row: usize, col: usize) -> Option<&Value> {
        self.rows(table)[row][col].as_ref()
    }

    fn key_value(&self, table: usize, row: usize) -> &Value {
        let k = self.schema.tables[table].key_index().expect("keyed table");
        self.cell(table, row, k).expect("keys are not null")
    }

    /// The value an item stands for in comparisons and output.
    fn value(&self, item: &Item) -> Value {
        match item {
            Item::Row { table, row } => self.key_value(*table, *row).clone(),
            Item::Lit(v) => v.clone(),
        }
    }

    fn is_key(&self, c: &ColumnRef) -> bool {
        self.schema.is_key(c)
    }

    fn makes_full(&self, i: StepIndex) -> bool {
        let op = &self.q.step(i).op;
        op.distinct()
            || match op {
                Op::Aggregate { aggregator: AggregateSpec::Op(_), .. }
                | Op::Group { aggregator: AggregateSpec::Op(_), .. }
                | Op::Sort { .. } => true,
                Op::Union { .. } => matches!(
                    union_kind(self.q, self.schema, i),
                    Some(UnionKind::AfterGroup | UnionKind::Aggregators { .. })
                ),
                _ => false,
            }
    }

    fn context(&mut self, step: StepIndex, indices: &[StepIndex], mut s: Scope) -> Result<Scope, RefEvalError> {
        for _ in 0..MAX_CONTEXT_TRIES {
            if indices.iter().all(|i| s.map.contains_key(i)) {
                break;
            }
            for &i in indices {
                if !s.map.contains_key(&i) {
                    s = self.add(i, s)?;
                }
            }
        }
        if indices.iter().all(|i| s.map.contains_key(i)) {
            Ok(s)
        } else {
            Err(self.unsupported(step, "arguments cannot share one pattern"))
        }
    }

    fn add(&mut self, i: StepIndex, mut s: Scope) -> Result<Scope, RefEvalError> {
        if !self.makes_full(i) {
            return self.inner(i, s);
        }
        let deps = self.q.dependencies(i);
        if s.map.keys().all(|k| deps.contains(k)) {
            Ok(self.full(i, s)?.0)
        } else {
            let (sub, _) = self.full(i, Scope::unit())?;
            s.envs = join(&s.envs, &sub.envs);
            for (k, v) in sub.map {
                s.map.entry(k).or_insert(v);
            }
            Ok(s)
        }
    }

    /// Keeps only the given columns; row slots go out of scope.
    fn project(&self, envs: &[Env], cols: &[RCol]) -> Vec<Env> {
        envs.iter()
            .map(|e| {
                let mut out = Env::new();
                for c in cols {
                    if let Some(item) = get(e, c.slot) {
                        out = bind(&out, c.slot, item.clone()).expect("fresh env");
                    }
                }
                out
            })
            .collect()
    }

    fn scoped(cols: &[RCol]) -> Vec<RCol> {
        cols.iter().map(|c| RCol { row: c.row.filter(|r| *r == c.slot), ..c.clone() }).collect()
    }

    fn aggregate(&self, op: Aggregator, items: &[&Item]) -> Option<Value> {
        let values: Vec<Value> = items.iter().map(|i| self.value(i)).collect();
        match op {
            Aggregator::Count => Some(Value::number(values.len() as f64)),
            Aggregator::Sum | Aggregator::Avg => {
                let mut total = 0.0;
                for v in &values {
                    total += v.as_number()?;
                }
                if op == Aggregator::Sum {
                    Some(Value::number(total))
                } else if values.is_empty() {
                    None
                } else {
                    Some(Value::number(round_to(total / values.len() as f64, 10)))
                }
            }
            Aggregator::Min => values.into_iter().min(),
            Aggregator::Max => values.into_iter().max(),
        }
    }

    /// Groups bindings by the given slots, in order of first appearance.
    fn groups<'e>(envs: &'e [Env], keys: &[usize]) -> Vec<(Vec<Option<Item>>, Vec<&'e Env>)> {
        let mut order: Vec<(Vec<Option<Item>>, Vec<&Env>)> = Vec::new();
        let mut index: HashMap<Vec<Option<Item>>, usize> = HashMap::new();
        for e in envs {
            let k: Vec<Option<Item>> = keys.iter().map(|s| get(e, *s).cloned()).collect();
            match index.get(&k) {
                Some(&g) => order[g].1.push(e),
                None => {
                    index.insert(k.clone(), order.len());
                    order.push((k, vec![e]));
                }
            }
        }
        if keys.is_empty() && order.is_empty() {
            order.push((vec![], vec![]));
        }
        order
    }

    fn computed(&mut self, op: Aggregator, of: &RCol) -> RCol {
        RCol { slot: self.slot(), loc: None, row: None, prov: Provenance::Aggregate { op, of: of.loc.clone() } }
    }

    /// Aggregates `specs` (operator, argument slot, output slot) per group.
    fn grouped(&self, envs: &[Env], keys: &[usize], specs: &[(Aggregator, usize, usize)]) -> Vec<Env> {
        Self::groups(envs, keys)
            .into_iter()
            .map(|(k, members)| {
                let mut e = Env::new();
                for (slot, item) in keys.iter().zip(k) {
                    if let Some(item) = item {
                        e = bind(&e, *slot, item).expect("fresh");
                    }
                }
                for &(op, arg, out) in specs {
                    let items: Vec<&Item> = members.iter().filter_map(|m| get(m, arg)).collect();
                    if let Some(v) = self.aggregate(op, &items) {
                        e = bind(&e, out, Item::Lit(v)).expect("fresh");
                    }
                }
                e
            })
            .collect()
    }

    fn full(&mut self, i: StepIndex, s: Scope) -> Result<(Scope, SortKeys), RefEvalError> {
        let op = self.q.step(i).op.clone();
        if op.distinct() {
            let s = self.inner(i, s)?;
            let cols = Self::scoped(&s.map[&i]);
            let mut seen = Vec::new();
            for e in self.project(&s.envs, &cols) {
                if !seen.contains(&e) {
                    seen.push(e);
                }
            }
            return Ok((Scope { envs: seen, map: BTreeMap::from([(i, cols)]) }, None));
        }
        match op {
            Op::Aggregate { aggregator: AggregateSpec::Op(agg), subject } => {
                let s = self.context(i, &[subject], s)?;
                let subj = s.map[&subject][0].clone();
                let col = self.computed(agg, &subj);
                let envs = self.grouped(&s.envs, &[], &[(agg, subj.slot, col.slot)]);
                Ok((Scope { envs, map: BTreeMap::from([(i, vec![col])]) }, None))
            }
            Op::Group { aggregator: AggregateSpec::Op(agg), subject, attr } => {
                let s = self.context(i, &[subject, attr], s)?;
                let keys = Self::scoped(&s.map[&attr]);
                let subj = s.map[&subject][0].clone();
                let col = self.computed(agg, &subj);
                let slots: Vec<usize> = keys.iter().map(|k| k.slot).collect();
                let envs = self.grouped(&s.envs, &slots, &[(agg, subj.slot, col.slot)]);
                Ok((Scope { envs, map: BTreeMap::from([(attr, keys), (i, vec![col])]) }, None))
            }
            Op::Sort { subject, attr, direction } => {
                let s = self.context(i, &[subject, attr], s)?;
                let cols = Self::scoped(&s.map[&subject]);
                let key = s.map[&attr][0].slot;
                let mut keyed: Vec<(Option<Value>, Env)> =
                    s.envs.iter().map(|e| (get(e, key).map(|it| self.value(it)), e.clone())).collect();
                let descending = direction == Direction::Desc;
                keyed.sort_by(|a, b| if descending { b.0.cmp(&a.0) } else { a.0.cmp(&b.0) });
                let keys = keyed.iter().map(|(k, _)| k.clone()).collect();
                let envs: Vec<Env> = keyed.into_iter().map(|(_, e)| e).collect();
                let envs = self.project(&envs, &cols);
                let map = BTreeMap::from([(subject, cols.clone()), (i, cols)]);
                Ok((Scope { envs, map }, Some((keys, descending))))
            }
            Op::Union { refs } => match union_kind(self.q, self.schema, i) {
                Some(UnionKind::AfterGroup) => Ok((self.union_after_group(i, &refs, s)?, None)),
                Some(UnionKind::Aggregators { shared }) => Ok((self.union_aggregators(i, &refs, shared, s)?, None)),
                _ => Err(self.unsupported(i, "union is not a full pattern")),
            },
            _ => Err(self.unsupported(i, "operator is not a full pattern")),
        }
    }

    fn union_after_group(&mut self, i: StepIndex, refs: &[StepIndex], s: Scope) -> Result<Scope, RefEvalError> {
        let (subject, attr) = refs
            .iter()
            .find_map(|r| match self.q.step(*r).op {
                Op::Group { subject, attr, .. } => Some((subject, attr)),
                _ => None,
            })
            .expect("union after GROUP");
        let s = self.context(i, &[subject, attr], s)?;
        let keys = Self::scoped(&s.map[&attr]);
        let subj = s.map[&subject][0].clone();
        let mut map = BTreeMap::from([(attr, keys.clone())]);
        let mut specs = Vec::new();
        let mut out = Vec::new();
        for &r in refs {
            if r == attr {
                out.extend(keys.iter().cloned());
                continue;
            }
            let Op::Group { aggregator: AggregateSpec::Op(agg), .. } = self.q.step(r).op else {
                unreachable!("union after GROUP")
            };
            let col = self.computed(agg, &subj);
            specs.push((agg, subj.slot, col.slot));
            map.insert(r, vec![col.clone()]);
            out.push(col);
        }
        let slots: Vec<usize> = keys.iter().map(|k| k.slot).collect();
        let envs = self.grouped(&s.envs, &slots, &specs);
        map.insert(i, out);
        Ok(Scope { envs, map })
    }

    fn union_aggregators(
        &mut self,
        i: StepIndex,
        refs: &[StepIndex],
        shared: bool,
        s: Scope,
    ) -> Result<Scope, RefEvalError> {
        let parts: Vec<(Aggregator, StepIndex)> = refs
            .iter()
            .map(|r| match self.q.step(*r).op {
                Op::Aggregate { aggregator: AggregateSpec::Op(agg), subject } => (agg, subject),
                _ => unreachable!("union of aggregates"),
            })
            .collect();
        let mut map = StepSlots::new();
        let mut out = Vec::new();
        let envs = if shared {
            let s = self.context(i, &[parts[0].1], s)?;
            let subj = s.map[&parts[0].1][0].clone();
            let mut specs = Vec::new();
            for (&r, (agg, _)) in refs.iter().zip(&parts) {
                let col = self.computed(*agg, &subj);
                specs.push((*agg, subj.slot, col.slot));
                map.insert(r, vec![col.clone()]);
                out.push(col);
            }
            self.grouped(&s.envs, &[], &specs)
        } else {
            let mut envs = vec![Env::new()];
            for (&r, (agg, subject)) in refs.iter().zip(&parts) {
                let sub = self.context(i, &[*subject], Scope::unit())?;
                let subj = sub.map[subject][0].clone();
                let col = self.computed(*agg, &subj);
                let one = self.grouped(&sub.envs, &[], &[(*agg, subj.slot, col.slot)]);
                envs = join(&envs, &one);
                map.insert(r, vec![col.clone()]);
                out.push(col);
            }
            envs
        };
        map.insert(i, out);
        Ok(Scope { envs, map })
    }

    fn inner(&mut self, i: StepIndex, s: Scope) -> Result<Scope, RefEvalError> {
        let op = self.q.step(i).op.clone();
        match op {
            Op::Select { subject, .. } => {
                let mut s = s;
                let col = self.ground(i, &subject, &mut s)?;
                s.map.insert(i, vec![col]);
                Ok(s)
            }
            Op::Project { projection, subject, .. } => {
                let mut s = self.context(i, &[subject], s)?;
                let start = s.map[&subject].clone();
                let cols = match projection {
                    None => start,
                    Some(g) => vec![self.project_to(i, &start[0], &g, &mut s)?],
                };
                s.map.insert(i, cols);
                Ok(s)
            }
            Op::Aggregate { aggregator: AggregateSpec::Grounded(g), subject }
            | Op::Group { aggregator: AggregateSpec::Grounded(g), attr: subject, .. } => {
                let mut s = self.context(i, &[subject], s)?;
                let start = s.map[&subject][0].clone();
                let col = self.project_to(i, &start, &g, &mut s)?;
                s.map.insert(i, vec![col]);
                Ok(s)
            }
            Op::Comparative { subject, attr, condition, .. } => {
                let mut idx = vec![subject, attr];
                if let CompareValue::Ref(r) = condition.value {
                    idx.push(r);
                }
                let mut s = self.context(i, &idx, s)?;
                let a = s.map[&attr][0].clone();
                let x = match &condition.column {
                    Some(col) if Some(col) != a.loc.as_ref() => self.walk(i, &a, col, &mut s)?,
                    _ => a,
                };
                match (condition.comparator, &condition.value) {
                    (Some(Comparator::Like), CompareValue::Ground(Grounding::Value(v))) => {
                        self.keep_literal(&mut s, x.slot, Comparator::Like, &v.value);
                    }
                    (Some(Comparator::Like), _) => return Err(self.unsupported(i, "like needs a literal pattern")),
                    (op, CompareValue::Ground(Grounding::Value(v))) => {
                        self.keep_literal(&mut s, x.slot, op.unwrap_or(Comparator::Eq), &v.value);
                    }
                    (op, CompareValue::Ref(r)) => {
                        let rhs = s.map[r][0].slot;
                        self.keep_slots(&mut s, x.slot, op.unwrap_or(Comparator::Eq), rhs);
                    }
                    (None, CompareValue::Ground(g)) => {
                        let target = self.location(i, g)?;
                        self.walk(i, &x, &target, &mut s)?;
                    }
                    (Some(_), CompareValue::Ground(_)) => {
                        return Err(self.unsupported(i, "comparison against a table or column"));
                    }
                }
                let cols = s.map[&subject].clone();
                s.map.insert(i, cols);
                Ok(s)
            }
            Op::Superlative { extremum, subject, attr } => {
                let mut s = self.context(i, &[subject, attr], s)?;
                let a = s.map[&attr][0].slot;
                let all = self.context(i, &[attr], Scope::unit())?;
                let all_slot = all.map[&attr][0].slot;
                let items: Vec<&Item> = all.envs.iter().filter_map(|e| get(e, all_slot)).collect();
                let best = self.aggregate(extremum.aggregator(), &items);
                match best {
                    Some(best) => self.keep_literal(&mut s, a, Comparator::Eq, &best),
                    None => s.envs.clear(),
                }
                let cols = s.map[&subject].clone();
                s.map.insert(i, cols);
                Ok(s)
            }
            Op::Intersect { subject, attrs } => {
                let mut s = self.context(i, &[subject, attrs[0], attrs[1]], s)?;
                let subj = s.map[&subject][0].clone();
                for a in attrs {
                    let a = s.map[&a][0].clone();
                    if a.slot != subj.slot && a.loc.is_some() && a.loc == subj.loc {
                        self.keep_slots(&mut s, subj.slot, Comparator::Eq, a.slot);
                    }
                }
                let cols = s.map[&subject].clone();
                s.map.insert(i, cols);
                Ok(s)
            }
            Op::Discard { subject, minus } => {
                let mut s = self.context(i, &[subject], s)?;
                let keep = s.map[&subject][0].slot;
                let m = self.context(i, &[minus], Scope::unit())?;
                let ms = m.map[&minus][0].slot;
                let removed: Vec<&Item> = m.envs.iter().filter_map(|e| get(e, ms)).collect();
                s.envs.retain(|e| get(e, keep).is_none_or(|item| !removed.contains(&item)));
                let cols = s.map[&subject].clone();
                s.map.insert(i, cols);
                Ok(s)
            }
            Op::Union { refs } => match union_kind(self.q, self.schema, i) {
                Some(UnionKind::Horizontal) => {
                    let mut s = self.context(i, &refs, s)?;
                    let cols = refs.iter().map(|r| s.map[r][0].clone()).collect();
                    s.map.insert(i, cols);
                    Ok(s)
                }
                Some(UnionKind::Vertical) => {
                    let out = self.slot();
                    let mut bag = Vec::new();
                    let mut first: Option<RCol> = None;
                    for &r in &refs {
                        let b = self.context(i, &[r], Scope::unit())?;
                        let col = b.map[&r][0].clone();
                        for e in &b.envs {
                            let mut ne = Env::new();
                            if let Some(item) = get(e, col.slot) {
                                ne = bind(&ne, out, item.clone()).expect("fresh");
                            }
                            bag.push(ne);
                        }
                        first.get_or_insert(col);
                    }
                    let first = first.expect("union has arguments");
                    let row = first.loc.as_ref().filter(|l| self.is_key(l)).map(|_| out);
                    let mut s = s;
                    s.envs = join(&s.envs, &bag);
                    s.map.insert(i, vec![RCol { slot: out, loc: first.loc.clone(), row, prov: first.prov }]);
                    Ok(s)
                }
                _ => Err(self.unsupported(i, "UNION arguments match no supported variant")),
            },
            Op::Aggregate { .. } | Op::Group { .. } | Op::Sort { .. } => unreachable!("full operators"),
        }
    }

    fn keep_literal(&self, s: &mut Scope, slot: usize, op: Comparator, rhs: &Value) {
        s.envs.retain(|e| get(e, slot).is_some_and(|item| op.holds(&self.value(item), rhs)));
    }

    fn keep_slots(&self, s: &mut Scope, lhs: usize, op: Comparator, rhs: usize) {
        s.envs.retain(|e| match (get(e, lhs), get(e, rhs)) {
            (Some(a), Some(b)) => op.holds(&self.value(a), &self.value(b)),
            _ => false,
        });
    }

    fn location(&self, step: StepIndex, g: &Grounding) -> Result<ColumnRef, RefEvalError> {
        grounding_location(self.schema, g).ok_or_else(|| self.unsupported(step, "value without a source column"))
    }

    fn located(&self, slot: usize, loc: &ColumnRef, row: Option<usize>) -> RCol {
        RCol { slot, loc: Some(loc.clone()), row, prov: Provenance::Column(loc.clone()) }
    }

    /// Every row of a table bound to `slot`.
    fn scan(&self, s: &mut Scope, table: usize, slot: usize) {
        let n = self.rows(table).len();
        let mut out = Vec::new();
        for e in &s.envs {
            for row in 0..n {
                if let Some(ne) = bind(e, slot, Item::Row { table, row }) {
                    out.push(ne);
                }
            }
        }
        s.envs = out;
    }

    /// Binds `val` to a non-null cell of the row in `row_slot`.
    fn read(&self, s: &mut Scope, row_slot: usize, col: &ColumnRef, val: usize) {
        let ci = self.column_index(col);
        let mut out = Vec::new();
        for e in &s.envs {
            let Some(Item::Row { table, row }) = get(e, row_slot) else { continue };
            if let Some(v) = self.cell(*table, *row, ci) {
                if let Some(ne) = bind(e, val, Item::Lit(v.clone())) {
                    out.push(ne);
                }
            }
        }
        s.envs = out;
    }

    /// Binds `row_slot` to every row whose cell equals the value in `val`.
    fn rows_holding(&self, s: &mut Scope, col: &ColumnRef, val: usize, row_slot: usize) {
        let table = self.table_index(&col.table);
        let ci = self.column_index(col);
        let mut out = Vec::new();
        for e in &s.envs {
            let Some(Item::Lit(v)) = get(e, val) else { continue };
            for row in 0..self.rows(table).len() {
                if self.cell(table, row, ci) == Some(v) {
                    if let Some(ne) = bind(e, row_slot, Item::Row { table, row }) {
                        out.push(ne);
                    }
                }
            }
        }
        s.envs = out;
    }

    /// Follows a foreign key from the row in `row_slot` to the referenced row.
    fn follow(&self, s: &mut Scope, src: &ColumnRef, tgt: &ColumnRef, row_slot: usize, out_slot: usize) {
        let ci = self.column_index(src);
        let tt = self.table_index(&tgt.table);
        let mut out = Vec::new();
        for e in &s.envs {
            let Some(Item::Row { table, row }) = get(e, row_slot) else { continue };
            let Some(v) = self.cell(*table, *row, ci) else { continue };
            for r in 0..self.rows(tt).len() {
                if self.key_value(tt, r) == v {
                    if let Some(ne) = bind(e, out_slot, Item::Row { table: tt, row: r }) {
                        out.push(ne);
                    }
                }
            }
        }
        s.envs = out;
    }

    /// Binds `out_slot` to every row whose foreign key references the row
    /// in `node_slot`.
    fn referencing(&self, s: &mut Scope, src: &ColumnRef, node_slot: usize, out_slot: usize) {
        let st = self.table_index(&src.table);
        let ci = self.column_index(src);
        let mut out = Vec::new();
        for e in &s.envs {
            let Some(Item::Row { table, row }) = get(e, node_slot) else { continue };
            let key = self.key_value(*table, *row);
            for r in 0..self.rows(st).len() {
                if self.cell(st, r, ci) == Some(key) {
                    if let Some(ne) = bind(e, out_slot, Item::Row { table: st, row: r }) {
                        out.push(ne);
                    }
                }
            }
        }
        s.envs = out;
    }

    fn ground(&mut self, step: StepIndex, g: &Grounding, s: &mut Scope) -> Result<RCol, RefEvalError> {
        let loc = self.location(step, g)?;
        let table = self.table_index(&loc.table);
        let row = self.slot();
        self.scan(s, table, row);
        let col = if self.is_key(&loc) {
            self.located(row, &loc, Some(row))
        } else {
            let val = self.slot();
            self.read(s, row, &loc, val);
            self.located(val, &loc, Some(row))
        };
        if let Grounding::Value(v) = g {
            self.keep_literal(s, col.slot, Comparator::Eq, &v.value);
        }
        Ok(col)
    }

    fn project_to(
        &mut self,
        step: StepIndex,
        start: &RCol,
        g: &Grounding,
        s: &mut Scope,
    ) -> Result<RCol, RefEvalError> {
        let target = self.location(step, g)?;
        let col = self.walk(step, start, &target, s)?;
        if let Grounding::Value(v) = g {
            self.keep_literal(s, col.slot, Comparator::Eq, &v.value);
        }
        Ok(col)
    }

    fn walk(&mut self, step: StepIndex, start: &RCol, target: &ColumnRef, s: &mut Scope) -> Result<RCol, RefEvalError> {
        let Some(from) = start.loc.clone() else {
            return Err(self.unsupported(step, "computed values cannot be joined to the database"));
        };
        if &from == target {
            return Ok(start.clone());
        }
        let path = usable_path(&self.graph, self.schema, &from, target)?;
        let mut row = start.row;
        let mut val = Some(start.slot);
        for hop in &path.hops {
            match hop.kind {
                HopKind::ColumnToKey => {
                    let r = self.row_holding(s, &hop.from, row, val);
                    row = Some(r);
                    val = Some(r);
                }
                HopKind::KeyToColumn => {
                    row = val.or(row);
                    val = None;
                }
                HopKind::FkForward => {
                    let r = self.row_holding(s, &hop.from, row, val);
                    let n = self.slot();
                    self.follow(s, &hop.from, &hop.to, r, n);
                    row = Some(n);
                    val = Some(n);
                }
                HopKind::FkBackward => {
                    let node = val.or(row).expect("row bound");
                    let r = self.slot();
                    self.referencing(s, &hop.to, node, r);
                    val = self.is_key(&hop.to).then_some(r);
                    row = Some(r);
                }
            }
        }
        if self.is_key(target) {
            let r = val.or(row).expect("row bound");
            return Ok(self.located(r, target, Some(r)));
        }
        let v = match val {
            Some(v) => v,
            None => {
                let v = self.slot();
                self.read(s, row.expect("row bound"), target, v);
                v
            }
        };
        Ok(self.located(v, target, row))
    }

    fn row_holding(&mut self, s: &mut Scope, at: &ColumnRef, row: Option<usize>, val: Option<usize>) -> usize {
        if let Some(r) = row {
            return r;
        }
        let r = self.slot();
        self.rows_holding(s, at, val.expect("value bound"), r);
        r
    }
}
