//! Grounded QDMR logical forms.
//!
//! A logical form is a list of operator steps `#1 .. #n`; arguments either
//! refer to earlier steps or are grounded in the database schema (a table,
//! a column, or a value). The last step is the query output.

mod analysis;
mod parse;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::ColumnRef;
use crate::value::{quote_string, Comparator, Datatype, Value};

pub use analysis::{arity, datatype, grounding_location, location, output_locations, union_kind, UnionKind};
pub use parse::parse_qdmr;
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

/// 1-based step number.
pub type StepIndex = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QdmrError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown schema entity `{name}`")]
    UnknownEntity { line: usize, name: String },
    #[error("line {line}: {op} expects {expected} arguments, got {got}")]
    BadArity { line: usize, op: &'static str, expected: &'static str, got: usize },
    #[error("step #{step} refers to #{target}, which is not an earlier step")]
    ForwardRef { step: StepIndex, target: StepIndex },
    #[error("line {line}: `{text}` is not a valid {datatype} value")]
    BadValue { line: usize, text: String, datatype: Datatype },
    #[error("step #{step}: {message}")]
    InvalidStep { step: StepIndex, message: String },
    #[error("step #{step} does not contribute to the output step")]
    Unreferenced { step: StepIndex },
    #[error("empty QDMR")]
    Empty,
}

/// A value grounding: a literal, optionally tagged with the column it was
/// taken from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValueRef {
    #[serde(with = "value_serde")]
    pub value: Value,
    pub source: Option<ColumnRef>,
}

impl ValueRef {
    pub fn literal(value: Value) -> Self {
        ValueRef { value, source: None }
    }

    pub fn datatype(&self) -> Datatype {
        self.value.datatype()
    }
}

mod value_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        lexical: String,
        datatype: Datatype,
    }

    pub fn serialize<S: Serializer>(v: &Value, s: S) -> Result<S::Ok, S::Error> {
        Repr { lexical: v.lexical(), datatype: v.datatype() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Value, D::Error> {
        let r = Repr::deserialize(d)?;
        Value::parse_as(r.datatype, &r.lexical)
            .ok_or_else(|| serde::de::Error::custom(format!("bad {} value `{}`", r.datatype, r.lexical)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grounding {
    Table(String),
    Column(ColumnRef),
    Value(ValueRef),
}

impl Grounding {
    pub fn column(table: &str, column: &str) -> Grounding {
        Grounding::Column(ColumnRef::new(table, column))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggregator {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl Aggregator {
    pub const ALL: [Aggregator; 5] =
        [Aggregator::Count, Aggregator::Sum, Aggregator::Avg, Aggregator::Min, Aggregator::Max];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Count => "count",
            Aggregator::Sum => "sum",
            Aggregator::Avg => "avg",
            Aggregator::Min => "min",
            Aggregator::Max => "max",
        }
    }

    pub fn from_name(s: &str) -> Option<Aggregator> {
        Aggregator::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }
}

/// AGGREGATE/GROUP operator argument: a choice, or a grounding standing in
/// for pre-aggregated data (such as a `num_teachers` column).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregateSpec {
    Op(Aggregator),
    Grounded(Grounding),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extremum {
    Min,
    Max,
}

impl Extremum {
    pub fn aggregator(self) -> Aggregator {
        match self {
            Extremum::Min => Aggregator::Min,
            Extremum::Max => Aggregator::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Asc,
    Desc,
}

/// Right-hand side of a COMPARATIVE condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareValue {
    Ground(Grounding),
    Ref(StepIndex),
}

/// COMPARATIVE condition: optional comparator (absent means equality for
/// values and refs, relatedness for tables and columns), optional column the
/// comparison is made on, and the value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub comparator: Option<Comparator>,
    pub column: Option<ColumnRef>,
    pub value: CompareValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Select { subject: Grounding, distinct: bool },
    Project { projection: Option<Grounding>, subject: StepIndex, distinct: bool },
    Comparative { subject: StepIndex, attr: StepIndex, condition: Condition, distinct: bool },
    Superlative { extremum: Extremum, subject: StepIndex, attr: StepIndex },
    Aggregate { aggregator: AggregateSpec, subject: StepIndex },
    Group { aggregator: AggregateSpec, subject: StepIndex, attr: StepIndex },
    Union { refs: Vec<StepIndex> },
    Intersect { subject: StepIndex, attrs: [StepIndex; 2] },
    Discard { subject: StepIndex, minus: StepIndex },
    Sort { subject: StepIndex, attr: StepIndex, direction: Direction },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Select,
    Project,
    Comparative,
    Superlative,
    Aggregate,
    Group,
    Union,
    Intersect,
    Discard,
    Sort,
}

impl OpKind {
    pub const ALL: [OpKind; 10] = [
        OpKind::Select,
        OpKind::Project,
        OpKind::Comparative,
        OpKind::Superlative,
        OpKind::Aggregate,
        OpKind::Group,
        OpKind::Union,
        OpKind::Intersect,
        OpKind::Discard,
        OpKind::Sort,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            OpKind::Select => "SELECT",
            OpKind::Project => "PROJECT",
            OpKind::Comparative => "COMPARATIVE",
            OpKind::Superlative => "SUPERLATIVE",
            OpKind::Aggregate => "AGGREGATE",
            OpKind::Group => "GROUP",
            OpKind::Union => "UNION",
            OpKind::Intersect => "INTERSECTION",
            OpKind::Discard => "DISCARD",
            OpKind::Sort => "SORT",
        }
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Select { .. } => OpKind::Select,
            Op::Project { .. } => OpKind::Project,
            Op::Comparative { .. } => OpKind::Comparative,
            Op::Superlative { .. } => OpKind::Superlative,
            Op::Aggregate { .. } => OpKind::Aggregate,
            Op::Group { .. } => OpKind::Group,
            Op::Union { .. } => OpKind::Union,
            Op::Intersect { .. } => OpKind::Intersect,
            Op::Discard { .. } => OpKind::Discard,
            Op::Sort { .. } => OpKind::Sort,
        }
    }

    /// Referenced steps in argument order (including a ref-valued
    /// COMPARATIVE value).
    pub fn refs(&self) -> Vec<StepIndex> {
        match self {
            Op::Select { .. } => vec![],
            Op::Project { subject, .. } | Op::Aggregate { subject, .. } => vec![*subject],
            Op::Comparative { subject, attr, condition, .. } => {
                let mut v = vec![*subject, *attr];
                if let CompareValue::Ref(r) = condition.value {
                    v.push(r);
                }
                v
            }
            Op::Superlative { subject, attr, .. }
            | Op::Group { subject, attr, .. }
            | Op::Sort { subject, attr, .. } => vec![*subject, *attr],
            Op::Union { refs } => refs.clone(),
            Op::Intersect { subject, attrs } => vec![*subject, attrs[0], attrs[1]],
            Op::Discard { subject, minus } => vec![*subject, *minus],
        }
    }

    pub fn distinct(&self) -> bool {
        match self {
            Op::Select { distinct, .. } | Op::Project { distinct, .. } | Op::Comparative { distinct, .. } => *distinct,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub index: StepIndex,
    pub op: Op,
}

/// A structurally valid grounded QDMR.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundedQdmr {
    steps: Vec<Step>,
}

impl GroundedQdmr {
    /// Builds a logical form from operators listed in step order, checking
    /// forward-only references, arity, and that every step feeds the output.
    pub fn new(ops: Vec<Op>) -> Result<GroundedQdmr, QdmrError> {
        if ops.is_empty() {
            return Err(QdmrError::Empty);
        }
        let steps: Vec<Step> = ops.into_iter().enumerate().map(|(i, op)| Step { index: i + 1, op }).collect();
        for s in &steps {
            for r in s.op.refs() {
                if r == 0 || r >= s.index {
                    return Err(QdmrError::ForwardRef { step: s.index, target: r });
                }
            }
            check_shape(s)?;
        }
        let q = GroundedQdmr { steps };
        let reach = q.reachable_from_output();
        if let Some(missing) = (1..=q.len()).find(|i| !reach.contains(i)) {
            return Err(QdmrError::Unreferenced { step: missing });
        }
        Ok(q)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step by 1-based index.
    pub fn step(&self, index: StepIndex) -> &Step {
        &self.steps[index - 1]
    }

    pub fn output(&self) -> StepIndex {
        self.steps.len()
    }

    /// Steps a step depends on, directly or transitively (excluding itself).
    pub fn dependencies(&self, index: StepIndex) -> BTreeSet<StepIndex> {
        let mut seen = self.reachable_from(index);
        seen.remove(&index);
        seen
    }

    fn reachable_from_output(&self) -> BTreeSet<StepIndex> {
        self.reachable_from(self.output())
    }

    fn reachable_from(&self, start: StepIndex) -> BTreeSet<StepIndex> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            if seen.insert(i) {
                stack.extend(self.step(i).op.refs());
            }
        }
        seen
    }

    /// Topological order ending at the output step; among ready steps the
    /// smallest index goes first.
    pub fn dependency_order(&self) -> Vec<StepIndex> {
        let n = self.len();
        let mut indegree = vec![0usize; n + 1];
        let mut users: Vec<Vec<StepIndex>> = vec![Vec::new(); n + 1];
        for s in &self.steps {
            let refs: BTreeSet<_> = s.op.refs().into_iter().collect();
            indegree[s.index] = refs.len();
            for r in refs {
                users[r].push(s.index);
            }
        }
        let mut ready: BTreeSet<StepIndex> = (1..=n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &u in &users[i] {
                indegree[u] -= 1;
                if indegree[u] == 0 {
                    ready.insert(u);
                }
            }
        }
        order
    }
}

fn check_shape(s: &Step) -> Result<(), QdmrError> {
    let bad = |message: &str| Err(QdmrError::InvalidStep { step: s.index, message: message.to_string() });
    match &s.op {
        Op::Union { refs } if refs.len() < 2 => bad("UNION needs at least two references"),
        Op::Comparative { condition, .. } => match (&condition.comparator, &condition.value) {
            (Some(_), CompareValue::Ground(Grounding::Table(_) | Grounding::Column(_))) => {
                bad("an explicit comparator needs a value or a reference on its right-hand side")
            }
            _ => Ok(()),
        },
        _ => Ok(()),
    }
}

impl fmt::Display for GroundedQdmr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut args: Vec<String> = Vec::new();
        let r = |i: &StepIndex| format!("#{i}");
        match &self.op {
            Op::Select { subject, distinct } => {
                args.push(grounding_text(subject));
                push_distinct(&mut args, *distinct);
            }
            Op::Project { projection, subject, distinct } => {
                args.push(projection.as_ref().map_or_else(|| "none".to_string(), grounding_text));
                args.push(r(subject));
                push_distinct(&mut args, *distinct);
            }
            Op::Comparative { subject, attr, condition, distinct } => {
                args.push(r(subject));
                args.push(r(attr));
                args.push(condition_text(condition));
                if let Some(c) = &condition.column {
                    args.push(c.to_string());
                }
                push_distinct(&mut args, *distinct);
            }
            Op::Superlative { extremum, subject, attr } => {
                args.push(extremum.aggregator().name().to_string());
                args.push(r(subject));
                args.push(r(attr));
            }
            Op::Aggregate { aggregator, subject } => {
                args.push(aggregate_text(aggregator));
                args.push(r(subject));
            }
            Op::Group { aggregator, subject, attr } => {
                args.push(aggregate_text(aggregator));
                args.push(r(subject));
                args.push(r(attr));
            }
            Op::Union { refs } => args.extend(refs.iter().map(r)),
            Op::Intersect { subject, attrs } => {
                args.push(r(subject));
                args.push(r(&attrs[0]));
                args.push(r(&attrs[1]));
            }
            Op::Discard { subject, minus } => {
                args.push(r(subject));
                args.push(r(minus));
            }
            Op::Sort { subject, attr, direction } => {
                args.push(r(subject));
                args.push(r(attr));
                args.push(match direction {
                    Direction::Asc => "asc".into(),
                    Direction::Desc => "desc".into(),
                });
            }
        }
        write!(f, "#{} {}[{}]", self.index, self.op.kind().keyword(), args.join(", "))
    }
}

fn push_distinct(args: &mut Vec<String>, distinct: bool) {
    if distinct {
        args.push("distinct".into());
    }
}

fn aggregate_text(a: &AggregateSpec) -> String {
    match a {
        AggregateSpec::Op(op) => op.name().to_string(),
        AggregateSpec::Grounded(g) => grounding_text(g),
    }
}

fn condition_text(c: &Condition) -> String {
    let value = match &c.value {
        CompareValue::Ref(i) => format!("#{i}"),
        CompareValue::Ground(g) => grounding_text(g),
    };
    match c.comparator {
        None => value,
        Some(Comparator::Like) => format!("like {value}"),
        Some(op) => format!("{}{value}", op.glyph()),
    }
}

/// Surface form of a grounding: bare table name, `Table.Column`, or a
/// literal (text always quoted) with an optional `@Table.Column` source.
pub fn grounding_text(g: &Grounding) -> String {
    match g {
        Grounding::Table(t) => t.clone(),
        Grounding::Column(c) => c.to_string(),
        Grounding::Value(v) => {
            let lit = match &v.value {
                Value::Text(s) => quote_string(s),
                other => other.lexical(),
            };
            match &v.source {
                Some(c) => format!("{lit}@{c}"),
                None => lit,
            }
        }
    }
}
