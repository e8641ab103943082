//! Static facts about steps that both the transpiler and the reference
//! interpreter need to agree on: where each output column comes from and
//! which UNION variant a UNION step is.

use crate::schema::{ColumnRef, Schema};
use crate::value::Datatype;

use super::{AggregateSpec, Aggregator, GroundedQdmr, Grounding, Op, StepIndex};

/// The four UNION variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnionKind {
    /// Several columns of one pattern, each from a different column.
    Horizontal,
    /// Same column, different patterns: SPARQL `UNION`.
    Vertical,
    /// Several AGGREGATE steps; `shared` when all aggregate the same step.
    Aggregators { shared: bool },
    /// GROUP results plus (optionally) their index.
    AfterGroup,
}

/// Column a grounding lives in: tables are located at their key; values at
/// their source column, if any.
pub fn grounding_location(schema: &Schema, g: &Grounding) -> Option<ColumnRef> {
    match g {
        Grounding::Table(t) => schema.key_of(t),
        Grounding::Column(c) => Some(c.clone()),
        Grounding::Value(v) => v.source.clone(),
    }
}

/// Locations of every output column of a step (None for computed columns).
pub fn output_locations(q: &GroundedQdmr, schema: &Schema, step: StepIndex) -> Vec<Option<ColumnRef>> {
    match &q.step(step).op {
        Op::Select { subject, .. } => vec![grounding_location(schema, subject)],
        Op::Project { projection: Some(g), .. } => vec![grounding_location(schema, g)],
        Op::Project { projection: None, subject, .. }
        | Op::Comparative { subject, .. }
        | Op::Superlative { subject, .. }
        | Op::Intersect { subject, .. }
        | Op::Discard { subject, .. }
        | Op::Sort { subject, .. } => output_locations(q, schema, *subject),
        Op::Aggregate { aggregator, .. } | Op::Group { aggregator, .. } => match aggregator {
            AggregateSpec::Op(_) => vec![None],
            AggregateSpec::Grounded(g) => vec![grounding_location(schema, g)],
        },
        Op::Union { refs } => match union_kind(q, schema, step) {
            Some(UnionKind::Vertical) => output_locations(q, schema, refs[0]),
            _ => refs.iter().flat_map(|r| output_locations(q, schema, *r)).collect(),
        },
    }
}

/// Location of a step's first output column.
pub fn location(q: &GroundedQdmr, schema: &Schema, step: StepIndex) -> Option<ColumnRef> {
    output_locations(q, schema, step).into_iter().next().flatten()
}

/// Number of output columns of a step.
pub fn arity(q: &GroundedQdmr, schema: &Schema, step: StepIndex) -> usize {
    output_locations(q, schema, step).len()
}

/// Static datatype of a step's first output column, when it can be known.
pub fn datatype(q: &GroundedQdmr, schema: &Schema, step: StepIndex) -> Option<Datatype> {
    match &q.step(step).op {
        Op::Aggregate { aggregator: AggregateSpec::Op(op), subject }
        | Op::Group { aggregator: AggregateSpec::Op(op), subject, .. } => match op {
            Aggregator::Count | Aggregator::Sum | Aggregator::Avg => Some(Datatype::Number),
            Aggregator::Min | Aggregator::Max => datatype(q, schema, *subject),
        },
        Op::Union { refs } if union_kind(q, schema, step).is_some_and(|k| k != UnionKind::Vertical) => {
            datatype(q, schema, refs[0])
        }
        Op::Select { subject: Grounding::Value(v), .. } | Op::Project { projection: Some(Grounding::Value(v)), .. } => {
            Some(v.datatype())
        }
        _ => location(q, schema, step).and_then(|c| schema.datatype(&c)),
    }
}

/// Classifies a UNION step; `None` when the arguments match no variant.
pub fn union_kind(q: &GroundedQdmr, schema: &Schema, step: StepIndex) -> Option<UnionKind> {
    let Op::Union { refs } = &q.step(step).op else {
        return None;
    };
    if refs.iter().any(|r| arity(q, schema, *r) != 1) {
        return None;
    }
    let repeated = refs.iter().enumerate().any(|(i, r)| refs[..i].contains(r));

    let group_of = |r: StepIndex| match &q.step(r).op {
        Op::Group { aggregator: AggregateSpec::Op(_), subject, attr } => Some((*subject, *attr)),
        _ => None,
    };
    let groups: Vec<(StepIndex, StepIndex)> = refs.iter().filter_map(|r| group_of(*r)).collect();
    if let Some(&(subject, attr)) = groups.first() {
        let same = groups.iter().all(|g| *g == (subject, attr));
        let rest_is_index = refs.iter().filter(|r| group_of(**r).is_none()).all(|r| *r == attr);
        return (same && rest_is_index && !repeated).then_some(UnionKind::AfterGroup);
    }

    let agg_subject = |r: StepIndex| match &q.step(r).op {
        Op::Aggregate { aggregator: AggregateSpec::Op(_), subject } => Some(*subject),
        _ => None,
    };
    let subjects: Vec<Option<StepIndex>> = refs.iter().map(|r| agg_subject(*r)).collect();
    if subjects.iter().any(Option::is_some) {
        if repeated || subjects.iter().any(Option::is_none) {
            return None;
        }
        let shared = subjects.windows(2).all(|w| w[0] == w[1]);
        return Some(UnionKind::Aggregators { shared });
    }

    let locs: Vec<Option<ColumnRef>> = refs.iter().map(|r| location(q, schema, *r)).collect();
    if locs.iter().any(Option::is_none) {
        return None;
    }
    if locs.windows(2).all(|w| w[0] == w[1]) {
        return Some(UnionKind::Vertical);
    }
    let distinct = locs.iter().enumerate().all(|(i, l)| !locs[..i].contains(l));
    distinct.then_some(UnionKind::Horizontal)
}
