//! Static checks mirroring the decoder's eligibility constraints.

use std::fmt;

use serde::Serialize;

use crate::schema::Schema;

use super::analysis::datatype;
use super::{AggregateSpec, CompareValue, GroundedQdmr, Grounding, Op, StepIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ViolationKind {
    /// An AGGREGATE/GROUP aggregator grounded to something other than a column.
    AggregatorNotColumn,
    /// The COMPARATIVE column's datatype differs from the compared value's.
    ColumnTypeMismatch,
    /// A database value compared on a column it was not taken from.
    ValueNotFromColumn,
    /// A database value used in COMPARATIVE without choosing a column.
    DatabaseValueWithoutColumn,
    /// A grounding that does not exist in the schema or does not fit its
    /// column's datatype.
    UnknownGrounding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub step: StepIndex,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}: {:?}: {}", self.step, self.kind, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }
}

pub fn validate(q: &GroundedQdmr, schema: &Schema) -> ValidationReport {
    let mut out = Vec::new();
    for s in q.steps() {
        let mut flag = |kind, message: String| out.push(Violation { step: s.index, kind, message });
        for g in groundings(&s.op) {
            if let Some(problem) = grounding_problem(schema, g) {
                flag(ViolationKind::UnknownGrounding, problem);
            }
        }
        match &s.op {
            Op::Aggregate { aggregator: AggregateSpec::Grounded(g), .. }
            | Op::Group { aggregator: AggregateSpec::Grounded(g), .. } => {
                if !matches!(g, Grounding::Column(_)) {
                    flag(
                        ViolationKind::AggregatorNotColumn,
                        format!("aggregator grounding {} is not a column", super::grounding_text(g)),
                    );
                }
            }
            Op::Comparative { condition, .. } => {
                let value_type = match &condition.value {
                    CompareValue::Ground(Grounding::Value(v)) => Some(v.datatype()),
                    CompareValue::Ref(r) => datatype(q, schema, *r),
                    CompareValue::Ground(_) => None,
                };
                let source = match &condition.value {
                    CompareValue::Ground(Grounding::Value(v)) => v.source.as_ref(),
                    _ => None,
                };
                match &condition.column {
                    Some(col) => {
                        let col_type = schema.datatype(col);
                        if let (Some(ct), Some(vt)) = (col_type, value_type) {
                            if ct != vt {
                                flag(
                                    ViolationKind::ColumnTypeMismatch,
                                    format!("column {col} is {ct} but the value is {vt}"),
                                );
                            }
                        }
                        if let Some(src) = source {
                            if src != col {
                                flag(
                                    ViolationKind::ValueNotFromColumn,
                                    format!("value comes from {src}, not from the compared column {col}"),
                                );
                            }
                        }
                    }
                    None => {
                        if let Some(src) = source {
                            flag(
                                ViolationKind::DatabaseValueWithoutColumn,
                                format!("value taken from {src} but no column was chosen"),
                            );
                        }
                    }
                }
            }
            _ => {}
        }
    }
    ValidationReport { violations: out }
}

fn groundings(op: &Op) -> Vec<&Grounding> {
    match op {
        Op::Select { subject, .. } => vec![subject],
        Op::Project { projection: Some(g), .. } => vec![g],
        Op::Aggregate { aggregator: AggregateSpec::Grounded(g), .. }
        | Op::Group { aggregator: AggregateSpec::Grounded(g), .. } => vec![g],
        Op::Comparative { condition, .. } => match &condition.value {
            CompareValue::Ground(g) => vec![g],
            CompareValue::Ref(_) => vec![],
        },
        _ => vec![],
    }
}

fn grounding_problem(schema: &Schema, g: &Grounding) -> Option<String> {
    match g {
        Grounding::Table(t) => match schema.table(t) {
            Some(table) if table.name == *t => None,
            _ => Some(format!("unknown table {t}")),
        },
        Grounding::Column(c) => match schema.resolve_column(&c.table, &c.column) {
            Some(r) if r == *c => None,
            _ => Some(format!("unknown column {c}")),
        },
        Grounding::Value(v) => {
            let src = v.source.as_ref()?;
            let dt = match schema.resolve_column(&src.table, &src.column) {
                Some(r) if r == *src => schema.datatype(src)?,
                _ => return Some(format!("unknown source column {src}")),
            };
            (dt != v.datatype()).then(|| format!("value is {} but its source column {src} is {dt}", v.datatype()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdmr::parse_qdmr;

    fn schema() -> Schema {
        Schema::from_json(
            r#"{"tables":[
            {"name":"stadium","columns":[{"name":"Stadium_ID","type":"number"},{"name":"Name","type":"text"},{"name":"Capacity","type":"number"}],"primary_key":"Stadium_ID","foreign_keys":[]}]}"#,
        )
        .unwrap()
    }

    fn kinds(text: &str) -> Vec<ViolationKind> {
        let s = schema();
        validate(&parse_qdmr(text, &s).unwrap(), &s).kinds()
    }

    #[test]
    fn clean_query_has_no_violations() {
        assert!(kinds("#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 COMPARATIVE[#1,#2,>=5000]").is_empty());
    }

    #[test]
    fn type_mismatch_is_flagged() {
        assert_eq!(
            kinds("#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 COMPARATIVE[#1,#2,=\"red\", stadium.Capacity]"),
            vec![ViolationKind::ColumnTypeMismatch]
        );
    }

    #[test]
    fn table_aggregator_is_flagged() {
        assert_eq!(kinds("#1 SELECT[stadium]\n#2 AGGREGATE[stadium, #1]"), vec![ViolationKind::AggregatorNotColumn]);
    }

    #[test]
    fn validate_is_pure() {
        let s = schema();
        let q = parse_qdmr("#1 SELECT[stadium]\n#2 AGGREGATE[stadium, #1]", &s).unwrap();
        let before = q.clone();
        assert_eq!(validate(&q, &s), validate(&q, &s));
        assert_eq!(q, before);
    }
}
