//! Seeded generator of small databases and valid grounded QDMRs, used by
//! the differential and round-trip tests and the benchmarks.
//!
//! Databases have 2 or 3 tables with at most 20 rows; every table after the
//! first references an earlier one. QDMRs are drawn per [`Category`]: each
//! of the ten operators plus the four UNION variants has its own shapes, so
//! cycling through the categories covers all of them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::qdmr::{
    AggregateSpec, Aggregator, CompareValue, Condition, Direction, Extremum, GroundedQdmr, Grounding, Op, StepIndex,
    ValueRef,
};
use crate::schema::{Column, ColumnRef, ForeignKey, PrimaryKey, Schema, Table, TableData};
use crate::value::{Comparator, Datatype, Value};

/// Environment variable overriding the generator seed.
pub const SEED_ENV: &str = "QDMR_SPARQL_SEED";
/// Seed used when the environment does not provide one.
pub const DEFAULT_SEED: u64 = 20_220_517;

pub const MAX_ROWS: usize = 20;

/// Seed from [`SEED_ENV`], or [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// The main operator of a generated QDMR; UNION is split by variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Category {
    Select,
    Project,
    Comparative,
    Superlative,
    Aggregate,
    Group,
    UnionHorizontal,
    UnionVertical,
    UnionAggregators,
    UnionAfterGroup,
    Intersect,
    Discard,
    Sort,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Select,
        Category::Project,
        Category::Comparative,
        Category::Superlative,
        Category::Aggregate,
        Category::Group,
        Category::UnionHorizontal,
        Category::UnionVertical,
        Category::UnionAggregators,
        Category::UnionAfterGroup,
        Category::Intersect,
        Category::Discard,
        Category::Sort,
    ];
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub category: Category,
    pub schema: Schema,
    pub data: TableData,
    pub qdmr: GroundedQdmr,
}

/// The `i`-th instance for a seed; categories are taken round-robin.
pub fn instance(seed: u64, i: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
    let category = Category::ALL[i % Category::ALL.len()];
    let (schema, data) = random_database(&mut rng);
    let qdmr = random_qdmr(&mut rng, &schema, &data, category);
    Instance { category, schema, data, qdmr }
}

pub fn instances(seed: u64, n: usize) -> Vec<Instance> {
    (0..n).map(|i| instance(seed, i)).collect()
}

const TABLE_NAMES: &[&str] = &["author", "book", "shop", "city", "team", "player"];
const ATTRIBUTES: &[(&str, Datatype)] = &[
    ("name", Datatype::Text),
    ("color", Datatype::Text),
    ("title", Datatype::Text),
    ("year", Datatype::Number),
    ("score", Datatype::Number),
    ("age", Datatype::Number),
    ("opened", Datatype::Date),
];
const WORDS: &[&str] = &["red", "blue", "green", "Gold Star", "north", "Blue Note"];
const DATES: &[&str] = &["2014-01-02", "2014-06-30", "2015-03-15", "2016-11-01", "2020-02-29"];

fn random_value<R: Rng>(rng: &mut R, dt: Datatype) -> Value {
    match dt {
        Datatype::Number => Value::number(rng.gen_range(0..=12) as f64),
        Datatype::Text => Value::text(*WORDS.choose(rng).expect("words")),
        Datatype::Date => Value::Date(DATES.choose(rng).expect("dates").to_string()),
    }
}

/// A random database: 2–3 tables keyed by `id`, each later table with a
/// foreign key to an earlier one.
pub fn random_database<R: Rng>(rng: &mut R) -> (Schema, TableData) {
    let n = rng.gen_range(2..=3);
    let mut names: Vec<&str> = TABLE_NAMES.to_vec();
    names.shuffle(rng);
    let mut schema = Schema::default();
    for (i, name) in names.iter().take(n).enumerate() {
        let mut columns = vec![Column { name: "id".into(), datatype: Datatype::Number }];
        let mut attrs: Vec<&(&str, Datatype)> = ATTRIBUTES.iter().collect();
        attrs.shuffle(rng);
        for (a, dt) in attrs.into_iter().take(rng.gen_range(1..=3)) {
            columns.push(Column { name: a.to_string(), datatype: *dt });
        }
        let mut foreign_keys = Vec::new();
        if i > 0 {
            let mut targets: Vec<usize> = (0..i).collect();
            targets.shuffle(rng);
            let count = if i == 2 && rng.gen_bool(0.3) { 2 } else { 1 };
            for &t in targets.iter().take(count) {
                let target = names[t];
                let col = format!("{target}_id");
                columns.push(Column { name: col.clone(), datatype: Datatype::Number });
                foreign_keys.push(ForeignKey { column: col, ref_table: target.into(), ref_column: "id".into() });
            }
        }
        schema.tables.push(Table {
            name: name.to_string(),
            columns,
            primary_key: Some(PrimaryKey::Single("id".into())),
            foreign_keys,
        });
    }

    let mut data = TableData::empty(&schema);
    let mut sizes = Vec::new();
    for t in &schema.tables {
        let rows = if rng.gen_bool(0.04) { 0 } else { rng.gen_range(1..=MAX_ROWS) };
        sizes.push(rows);
        let mut out = Vec::new();
        for r in 0..rows {
            let mut row = Vec::new();
            for c in &t.columns {
                let cell = if c.name == "id" {
                    Some(Value::number((r + 1) as f64))
                } else if let Some(fk) = t.foreign_keys.iter().find(|fk| fk.column == c.name) {
                    let target = schema.table_index(&fk.ref_table).expect("earlier table");
                    let size = sizes[target];
                    match rng.gen_range(0..20) {
                        0 => None,
                        1 => Some(Value::number((size + 1) as f64)),
                        _ if size == 0 => None,
                        _ => Some(Value::number(rng.gen_range(1..=size) as f64)),
                    }
                } else if rng.gen_bool(0.1) {
                    None
                } else {
                    Some(random_value(rng, c.datatype))
                };
                row.push(cell);
            }
            out.push(row);
        }
        data.tables.insert(t.name.clone(), out);
    }
    (schema, data)
}

struct Gen<'a, R> {
    rng: &'a mut R,
    schema: &'a Schema,
    data: &'a TableData,
    ops: Vec<Op>,
    types: Vec<Option<Datatype>>,
}

/// A random valid QDMR whose main operator belongs to `category`.
pub fn random_qdmr<R: Rng>(rng: &mut R, schema: &Schema, data: &TableData, category: Category) -> GroundedQdmr {
    let mut g = Gen { rng, schema, data, ops: Vec::new(), types: Vec::new() };
    g.build(category);
    GroundedQdmr::new(g.ops.clone()).unwrap_or_else(|e| panic!("{e}: {:?}", g.ops))
}

impl<R: Rng> Gen<'_, R> {
    fn push(&mut self, op: Op) -> StepIndex {
        let of = |s: &StepIndex| self.types[*s - 1];
        let dt = match &op {
            Op::Select { subject, .. } | Op::Project { projection: Some(subject), .. } => {
                self.grounding_datatype(subject)
            }
            Op::Aggregate { aggregator, subject } | Op::Group { aggregator, subject, .. } => match aggregator {
                AggregateSpec::Op(Aggregator::Count | Aggregator::Avg) => Some(Datatype::Number),
                AggregateSpec::Op(_) => of(subject),
                AggregateSpec::Grounded(g) => self.grounding_datatype(g),
            },
            Op::Union { .. } => None,
            Op::Project { subject, .. }
            | Op::Comparative { subject, .. }
            | Op::Superlative { subject, .. }
            | Op::Intersect { subject, .. }
            | Op::Discard { subject, .. }
            | Op::Sort { subject, .. } => of(subject),
        };
        self.types.push(dt);
        self.ops.push(op);
        self.ops.len()
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn table(&mut self) -> String {
        self.schema.tables.choose(self.rng).expect("tables").name.clone()
    }

    fn columns(&self) -> Vec<ColumnRef> {
        self.schema.tables.iter().flat_map(|t| t.columns.iter().map(|c| ColumnRef::new(&t.name, &c.name))).collect()
    }

    fn column(&mut self) -> ColumnRef {
        self.columns().choose(self.rng).expect("columns").clone()
    }

    fn column_of(&mut self, table: &str) -> ColumnRef {
        let cols: Vec<ColumnRef> = self.columns().into_iter().filter(|c| c.table == table).collect();
        cols.choose(self.rng).expect("columns").clone()
    }

    fn attribute_of(&mut self, table: &str) -> ColumnRef {
        let key = self.schema.key_of(table).expect("keyed");
        let cols: Vec<ColumnRef> = self.columns().into_iter().filter(|c| c.table == table && *c != key).collect();
        cols.choose(self.rng).expect("attributes").clone()
    }

    fn datatype(&self, c: &ColumnRef) -> Datatype {
        self.schema.datatype(c).expect("schema column")
    }

    /// A value of the column: usually one present in the data.
    fn value_of(&mut self, c: &ColumnRef) -> Value {
        let t = self.schema.table(&c.table).expect("table");
        let ci = t.column_index(&c.column).expect("column");
        let present: Vec<Value> = self.data.rows(&c.table).iter().filter_map(|r| r[ci].clone()).collect();
        if !present.is_empty() && self.chance(0.8) {
            present.choose(self.rng).expect("nonempty").clone()
        } else {
            random_value(self.rng, self.datatype(c))
        }
    }

    fn grounding(&mut self) -> Grounding {
        if self.chance(0.3) {
            Grounding::Table(self.table())
        } else {
            Grounding::Column(self.column())
        }
    }

    /// SELECT of a table, sometimes narrowed by a comparison.
    fn subject(&mut self) -> (StepIndex, String) {
        let t = self.table();
        let s = self.push(Op::Select { subject: Grounding::Table(t.clone()), distinct: false });
        if self.chance(0.3) {
            let c = self.column();
            let a =
                self.push(Op::Project { projection: Some(Grounding::Column(c.clone())), subject: s, distinct: false });
            let condition = self.condition(&c);
            let f = self.push(Op::Comparative { subject: s, attr: a, condition, distinct: false });
            return (f, t);
        }
        (s, t)
    }

    fn comparator(&mut self, dt: Datatype) -> Option<Comparator> {
        let choices: &[Option<Comparator>] = match dt {
            Datatype::Text => &[None, Some(Comparator::Eq), Some(Comparator::Ne), Some(Comparator::Like)],
            _ => &[
                None,
                Some(Comparator::Eq),
                Some(Comparator::Ne),
                Some(Comparator::Gt),
                Some(Comparator::Lt),
                Some(Comparator::Ge),
                Some(Comparator::Le),
            ],
        };
        *choices.choose(self.rng).expect("comparators")
    }

    /// A literal condition on values of column `c`.
    fn condition(&mut self, c: &ColumnRef) -> Condition {
        let dt = self.datatype(c);
        let comparator = self.comparator(dt);
        let v = self.value_of(c);
        if comparator == Some(Comparator::Like) {
            let text = v.lexical();
            let cut: String = text.chars().skip(1).take(3).collect();
            let pattern = Value::text(format!("%{}%", cut.to_lowercase()));
            return Condition {
                comparator,
                column: None,
                value: CompareValue::Ground(Grounding::Value(ValueRef::literal(pattern))),
            };
        }
        if self.chance(0.5) {
            let value = ValueRef { value: v, source: Some(c.clone()) };
            Condition { comparator, column: Some(c.clone()), value: CompareValue::Ground(Grounding::Value(value)) }
        } else {
            Condition { comparator, column: None, value: CompareValue::Ground(Grounding::Value(ValueRef::literal(v))) }
        }
    }

    fn aggregator(&mut self, dt: Option<Datatype>) -> Aggregator {
        let choices: &[Aggregator] = match dt {
            Some(Datatype::Number) => &Aggregator::ALL,
            _ => &[Aggregator::Count, Aggregator::Min, Aggregator::Max],
        };
        *choices.choose(self.rng).expect("aggregators")
    }

    fn project(&mut self, subject: StepIndex, g: Grounding) -> StepIndex {
        self.push(Op::Project { projection: Some(g), subject, distinct: false })
    }

    /// A column projected from `subject`, with its location.
    fn projected_column(&mut self, subject: StepIndex) -> (StepIndex, ColumnRef) {
        let c = self.column();
        (self.project(subject, Grounding::Column(c.clone())), c)
    }

    fn maybe_project_out(&mut self, step: StepIndex, table: &str) -> StepIndex {
        if self.chance(0.4) {
            let c = self.attribute_of(table);
            self.project(step, Grounding::Column(c))
        } else {
            step
        }
    }

    fn step_datatype(&self, step: StepIndex) -> Option<Datatype> {
        self.types[step - 1]
    }

    fn grounding_datatype(&self, g: &Grounding) -> Option<Datatype> {
        match g {
            Grounding::Table(t) => self.schema.key_of(t).and_then(|k| self.schema.datatype(&k)),
            Grounding::Column(c) => self.schema.datatype(c),
            Grounding::Value(v) => Some(v.value.datatype()),
        }
    }

    fn build(&mut self, category: Category) {
        match category {
            Category::Select => {
                let t = self.table();
                let subject = match self.rng.gen_range(0..3) {
                    0 => Grounding::Table(t),
                    1 => Grounding::Column(self.column_of(&t)),
                    _ => {
                        let c = self.column_of(&t);
                        Grounding::Value(ValueRef { value: self.value_of(&c), source: Some(c) })
                    }
                };
                let distinct = self.chance(0.25);
                self.push(Op::Select { subject, distinct });
            }
            Category::Project => {
                let (s, _) = self.subject();
                let g = self.grounding();
                let mut p = self.project(s, g);
                if self.chance(0.3) {
                    let g = self.grounding();
                    p = self.project(p, g);
                }
                if self.chance(0.2) {
                    let c = self.column();
                    let value = ValueRef { value: self.value_of(&c), source: Some(c) };
                    p = self.project(p, Grounding::Value(value));
                }
                if self.chance(0.2) {
                    self.push(Op::Project { projection: None, subject: p, distinct: true });
                }
            }
            Category::Comparative => {
                let t = self.table();
                let s = self.push(Op::Select { subject: Grounding::Table(t.clone()), distinct: false });
                let distinct = self.chance(0.15);
                let f = match self.rng.gen_range(0..4) {
                    0 | 1 => {
                        let (a, c) = self.projected_column(s);
                        let condition = self.condition(&c);
                        self.push(Op::Comparative { subject: s, attr: a, condition, distinct })
                    }
                    2 => {
                        let (a, c) = self.projected_column(s);
                        let dt = self.datatype(&c);
                        let op = match dt {
                            Datatype::Number => {
                                *[Aggregator::Avg, Aggregator::Min, Aggregator::Max].choose(self.rng).unwrap()
                            }
                            _ => *[Aggregator::Min, Aggregator::Max].choose(self.rng).unwrap(),
                        };
                        let k = self.push(Op::Aggregate { aggregator: AggregateSpec::Op(op), subject: a });
                        let comparator = self.comparator(Datatype::Number).or(Some(Comparator::Ge));
                        let condition = Condition { comparator, column: None, value: CompareValue::Ref(k) };
                        self.push(Op::Comparative { subject: s, attr: a, condition, distinct })
                    }
                    _ => {
                        let other = self.table();
                        let condition = Condition {
                            comparator: None,
                            column: None,
                            value: CompareValue::Ground(Grounding::Table(other)),
                        };
                        self.push(Op::Comparative { subject: s, attr: s, condition, distinct })
                    }
                };
                self.maybe_project_out(f, &t);
            }
            Category::Superlative => {
                if self.chance(0.3) {
                    let t = self.table();
                    let c = self.attribute_of(&t);
                    let a = self.push(Op::Select { subject: Grounding::Column(c), distinct: false });
                    let g = self.grounding();
                    let p = self.project(a, g);
                    let grp =
                        self.push(Op::Group { aggregator: AggregateSpec::Op(Aggregator::Count), subject: p, attr: a });
                    let extremum = if self.chance(0.5) { Extremum::Max } else { Extremum::Min };
                    self.push(Op::Superlative { extremum, subject: a, attr: grp });
                } else {
                    let (s, t) = self.subject();
                    let (a, _) = self.projected_column(s);
                    let extremum = if self.chance(0.5) { Extremum::Max } else { Extremum::Min };
                    let sup = self.push(Op::Superlative { extremum, subject: s, attr: a });
                    self.maybe_project_out(sup, &t);
                }
            }
            Category::Aggregate => {
                let (s, t) = self.subject();
                if self.chance(0.1) {
                    let c = self.attribute_of(&t);
                    self.push(Op::Aggregate { aggregator: AggregateSpec::Grounded(Grounding::Column(c)), subject: s });
                } else {
                    let x = if self.chance(0.5) { self.projected_column(s).0 } else { s };
                    let dt = self.step_datatype(x);
                    let op = self.aggregator(dt);
                    self.push(Op::Aggregate { aggregator: AggregateSpec::Op(op), subject: x });
                }
            }
            Category::Group => {
                let attr = if self.chance(0.5) {
                    let c = self.column();
                    self.push(Op::Select { subject: Grounding::Column(c), distinct: false })
                } else {
                    self.subject().0
                };
                let g = self.grounding();
                let subj = self.project(attr, g);
                if self.chance(0.1) {
                    let c = self.column();
                    self.push(Op::Group {
                        aggregator: AggregateSpec::Grounded(Grounding::Column(c)),
                        subject: subj,
                        attr,
                    });
                } else {
                    let dt = self.step_datatype(subj);
                    let op = self.aggregator(dt);
                    self.push(Op::Group { aggregator: AggregateSpec::Op(op), subject: subj, attr });
                }
            }
            Category::UnionHorizontal => {
                let (s, t) = self.subject();
                let key = self.schema.key_of(&t).expect("keyed");
                let mut refs = if self.chance(0.3) { vec![s] } else { vec![] };
                let mut used = vec![key];
                let width = self.rng.gen_range(2..=3);
                for _ in 0..8 {
                    if refs.len() >= width {
                        break;
                    }
                    let c = self.column();
                    if used.contains(&c) {
                        continue;
                    }
                    used.push(c.clone());
                    refs.push(self.project(s, Grounding::Column(c)));
                }
                if refs.len() < 2 {
                    let c = self.attribute_of(&t);
                    refs = vec![s, self.project(s, Grounding::Column(c))];
                }
                self.push(Op::Union { refs });
            }
            Category::UnionVertical => {
                let t = self.table();
                let branches = self.rng.gen_range(2..=3);
                let mut refs = Vec::new();
                let project_to = if self.chance(0.3) { Some(self.attribute_of(&t)) } else { None };
                for _ in 0..branches {
                    let s = self.push(Op::Select { subject: Grounding::Table(t.clone()), distinct: false });
                    let (a, c) = self.projected_column(s);
                    let condition = self.condition(&c);
                    let f = self.push(Op::Comparative { subject: s, attr: a, condition, distinct: false });
                    refs.push(match &project_to {
                        Some(c) => self.project(f, Grounding::Column(c.clone())),
                        None => f,
                    });
                }
                let u = self.push(Op::Union { refs });
                match self.rng.gen_range(0..3) {
                    0 => {
                        self.push(Op::Aggregate { aggregator: AggregateSpec::Op(Aggregator::Count), subject: u });
                    }
                    1 if project_to.is_none() => {
                        let c = self.attribute_of(&t);
                        self.project(u, Grounding::Column(c));
                    }
                    _ => {}
                }
            }
            Category::UnionAggregators => {
                let shared = self.chance(0.5);
                let n = self.rng.gen_range(2..=3);
                let mut refs = Vec::new();
                let first = if shared { Some(self.subject_or_column()) } else { None };
                for _ in 0..n {
                    let x = match first {
                        Some(x) => x,
                        None => self.subject_or_column(),
                    };
                    let dt = self.step_datatype(x);
                    let op = self.aggregator(dt);
                    refs.push(self.push(Op::Aggregate { aggregator: AggregateSpec::Op(op), subject: x }));
                }
                self.push(Op::Union { refs });
            }
            Category::UnionAfterGroup => {
                let t = self.table();
                let c = self.attribute_of(&t);
                let attr = self.push(Op::Select { subject: Grounding::Column(c), distinct: false });
                let g = self.grounding();
                let subj = self.project(attr, g);
                let dt = self.step_datatype(subj);
                let mut refs = vec![attr];
                for _ in 0..self.rng.gen_range(1..=2) {
                    let op = self.aggregator(dt);
                    refs.push(self.push(Op::Group { aggregator: AggregateSpec::Op(op), subject: subj, attr }));
                }
                refs.shuffle(self.rng);
                self.push(Op::Union { refs });
            }
            Category::Intersect => {
                let t = self.table();
                let s = self.push(Op::Select { subject: Grounding::Table(t.clone()), distinct: false });
                let mut attrs = [0; 2];
                for a in attrs.iter_mut() {
                    let (p, c) = self.projected_column(s);
                    let condition = self.condition(&c);
                    *a = self.push(Op::Comparative { subject: s, attr: p, condition, distinct: false });
                }
                let i = self.push(Op::Intersect { subject: s, attrs });
                self.maybe_project_out(i, &t);
            }
            Category::Discard => {
                let t = self.table();
                let s = self.push(Op::Select { subject: Grounding::Table(t.clone()), distinct: false });
                let m = if self.chance(0.5) {
                    let (a, c) = self.projected_column(s);
                    let condition = self.condition(&c);
                    self.push(Op::Comparative { subject: s, attr: a, condition, distinct: false })
                } else {
                    let other = self.table();
                    let condition = Condition {
                        comparator: None,
                        column: None,
                        value: CompareValue::Ground(Grounding::Table(other)),
                    };
                    self.push(Op::Comparative { subject: s, attr: s, condition, distinct: false })
                };
                let d = self.push(Op::Discard { subject: s, minus: m });
                self.maybe_project_out(d, &t);
            }
            Category::Sort => {
                let (s, t) = self.subject();
                let (a, _) = self.projected_column(s);
                let direction = if self.chance(0.5) { Direction::Asc } else { Direction::Desc };
                let out = if self.chance(0.4) {
                    let c = self.attribute_of(&t);
                    self.project(s, Grounding::Column(c))
                } else {
                    s
                };
                self.push(Op::Sort { subject: out, attr: a, direction });
            }
        }
    }

    fn subject_or_column(&mut self) -> StepIndex {
        let (s, _) = self.subject();
        if self.chance(0.5) {
            self.projected_column(s).0
        } else {
            s
        }
    }
}
