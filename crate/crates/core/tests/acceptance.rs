//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use qdmr_sparql::execmatch::{equivalent, limit1_contained, match_sorted};
use qdmr_sparql::joinpath::SchemaGraph;
use qdmr_sparql::qdmr::{parse_qdmr, union_kind, validate, UnionKind, ViolationKind};
use qdmr_sparql::rdf::to_rdf;
use qdmr_sparql::result::{Provenance, ResultColumn, ResultTable, SortMeta};
use qdmr_sparql::schema::{ColumnRef, Schema, TableData};
use qdmr_sparql::sparql::parse_sparql;
use qdmr_sparql::suite::{execute, Case};
use qdmr_sparql::testgen::{self, Instance};
use qdmr_sparql::value::{Term, Value};
use qdmr_sparql::{refeval, transpile, OpKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn case_dirs() -> Vec<PathBuf> {
    qdmr_sparql::suite::discover(&fixtures()).expect("fixture tree")
}

fn fixture_db(name: &str) -> (Schema, TableData) {
    let dir = fixtures().join(name);
    let schema = Schema::load(&dir.join("schema.json")).expect("schema");
    let data = TableData::load_csv_dir(&schema, &dir.join("data")).expect("data");
    (schema, data)
}

fn generated() -> Vec<Instance> {
    testgen::instances(testgen::seed_from_env(), 200)
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn paper_examples() -> Outcome {
    let start = Instant::now();
    let (schema, _) = fixture_db("teacher_school");
    let q = parse_qdmr("#1 SELECT[school.State]", &schema).map_err(|e| e.to_string())?;
    let text = transpile(&q, &schema).map_err(|e| e.to_string())?.text;
    let paper = "SELECT ?State WHERE { ?ID arc:school:State ?State. }";
    ensure(squash(&text) == squash(paper), || format!("state query differs: {text}"))?;

    let dirs = case_dirs();
    ensure(dirs.len() == 6, || format!("expected 6 example cases, found {}", dirs.len()))?;
    let mut passed = 0;
    for dir in &dirs {
        let case = Case::load(dir).map_err(|e| e.to_string())?;
        let outcome = case.check().map_err(|e| format!("{}: {e}", case.name))?;
        ensure(outcome.verdict.matched, || {
            format!("{}: predicted\n{}differs from gold\n{}", case.name, outcome.predicted, case.gold)
        })?;
        let golden = dir.join("expected.sparql");
        if golden.exists() {
            let want = std::fs::read_to_string(&golden).map_err(|e| e.to_string())?;
            ensure(squash(&want) == squash(&outcome.query.text), || format!("{}: SPARQL text changed", case.name))?;
        }
        if case.name == "stadiums_without_concerts" {
            ensure(outcome.query.text.contains("MINUS"), || "DISCARD query has no MINUS".into())?;
        }
        passed += 1;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{passed}/{} examples match gold in {:.2?}", dirs.len(), start.elapsed()))
}

fn differential() -> Outcome {
    let start = Instant::now();
    let instances = generated();
    let mut ops = BTreeSet::new();
    let mut unions = BTreeSet::new();
    for (i, inst) in instances.iter().enumerate() {
        ensure(inst.schema.tables.len() <= 3, || format!("#{i}: too many tables"))?;
        ensure(inst.data.tables.values().all(|r| r.len() <= 20), || format!("#{i}: too many rows"))?;
        for s in inst.qdmr.steps() {
            ops.insert(s.op.kind());
            if let Some(kind) = union_kind(&inst.qdmr, &inst.schema, s.index) {
                unions.insert(match kind {
                    UnionKind::Horizontal => "horizontal",
                    UnionKind::Vertical => "vertical",
                    UnionKind::Aggregators { .. } => "aggregators",
                    UnionKind::AfterGroup => "after-group",
                });
            }
        }
        let describe = || format!("#{i} {:?}\n{}", inst.category, inst.qdmr);
        let (query, sparql) =
            execute(&inst.qdmr, &inst.schema, &inst.data).map_err(|e| format!("{}\n{e}", describe()))?;
        let reference = refeval(&inst.qdmr, &inst.schema, &inst.data).map_err(|e| format!("{}\n{e}", describe()))?;
        ensure(equivalent(&sparql, &reference).matched, || {
            format!("{}\n{}\nSPARQL result:\n{sparql}reference:\n{reference}", describe(), query.text)
        })?;
    }
    ensure(ops.len() == OpKind::ALL.len(), || format!("operators covered: {ops:?}"))?;
    ensure(unions.len() == 4, || format!("union variants covered: {unions:?}"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} instances agree, 10 operators, 4 union variants, {:.2?}", instances.len(), start.elapsed()))
}

/// Closed form: per row one self-link, one arc per non-null non-key cell
/// and one arc per foreign-key cell naming an existing row.
fn closed_form(schema: &Schema, data: &TableData) -> usize {
    let mut keys: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for t in &schema.tables {
        let k = t.key_index().unwrap();
        keys.insert(&t.name, data.rows(&t.name).iter().map(|r| r[k].as_ref().unwrap().lexical()).collect());
    }
    let mut n = 0;
    for t in &schema.tables {
        let k = t.key_index().unwrap();
        for row in data.rows(&t.name) {
            n += 1;
            for (i, cell) in row.iter().enumerate() {
                if i != k && cell.is_some() {
                    n += 1;
                }
            }
            for fk in &t.foreign_keys {
                let cell = &row[t.column_index(&fk.column).unwrap()];
                if cell.as_ref().is_some_and(|v| keys[fk.ref_table.as_str()].contains(&v.lexical())) {
                    n += 1;
                }
            }
        }
    }
    n
}

fn rdf() -> Outcome {
    let mut dbs = vec![fixture_db("teacher_school"), fixture_db("concert_singer")];
    dbs.extend(generated().into_iter().map(|i| (i.schema, i.data)));
    for (n, (schema, data)) in dbs.iter().enumerate() {
        let graph = to_rdf(schema, data).map_err(|e| e.to_string())?.graph;
        let expected = closed_form(schema, data);
        ensure(graph.len() == expected, || format!("db {n}: {} triples, closed form {expected}", graph.len()))?;
        let mut self_links: BTreeMap<Term, usize> = BTreeMap::new();
        for t in graph.triples() {
            if t.subject == t.object {
                *self_links.entry(t.subject.clone()).or_default() += 1;
            }
        }
        for t in &schema.tables {
            let k = t.key_index().unwrap();
            for row in data.rows(&t.name) {
                let node = Term::node(&t.name, row[k].clone().unwrap());
                let count = self_links.get(&node).copied().unwrap_or(0);
                ensure(count == 1, || format!("db {n}: {node} has {count} self-links"))?;
            }
        }
        let rows: usize = schema.tables.iter().map(|t| data.rows(&t.name).len()).sum();
        ensure(self_links.len() == rows, || format!("db {n}: self-links on non-row nodes"))?;
    }
    Ok(format!("{} databases: triple counts equal the closed form, one self-link per row", dbs.len()))
}

fn random_table(rng: &mut ChaCha8Rng, width: usize, rows: usize) -> ResultTable {
    let columns = (0..width).map(|i| ResultColumn::new(format!("c{i}"), Provenance::Unknown)).collect();
    let cell = |rng: &mut ChaCha8Rng| match rng.gen_range(0..10) {
        0 => None,
        1..=5 => Some(Value::number(rng.gen_range(0..4) as f64)),
        _ => Some(Value::text(["a", "b", "c"][rng.gen_range(0..3)])),
    };
    let rows = (0..rows).map(|_| (0..width).map(|_| cell(rng)).collect()).collect();
    ResultTable::new(columns, rows)
}

fn permuted(t: &ResultTable, cols: &[usize], rows: &[usize]) -> ResultTable {
    let columns = cols.iter().map(|&c| t.columns[c].clone()).collect();
    let body = rows.iter().map(|&r| cols.iter().map(|&c| t.rows[r][c].clone()).collect()).collect();
    ResultTable::new(columns, body)
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(testgen::seed_from_env());
    const PAIRS: usize = 100;

    for n in 0..PAIRS {
        let (width, len) = (rng.gen_range(1..=4), rng.gen_range(0..=8));
        let t = random_table(&mut rng, width, len);
        let mut cols: Vec<usize> = (0..t.width()).collect();
        let mut rows: Vec<usize> = (0..t.len()).collect();
        cols.shuffle(&mut rng);
        rows.shuffle(&mut rng);
        let p = permuted(&t, &cols, &rows);
        ensure(equivalent(&t, &p).matched, || format!("pair {n}: permutation not equivalent\n{t}\n{p}"))?;
        ensure(equivalent(&p, &t).matched, || format!("pair {n}: not symmetric"))?;
    }

    for n in 0..PAIRS {
        // Scores with a tied maximum; the gold lists every argmax row.
        let size = rng.gen_range(3..=8);
        let max = 10;
        let ties = rng.gen_range(2..=size.min(4));
        let mut scores: Vec<i32> = (0..size).map(|i| if i < ties { max } else { rng.gen_range(0..max) }).collect();
        scores.shuffle(&mut rng);
        let columns =
            || vec![ResultColumn::new("name", Provenance::Unknown), ResultColumn::new("score", Provenance::Unknown)];
        let row = |i: usize| vec![Some(Value::text(format!("n{i}"))), Some(Value::number(scores[i] as f64))];
        let argmax: Vec<usize> = (0..size).filter(|&i| scores[i] == max).collect();
        let gold = ResultTable::new(columns(), argmax.iter().map(|&i| row(i)).collect());
        let pick = *argmax.choose(&mut rng).unwrap();
        let mut single = ResultTable::new(columns(), vec![row(pick)]);
        single.limit1 = true;
        ensure(limit1_contained(&single, &gold) == Ok(true), || format!("case {n}: tied argmax rejected"))?;
        ensure(equivalent(&single, &gold).matched, || format!("case {n}: equivalent rejects tied argmax"))?;
        if let Some(other) = (0..size).find(|&i| scores[i] != max) {
            let mut wrong = ResultTable::new(columns(), vec![row(other)]);
            wrong.limit1 = true;
            ensure(limit1_contained(&wrong, &gold) == Ok(false), || format!("case {n}: non-argmax accepted"))?;
        }
    }

    for n in 0..PAIRS {
        // Sorted rows with repeated keys; each row carries a unique payload.
        let size = rng.gen_range(3..=10);
        let mut keys: Vec<i32> = (0..size).map(|_| rng.gen_range(0..4)).collect();
        keys.sort();
        if keys.windows(2).all(|w| w[0] != w[1]) {
            keys[1] = keys[0];
        }
        if keys.iter().all(|k| *k == keys[0]) {
            keys[size - 1] += 1;
        }
        let columns = vec![ResultColumn::new("k", Provenance::Unknown), ResultColumn::new("id", Provenance::Unknown)];
        let rows: Vec<Vec<_>> =
            (0..size).map(|i| vec![Some(Value::number(keys[i] as f64)), Some(Value::number(i as f64))]).collect();
        let mut a = ResultTable::new(columns.clone(), rows.clone());
        a.sort_meta =
            Some(SortMeta { keys: keys.iter().map(|k| Some(Value::number(*k as f64))).collect(), descending: false });

        let equal: Vec<(usize, usize)> =
            (0..size).flat_map(|i| (i + 1..size).map(move |j| (i, j))).filter(|&(i, j)| keys[i] == keys[j]).collect();
        let (i, j) = *equal.choose(&mut rng).unwrap();
        let mut swapped = rows.clone();
        swapped.swap(i, j);
        let b = ResultTable::new(columns.clone(), swapped);
        ensure(match_sorted(&a, &b), || format!("case {n}: equal-key swap rejected"))?;

        let cross: Vec<(usize, usize)> =
            (0..size).flat_map(|i| (i + 1..size).map(move |j| (i, j))).filter(|&(i, j)| keys[i] != keys[j]).collect();
        let (i, j) = *cross.choose(&mut rng).unwrap();
        let mut swapped = rows.clone();
        swapped.swap(i, j);
        let c = ResultTable::new(columns, swapped);
        ensure(!match_sorted(&a, &c), || format!("case {n}: cross-key swap accepted"))?;
    }
    Ok(format!("{PAIRS} pairs each: permutation invariance, tied argmax, sorted swaps"))
}

const NEGATIVES: &[(&str, ViolationKind)] = &[
    ("#1 SELECT[concert]\n#2 AGGREGATE[stadium, #1]", ViolationKind::AggregatorNotColumn),
    ("#1 SELECT[concert]\n#2 AGGREGATE[2014@concert.Year, #1]", ViolationKind::AggregatorNotColumn),
    (
        "#1 SELECT[concert.Year]\n#2 PROJECT[concert, #1]\n#3 GROUP[concert, #2, #1]",
        ViolationKind::AggregatorNotColumn,
    ),
    (
        "#1 SELECT[stadium.Name]\n#2 PROJECT[stadium, #1]\n#3 GROUP[Hampden Park@stadium.Name, #2, #1]",
        ViolationKind::AggregatorNotColumn,
    ),
    ("#1 SELECT[concert]\n#2 PROJECT[concert.Year, #1]\n#3 COMPARATIVE[#1, #2, =2014, concert.Theme]", ViolationKind::ColumnTypeMismatch),
    (
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 COMPARATIVE[#1, #2, >\"large\", stadium.Capacity]",
        ViolationKind::ColumnTypeMismatch,
    ),
    (
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 AGGREGATE[avg, #2]\n#4 COMPARATIVE[#1, #2, >#3, stadium.Name]",
        ViolationKind::ColumnTypeMismatch,
    ),
    (
        "#1 SELECT[concert]\n#2 PROJECT[concert.Theme, #1]\n#3 COMPARATIVE[#1, #2, =Free choice@concert.Theme, concert.Year]",
        ViolationKind::ColumnTypeMismatch,
    ),
    (
        "#1 SELECT[concert]\n#2 PROJECT[concert.Year, #1]\n#3 COMPARATIVE[#1, #2, =2014@concert.Year, stadium.Capacity]",
        ViolationKind::ValueNotFromColumn,
    ),
    (
        "#1 SELECT[concert]\n#2 PROJECT[concert.Stadium_ID, #1]\n#3 COMPARATIVE[#1, #2, =1@stadium.Stadium_ID, concert.Stadium_ID]",
        ViolationKind::ValueNotFromColumn,
    ),
    (
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Name, #1]\n#3 COMPARATIVE[#1, #2, =Glasgow@stadium.Location, stadium.Name]",
        ViolationKind::ValueNotFromColumn,
    ),
    ("#1 SELECT[concert]\n#2 PROJECT[concert.Year, #1]\n#3 COMPARATIVE[#1, #2, =2014@concert.Year]", ViolationKind::DatabaseValueWithoutColumn),
    (
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Location, #1]\n#3 COMPARATIVE[#1, #2, Glasgow@stadium.Location]",
        ViolationKind::DatabaseValueWithoutColumn,
    ),
    (
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 COMPARATIVE[#1, #2, >=5000@stadium.Capacity]",
        ViolationKind::DatabaseValueWithoutColumn,
    ),
];

fn validator() -> Outcome {
    let (schema, _) = fixture_db("concert_singer");
    let mut per_kind: BTreeMap<ViolationKind, usize> = BTreeMap::new();
    for (text, kind) in NEGATIVES {
        let q = parse_qdmr(text, &schema).map_err(|e| format!("{text}: {e}"))?;
        let report = validate(&q, &schema);
        ensure(report.kinds().contains(kind), || format!("{text}: expected {kind:?}, got {:?}", report.kinds()))?;
        *per_kind.entry(*kind).or_default() += 1;
    }
    ensure(per_kind.len() == 4 && per_kind.values().all(|&n| n >= 3), || format!("negatives per rule: {per_kind:?}"))?;

    let mut positives = 0;
    for dir in case_dirs() {
        let case = Case::load(&dir).map_err(|e| e.to_string())?;
        let report = validate(&case.qdmr, &case.schema);
        ensure(report.is_empty(), || format!("{}: {:?}", case.name, report.kinds()))?;
        positives += 1;
    }
    for inst in generated() {
        let report = validate(&inst.qdmr, &inst.schema);
        ensure(report.is_empty(), || format!("{}: {:?}", inst.qdmr, report.kinds()))?;
        positives += 1;
    }
    Ok(format!("{} negatives flagged, {positives} positives clean", NEGATIVES.len()))
}

/// Length of the shortest simple path by exhaustive search over an
/// adjacency built directly from the schema.
fn brute_force(schema: &Schema, from: &ColumnRef, to: &ColumnRef) -> Option<usize> {
    let mut adj: BTreeMap<ColumnRef, BTreeSet<ColumnRef>> = BTreeMap::new();
    let mut link = |a: ColumnRef, b: ColumnRef| {
        adj.entry(a.clone()).or_default().insert(b.clone());
        adj.entry(b).or_default().insert(a);
    };
    for t in &schema.tables {
        let key = schema.key_of(&t.name).unwrap();
        for c in &t.columns {
            let col = ColumnRef::new(&t.name, &c.name);
            if col != key {
                link(key.clone(), col);
            }
        }
        for fk in &t.foreign_keys {
            link(ColumnRef::new(&t.name, &fk.column), ColumnRef::new(&fk.ref_table, &fk.ref_column));
        }
    }
    fn dfs(
        adj: &BTreeMap<ColumnRef, BTreeSet<ColumnRef>>,
        at: &ColumnRef,
        to: &ColumnRef,
        seen: &mut Vec<ColumnRef>,
        best: &mut Option<usize>,
    ) {
        if at == to {
            let len = seen.len() - 1;
            *best = Some(best.map_or(len, |b| b.min(len)));
            return;
        }
        for next in adj.get(at).into_iter().flatten() {
            if !seen.contains(next) {
                seen.push(next.clone());
                dfs(adj, next, to, seen, best);
                seen.pop();
            }
        }
    }
    let mut best = None;
    dfs(&adj, from, to, &mut vec![from.clone()], &mut best);
    best
}

fn join_paths() -> Outcome {
    let mut schemas = vec![fixture_db("teacher_school").0, fixture_db("concert_singer").0];
    schemas.extend(generated().into_iter().take(50).map(|i| i.schema));
    let mut pairs = 0;
    for (n, schema) in schemas.iter().enumerate() {
        let graph = SchemaGraph::new(schema);
        let again = SchemaGraph::new(&schema.clone());
        for from in graph.columns() {
            for to in graph.columns() {
                let bfs = graph.shortest(from, to).ok();
                let oracle = brute_force(schema, from, to);
                ensure(bfs.as_ref().map(|p| p.len()) == oracle, || {
                    format!("schema {n}: {from} -> {to}: bfs {bfs:?}, brute force {oracle:?}")
                })?;
                ensure(again.shortest(from, to).ok() == bfs, || {
                    format!("schema {n}: {from} -> {to} not deterministic")
                })?;
                if let Some(p) = &bfs {
                    let nodes = p.nodes();
                    let distinct: BTreeSet<_> = nodes.iter().collect();
                    ensure(distinct.len() == nodes.len(), || format!("schema {n}: {p} is not simple"))?;
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} column pairs over {} schemas match brute force, deterministic", schemas.len()))
}

fn round_trips() -> Outcome {
    let mut items: Vec<(Schema, qdmr_sparql::GroundedQdmr)> = Vec::new();
    for dir in case_dirs() {
        let case = Case::load(&dir).map_err(|e| e.to_string())?;
        items.push((case.schema, case.qdmr));
    }
    let fixtures_len = items.len();
    items.extend(generated().into_iter().map(|i| (i.schema, i.qdmr)));
    for (schema, q) in &items {
        let text = q.to_string();
        let back = parse_qdmr(&text, schema).map_err(|e| format!("{text}\n{e}"))?;
        ensure(back == *q, || format!("QDMR round-trip changed\n{text}\n{back}"))?;
        ensure(back.to_string() == text, || format!("QDMR text changed\n{text}"))?;

        let sparql = transpile(q, schema).map_err(|e| e.to_string())?;
        let parsed = parse_sparql(&sparql.text).map_err(|e| format!("{}\n{e}", sparql.text))?;
        ensure(parsed.ast == sparql.ast, || format!("SPARQL AST round-trip changed\n{}", sparql.text))?;
        ensure(parsed.text == sparql.text, || format!("SPARQL text round-trip changed\n{}", sparql.text))?;
    }
    Ok(format!("{fixtures_len} fixtures and {} generated QDMR and SPARQL round-trips", items.len() - fixtures_len))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("paper examples", paper_examples),
        ("differential", differential),
        ("rdf", rdf),
        ("metric properties", metrics),
        ("validator", validator),
        ("join path", join_paths),
        ("round-trips", round_trips),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
