use std::collections::BTreeMap;
use std::path::Path;

use qdmr_sparql::qdmr::parse_qdmr;
use qdmr_sparql::{refeval, ResultTable, Schema, TableData};

fn db() -> (Schema, TableData) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/concert_singer");
    let schema = Schema::load(&dir.join("schema.json")).unwrap();
    let data = TableData::load_csv_dir(&schema, &dir.join("data")).unwrap();
    (schema, data)
}

fn eval(qdmr: &str) -> ResultTable {
    let (schema, data) = db();
    refeval(&parse_qdmr(qdmr, &schema).unwrap(), &schema, &data).unwrap()
}

fn bag(t: &ResultTable) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    for r in &t.rows {
        *out.entry(format!("{r:?}")).or_insert(0) += 1;
    }
    out
}

const NAMES: &str = "#1 SELECT[stadium]\n#2 PROJECT[stadium.Location, #1]";

#[test]
fn vertical_union_is_bag_union() {
    let a = eval(&format!("{NAMES}\n#3 COMPARATIVE[#1, #2, =Glasgow]\n#4 PROJECT[stadium.Name, #3]"));
    let b = eval(&format!("{NAMES}\n#3 COMPARATIVE[#1, #2, !=Glasgow]\n#4 PROJECT[stadium.Name, #3]"));
    let u = eval(&format!(
        "{NAMES}\n#3 COMPARATIVE[#1, #2, =Glasgow]\n#4 COMPARATIVE[#1, #2, !=Glasgow]\n#5 UNION[#3, #4]\n#6 PROJECT[stadium.Name, #5]"
    ));
    let mut expected = bag(&a);
    for (k, n) in bag(&b) {
        *expected.entry(k).or_insert(0) += n;
    }
    assert_eq!(bag(&u), expected);
}

#[test]
fn discard_is_bag_difference_restricted_to_the_left() {
    let all = eval("#1 SELECT[stadium]\n#2 PROJECT[stadium.Name, #1]");
    let with = eval("#1 SELECT[stadium]\n#2 COMPARATIVE[#1, #1, concert]\n#3 PROJECT[stadium.Name, #2]");
    let without =
        eval("#1 SELECT[stadium]\n#2 COMPARATIVE[#1, #1, concert]\n#3 DISCARD[#1, #2]\n#4 PROJECT[stadium.Name, #3]");
    let mut expected = bag(&all);
    for k in bag(&with).keys() {
        expected.remove(k);
    }
    assert_eq!(bag(&without), expected);
}

#[test]
fn counting_concerts_in_2014_or_2015() {
    let t = eval(
        "#1 SELECT[concert]\n#2 PROJECT[concert.Year, #1]\n#3 COMPARATIVE[#1, #2, =2014]\n\
         #4 COMPARATIVE[#1, #2, =2015]\n#5 UNION[#3, #4]\n#6 AGGREGATE[count, #5]",
    );
    assert_eq!(t.to_csv(), "count\n7\n");
}

#[test]
fn table_one_counts_teachers_per_state() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/teacher_school");
    let schema = Schema::load(&dir.join("schema.json")).unwrap();
    let data = TableData::load_csv_dir(&schema, &dir.join("data")).unwrap();
    let q = parse_qdmr(
        "#1 SELECT[school.State]\n#2 PROJECT[teacher, #1]\n#3 GROUP[count, #2, #1]\n#4 UNION[#1, #3]",
        &schema,
    )
    .unwrap();
    let t = refeval(&q, &schema, &data).unwrap();
    let mut rows: Vec<String> = t.to_csv().lines().skip(1).map(String::from).collect();
    rows.sort();
    assert_eq!(rows, ["CA,5", "NY,2", "TX,1"]);
}

#[test]
fn select_over_an_empty_table_is_empty() {
    let (schema, mut data) = db();
    data.tables.insert("stadium".into(), Vec::new());
    let q = parse_qdmr("#1 SELECT[stadium]", &schema).unwrap();
    assert!(refeval(&q, &schema, &data).unwrap().is_empty());
}
