use std::path::Path;

use qdmr_sparql::qdmr::parse_qdmr;
use qdmr_sparql::sparql::Element;
use qdmr_sparql::suite::execute;
use qdmr_sparql::{refeval, transpile, Schema, TableData, TranspileError};

fn db(name: &str) -> (Schema, TableData) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    let schema = Schema::load(&dir.join("schema.json")).unwrap();
    let data = TableData::load_csv_dir(&schema, &dir.join("data")).unwrap();
    (schema, data)
}

fn sparql(schema: &Schema, qdmr: &str) -> String {
    transpile(&parse_qdmr(qdmr, schema).unwrap(), schema).unwrap().text
}

#[test]
fn single_select_is_one_triple_pattern() {
    let (schema, _) = db("teacher_school");
    let q = transpile(&parse_qdmr("#1 SELECT[school.State]", &schema).unwrap(), &schema).unwrap();
    assert_eq!(q.ast.pattern.elements.len(), 1);
    assert!(matches!(q.ast.pattern.elements[0], Element::Triple(_)));
}

#[test]
fn projection_across_the_foreign_key_uses_its_arc() {
    let (schema, _) = db("teacher_school");
    let text = sparql(&schema, "#1 SELECT[teacher]\n#2 PROJECT[school.State, #1]");
    assert!(text.contains("arc:teacher:School_ID:school:ID"), "{text}");
}

#[test]
fn same_table_projection_has_no_foreign_key_arc() {
    let (schema, _) = db("teacher_school");
    let text = sparql(&schema, "#1 SELECT[teacher]\n#2 PROJECT[teacher.Name, #1]");
    assert!(!text.contains("School_ID"), "{text}");
}

#[test]
fn aggregate_count_is_a_full_query() {
    let (schema, _) = db("concert_singer");
    let text = sparql(&schema, "#1 SELECT[concert]\n#2 AGGREGATE[count, #1]");
    assert!(text.starts_with("SELECT (COUNT("), "{text}");
}

#[test]
fn superlative_filters_on_an_aggregate_subquery() {
    let (schema, _) = db("concert_singer");
    let text = sparql(
        &schema,
        "#1 SELECT[concert.Year]\n#2 PROJECT[concert, #1]\n#3 GROUP[count, #2, #1]\n#4 SUPERLATIVE[max, #1, #3]",
    );
    assert!(text.contains("MAX("), "{text}");
    assert!(text.contains("GROUP BY"), "{text}");
    assert!(text.contains("FILTER(?"), "{text}");
}

#[test]
fn union_of_aggregates_over_one_pattern_is_one_select() {
    let (schema, data) = db("concert_singer");
    let qdmr = "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 AGGREGATE[avg, #2]\n#4 AGGREGATE[max, #2]\n#5 UNION[#3, #4]";
    let text = sparql(&schema, qdmr);
    assert_eq!(text.matches("SELECT").count(), 1, "{text}");
    assert!(text.contains("AVG(") && text.contains("MAX("), "{text}");
    let q = parse_qdmr(qdmr, &schema).unwrap();
    let (_, table) = execute(&q, &schema, &data).unwrap();
    assert_eq!((table.width(), table.len()), (2, 1));
}

#[test]
fn vertical_union_uses_the_union_keyword() {
    let (schema, _) = db("concert_singer");
    let text = sparql(
        &schema,
        "#1 SELECT[concert]\n#2 PROJECT[concert.Year, #1]\n#3 COMPARATIVE[#1, #2, =2014]\n#4 COMPARATIVE[#1, #2, =2015]\n#5 UNION[#3, #4]",
    );
    assert!(text.contains("UNION"), "{text}");
}

#[test]
fn discard_uses_minus() {
    let (schema, _) = db("concert_singer");
    let text = sparql(&schema, "#1 SELECT[stadium]\n#2 COMPARATIVE[#1, #1, concert]\n#3 DISCARD[#1, #2]");
    assert!(text.contains("MINUS"), "{text}");
}

#[test]
fn ref_valued_comparison_compares_two_variables() {
    let (schema, data) = db("concert_singer");
    let qdmr =
        "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 AGGREGATE[avg, #2]\n#4 COMPARATIVE[#1, #2, >#3]";
    let text = sparql(&schema, qdmr);
    assert!(text.contains("FILTER(?Capacity_2 > ?avg)"), "{text}");
    let q = parse_qdmr(qdmr, &schema).unwrap();
    let (_, table) = execute(&q, &schema, &data).unwrap();
    assert_eq!(table.len(), refeval(&q, &schema, &data).unwrap().len());
}

#[test]
fn like_is_a_case_insensitive_containment() {
    let (schema, data) = db("concert_singer");
    let qdmr = "#1 SELECT[stadium]\n#2 PROJECT[stadium.Name, #1]\n#3 COMPARATIVE[#1, #2, like \"PARK\"]\n#4 PROJECT[stadium.Name, #3]";
    let text = sparql(&schema, qdmr);
    assert!(text.contains("CONTAINS(LCASE("), "{text}");
    let (_, table) = execute(&parse_qdmr(qdmr, &schema).unwrap(), &schema, &data).unwrap();
    assert!(!table.is_empty());
    assert!(table.rows.iter().all(|r| r[0].as_ref().unwrap().lexical().to_lowercase().contains("park")));
}

#[test]
fn sort_appends_order_by() {
    let (schema, _) = db("concert_singer");
    let text = sparql(&schema, "#1 SELECT[stadium]\n#2 PROJECT[stadium.Capacity, #1]\n#3 SORT[#1, #2, desc]");
    assert!(text.contains("ORDER BY DESC(?Capacity)"), "{text}");
}

#[test]
fn distinct_flag_becomes_select_distinct() {
    let (schema, _) = db("concert_singer");
    let text = sparql(&schema, "#1 SELECT[concert.Year, distinct]");
    assert!(text.starts_with("SELECT DISTINCT"), "{text}");
}

#[test]
fn transpilation_is_deterministic() {
    let (schema, _) = db("concert_singer");
    let qdmr = "#1 SELECT[stadium]\n#2 COMPARATIVE[#1, #1, concert]\n#3 DISCARD[#1, #2]\n#4 PROJECT[stadium.Name, #3]";
    assert_eq!(sparql(&schema, qdmr), sparql(&schema, qdmr));
}

#[test]
fn disconnected_groundings_have_no_join_path() {
    let schema = Schema::from_json(
        r#"{"tables":[
        {"name":"a","columns":[{"name":"id","type":"number"},{"name":"x","type":"text"}],"primary_key":"id","foreign_keys":[]},
        {"name":"b","columns":[{"name":"id","type":"number"},{"name":"y","type":"text"}],"primary_key":"id","foreign_keys":[]}]}"#,
    )
    .unwrap();
    let q = parse_qdmr("#1 SELECT[a]\n#2 PROJECT[b.y, #1]", &schema).unwrap();
    assert!(matches!(transpile(&q, &schema), Err(TranspileError::NoJoinPath(_))));
}

#[test]
fn unions_outside_the_four_variants_are_rejected() {
    let (schema, _) = db("concert_singer");
    let q = parse_qdmr("#1 SELECT[concert]\n#2 AGGREGATE[count, #1]\n#3 UNION[#1, #2]", &schema).unwrap();
    assert!(matches!(transpile(&q, &schema), Err(TranspileError::UnsupportedShape { .. })));
}
