use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdmr-sparql")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

#[test]
fn transpile_prints_the_state_query() {
    let o = run(&[
        "transpile",
        "--schema",
        &p("teacher_school/schema.json"),
        "--qdmr",
        &p("teacher_school/cases/states/qdmr.txt"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "SELECT ?State WHERE {\n  ?ID arc:school:State ?State .\n}\n");
}

#[test]
fn emitted_sparql_is_standalone() {
    let o = run(&[
        "transpile",
        "--schema",
        &p("teacher_school/schema.json"),
        "--qdmr",
        &p("teacher_school/cases/table1/qdmr.txt"),
        "--emit-sparql-only",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("PREFIX arc: <"));
    assert!(text.contains("GROUP BY ?State"));
    assert!(o.stderr.is_empty());
}

#[test]
fn run_prints_csv() {
    let o = run(&[
        "run",
        "--schema",
        &p("teacher_school/schema.json"),
        "--data",
        &p("teacher_school/data"),
        "--qdmr",
        &p("teacher_school/cases/table1/qdmr.txt"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "State,count\nCA,5\nNY,2\nTX,1\n");
}

#[test]
fn verify_matches_on_table_one() {
    let o = run(&[
        "verify",
        "--schema",
        &p("teacher_school/schema.json"),
        "--data",
        &p("teacher_school/data"),
        "--qdmr",
        &p("teacher_school/cases/table1/qdmr.txt"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["match"], true);
}

#[test]
fn verify_suite_reports_accuracy() {
    let o = run(&["verify", "--suite", &fixtures().display().to_string()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 6);
    assert_eq!(v["execution_accuracy"], 1.0);
}

#[test]
fn evaluate_identical_csvs_match() {
    let gold = p("concert_singer/cases/capacity_between/gold.csv");
    let o = run(&["evaluate", "--pred", &gold, "--gold", &gold]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["match"], true);
    assert!(v.get("rule_applied").is_some());
    assert!(v.get("column_permutation").is_some());
}

#[test]
fn evaluate_mismatch_exits_one() {
    let o = run(&[
        "evaluate",
        "--pred",
        &p("concert_singer/cases/capacity_between/gold.csv"),
        "--gold",
        &p("concert_singer/cases/most_concerts_year/gold.csv"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["match"], false);
}

#[test]
fn evaluate_runs_a_qdmr_against_limit1_gold() {
    let case = "concert_singer/cases/most_concerts_year";
    let o = run(&[
        "evaluate",
        "--qdmr",
        &p(&format!("{case}/qdmr.txt")),
        "--schema",
        &p("concert_singer/schema.json"),
        "--data",
        &p("concert_singer/data"),
        "--gold",
        &p(&format!("{case}/gold.csv")),
        "--gold-limit1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn evaluate_honours_the_sort_key() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.csv");
    let pred = dir.path().join("pred.csv");
    std::fs::write(&gold, "name,k\na,1\nb,1\nc,2\n").unwrap();
    std::fs::write(&pred, "name,k\nb,1\na,1\nc,2\n").unwrap();
    let (g, pr) = (gold.display().to_string(), pred.display().to_string());
    assert_eq!(run(&["evaluate", "--pred", &pr, "--gold", &g, "--sort-key", "k"]).status.code(), Some(0));
    std::fs::write(&pred, "name,k\nc,2\na,1\nb,1\n").unwrap();
    assert_eq!(run(&["evaluate", "--pred", &pr, "--gold", &g, "--sort-key", "k"]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", "--pred", &pr, "--gold", &g]).status.code(), Some(0));
}

#[test]
fn link_ranks_exact_values_first() {
    let o = run(&[
        "link",
        "--question",
        "How many concerts are there in year 2014?",
        "--schema",
        &p("concert_singer/schema.json"),
        "--data",
        &p("concert_singer/data"),
        "--top-k",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 3);
    assert_eq!(list[0]["score"], 1.0);
    assert_eq!(list[0]["value"]["value"]["lexical"], "2014");
}

#[test]
fn convert_writes_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.txt");
    let o = run(&[
        "convert",
        "--schema",
        &p("teacher_school/schema.json"),
        "--data",
        &p("teacher_school/data"),
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("<school:1> arc:school:ID <school:1>"));
    assert!(text.lines().count() > 13);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    let db = fixtures().join("teacher_school");
    std::fs::write(
        &config,
        format!("# defaults\nschema = {}\ndata = {}\n", db.join("schema.json").display(), db.join("data").display()),
    )
    .unwrap();
    let o =
        run(&["run", "--config", &config.display().to_string(), "--qdmr", &p("teacher_school/cases/table1/qdmr.txt")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "State,count\nCA,5\nNY,2\nTX,1\n");
}

#[test]
fn generated_suites_verify() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().display().to_string();
    let o = run(&["generate", "--out", &root, "--count", "26", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["verify", "--suite", &root]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 26);
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(run(&["run", "--schema", "missing.json", "--data", "x", "--qdmr", "y"]).status.code(), Some(2));
    assert_eq!(run(&["transpile"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let bad = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad.path(), "#1 SELECT[nowhere]\n").unwrap();
    let o =
        run(&["transpile", "--schema", &p("teacher_school/schema.json"), "--qdmr", &bad.path().display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let args = ["verify", "--suite", &fixtures().display().to_string()];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let link = [
        "link",
        "--question",
        "stadiums in Glasgow",
        "--schema",
        &p("concert_singer/schema.json"),
        "--data",
        &p("concert_singer/data"),
    ];
    assert_eq!(run(&link).stdout, run(&link).stdout);
}

#[test]
fn keyless_tables_gain_a_synthetic_key() {
    let dir = tempfile::tempdir().unwrap();
    let schema = dir.path().join("schema.json");
    std::fs::write(
        &schema,
        r#"{"tables":[{"name":"visit","columns":[{"name":"city","type":"text"},{"name":"year","type":"number"}],"foreign_keys":[]}]}"#,
    )
    .unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("data/visit.csv"), "city,year\nParis,2014\nRome,2015\nParis,2016\n").unwrap();
    let qdmr = dir.path().join("q.txt");
    std::fs::write(
        &qdmr,
        "#1 SELECT[visit]\n#2 PROJECT[visit.city, #1]\n#3 COMPARATIVE[#1, #2, =Paris]\n#4 AGGREGATE[count, #3]\n",
    )
    .unwrap();
    let o = run(&[
        "run",
        "--schema",
        &schema.display().to_string(),
        "--data",
        &dir.path().join("data").display().to_string(),
        "--qdmr",
        &qdmr.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "count\n2\n");
}
