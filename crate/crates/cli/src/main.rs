//! `qdmr-sparql`: convert databases to RDF, transpile grounded QDMR to
//! SPARQL, run and verify queries, compare result tables and propose value
//! groundings for a question.
//!
//! Exit codes: 0 success, 1 mismatch, 2 input error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qdmr_sparql::linker::DEFAULT_TOP_K;
use qdmr_sparql::qdmr::{parse_qdmr, validate};
use qdmr_sparql::schema::ensure_key;
use qdmr_sparql::sparql::with_prefixes;
use qdmr_sparql::suite::{execute, load_gold, parse_bool, parse_key_values, run_suite};
use qdmr_sparql::testgen;
use qdmr_sparql::{
    equivalent, match_values, refeval, to_rdf, tokenize, transpile, GroundedQdmr, ResultTable, Schema, TableData,
};

#[derive(Parser)]
#[command(name = "qdmr-sparql", version, about = "Grounded QDMR to SPARQL over an RDF view of a relational database")]
struct Cli {
    /// File of `key = value` lines supplying defaults for any flag (for
    /// example `schema = db/schema.json`); relative paths are resolved
    /// against the file's directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the RDF graph of a database, one `S P O` triple per line.
    Convert {
        #[command(flatten)]
        db: DbArgs,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the SPARQL query for a grounded QDMR.
    Transpile {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        qdmr: Option<PathBuf>,
        /// Print a standalone query (with PREFIX declarations) and nothing
        /// else, for running on an external engine.
        #[arg(long)]
        emit_sparql_only: bool,
    },
    /// Execute a grounded QDMR and print the result as CSV.
    Run {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        qdmr: Option<PathBuf>,
    },
    /// Check SPARQL execution against the reference interpreter, or check a
    /// directory of cases against their gold results with `--suite`.
    Verify {
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        qdmr: Option<PathBuf>,
        /// Directory searched for cases holding `qdmr.txt` and `gold.csv`.
        #[arg(long, conflicts_with_all = ["schema", "data", "qdmr"])]
        suite: Option<PathBuf>,
    },
    /// Compare a predicted result with a gold result and print a JSON verdict.
    /// The prediction is a CSV (`--pred`) or a QDMR run on a database.
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, conflicts_with = "pred")]
        qdmr: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// The gold query kept one row of an argmax/argmin.
        #[arg(long)]
        gold_limit1: bool,
        /// Gold column the rows are sorted by.
        #[arg(long)]
        sort_key: Option<String>,
        /// Predicted column the rows are sorted by; defaults to `--sort-key`.
        #[arg(long)]
        pred_sort_key: Option<String>,
        /// The sort is descending.
        #[arg(long)]
        sort_desc: bool,
    },
    /// Rank database values by similarity to a question and print JSON.
    Link {
        #[arg(long)]
        question: Option<String>,
        #[command(flatten)]
        db: DbArgs,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Write random databases, QDMRs and reference gold results as a suite.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        /// Generator seed; defaults to `QDMR_SPARQL_SEED` or a fixed seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct DbArgs {
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory with one `<table>.csv` per table.
    #[arg(long)]
    data: Option<PathBuf>,
}

/// Flag values from the command line, falling back to the config file.
struct Settings {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings { values: BTreeMap::new(), base: PathBuf::new() });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let values = parse_key_values(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let values = values.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect();
        Ok(Settings { values, base: path.parent().map(Path::to_path_buf).unwrap_or_default() })
    }

    fn path(&self, given: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        given.or_else(|| self.values.get(key).map(|v| self.base.join(v)))
    }

    fn need_path(&self, given: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.path(given, key).ok_or_else(|| anyhow!("missing --{}", key.replace('_', "-")))
    }

    fn text(&self, given: Option<String>, key: &str) -> Option<String> {
        given.or_else(|| self.values.get(key).cloned())
    }

    fn flag(&self, given: bool, key: &str) -> Result<bool> {
        if given {
            return Ok(true);
        }
        match self.values.get(key) {
            Some(v) => parse_bool(v).ok_or_else(|| anyhow!("config: {key} = {v} is not a boolean")),
            None => Ok(false),
        }
    }

    fn number<T: std::str::FromStr>(&self, given: Option<T>, key: &str) -> Result<Option<T>> {
        match (given, self.values.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(v)) => v.parse().map(Some).map_err(|_| anyhow!("config: {key} = {v} is not a number")),
            (None, None) => Ok(None),
        }
    }

    /// The schema with a single-column key added to tables lacking one.
    fn schema(&self, given: Option<PathBuf>) -> Result<Schema> {
        let schema = Schema::load(&self.need_path(given, "schema")?)?;
        Ok(ensure_key(&schema, &TableData::empty(&schema)).0)
    }

    fn database(&self, db: DbArgs) -> Result<(Schema, TableData)> {
        let schema = Schema::load(&self.need_path(db.schema, "schema")?)?;
        let data = TableData::load_csv_dir(&schema, &self.need_path(db.data, "data")?)?;
        Ok(ensure_key(&schema, &data))
    }

    fn qdmr(&self, given: Option<PathBuf>, schema: &Schema) -> Result<GroundedQdmr> {
        let path = self.need_path(given, "qdmr")?;
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        parse_qdmr(&text, schema).with_context(|| path.display().to_string())
    }
}

/// Whether the command found what it checked for.
enum Outcome {
    Success,
    Mismatch,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn warn_violations(q: &GroundedQdmr, schema: &Schema) {
    for v in &validate(q, schema).violations {
        eprintln!("warning: {v}");
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let s = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Convert { db, out } => {
            let (schema, data) = s.database(db)?;
            let conversion = to_rdf(&schema, &data)?;
            for d in &conversion.dangling {
                eprintln!("warning: {d}");
            }
            let text = conversion.graph.to_lines();
            match s.path(out, "out") {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Command::Transpile { schema, qdmr, emit_sparql_only } => {
            let schema = s.schema(schema)?;
            let q = s.qdmr(qdmr, &schema)?;
            let query = transpile(&q, &schema)?;
            if s.flag(emit_sparql_only, "emit_sparql_only")? {
                println!("{}", with_prefixes(&query.text));
            } else {
                warn_violations(&q, &schema);
                println!("{}", query.text);
            }
        }
        Command::Run { db, qdmr } => {
            let (schema, data) = s.database(db)?;
            let q = s.qdmr(qdmr, &schema)?;
            warn_violations(&q, &schema);
            let (_, table) = execute(&q, &schema, &data)?;
            print!("{}", table.to_csv());
        }
        Command::Verify { db, qdmr, suite } => {
            if let Some(root) = s.path(suite, "suite") {
                let report = run_suite(&root)?;
                if report.total == 0 {
                    bail!("no cases under {}", root.display());
                }
                print_json(&report)?;
                return Ok(if report.matched == report.total { Outcome::Success } else { Outcome::Mismatch });
            }
            let (schema, data) = s.database(db)?;
            let q = s.qdmr(qdmr, &schema)?;
            let (_, sparql) = execute(&q, &schema, &data)?;
            let reference = refeval(&q, &schema, &data)?;
            let verdict = equivalent(&sparql, &reference);
            print_json(&verdict)?;
            return Ok(if verdict.matched { Outcome::Success } else { Outcome::Mismatch });
        }
        Command::Evaluate { pred, qdmr, schema, data, gold, gold_limit1, sort_key, pred_sort_key, sort_desc } => {
            let mut meta = BTreeMap::new();
            meta.insert("limit1".to_string(), s.flag(gold_limit1, "gold_limit1")?.to_string());
            let sort_desc = s.flag(sort_desc, "sort_desc")?;
            meta.insert("sort_desc".to_string(), sort_desc.to_string());
            let sort_key = s.text(sort_key, "sort_key");
            if let Some(k) = &sort_key {
                meta.insert("sort_key".to_string(), k.clone());
            }
            let gold = load_gold(&s.need_path(gold, "gold")?, &meta)?;
            let predicted = match s.path(pred, "pred") {
                Some(path) => {
                    let table = ResultTable::load_csv(&path)?;
                    match s.text(pred_sort_key, "pred_sort_key").or(sort_key) {
                        Some(k) => table.with_sort_column(&k, sort_desc, &path.display().to_string())?,
                        None => table,
                    }
                }
                None => {
                    let (schema, data) = s.database(DbArgs { schema, data })?;
                    let q = s.qdmr(qdmr, &schema).context("give --pred, or --qdmr with --schema and --data")?;
                    execute(&q, &schema, &data)?.1
                }
            };
            let verdict = equivalent(&predicted, &gold);
            print_json(&verdict)?;
            return Ok(if verdict.matched { Outcome::Success } else { Outcome::Mismatch });
        }
        Command::Link { question, db, top_k } => {
            let question = s.text(question, "question").ok_or_else(|| anyhow!("missing --question"))?;
            let k = s.number(top_k, "top_k")?.unwrap_or(DEFAULT_TOP_K);
            let (schema, data) = s.database(db)?;
            print_json(&match_values(&tokenize(&question), &schema, &data, k))?;
        }
        Command::Generate { out, count, seed } => {
            let root = s.need_path(out, "out")?;
            let count = s.number(count, "count")?.unwrap_or(testgen::Category::ALL.len());
            let seed = s.number(seed, "seed")?.unwrap_or_else(testgen::seed_from_env);
            generate(&root, count, seed)?;
        }
    }
    Ok(Outcome::Success)
}

/// One directory per instance, each a self-contained suite case.
fn generate(root: &Path, count: usize, seed: u64) -> Result<()> {
    for i in 0..count {
        let inst = testgen::instance(seed, i);
        let dir = root.join(format!("{i:04}"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("schema.json"), inst.schema.to_json())?;
        inst.data.write_csv_dir(&inst.schema, &dir.join("data"))?;
        std::fs::write(dir.join("qdmr.txt"), format!("{}\n", inst.qdmr))?;
        let gold = refeval(&inst.qdmr, &inst.schema, &inst.data)?;
        std::fs::write(dir.join("gold.csv"), gold.to_csv())?;
    }
    Ok(())
}

/// The error chain, skipping causes already quoted by the message above.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
