use proptest::prelude::*;

use qdmr_sparql::qdmr::parse_qdmr;
use qdmr_sparql::result::{Provenance, ResultColumn};
use qdmr_sparql::testgen;
use qdmr_sparql::value::{quote_string, unquote_prefix};
use qdmr_sparql::{equivalent, parse_sparql, standardize, transpile, ResultTable, Value};

fn cell() -> impl Strategy<Value = Option<Value>> {
    prop_oneof![
        Just(None),
        (-5i32..5).prop_map(|n| Some(Value::number(n as f64 / 2.0))),
        "[a-c ]{0,3}".prop_map(|s| Some(Value::text(s))),
        prop::sample::select(vec!["2014-01-02", "2015-3-4"]).prop_map(|s| Some(Value::text(s))),
    ]
}

fn table() -> impl Strategy<Value = ResultTable> {
    (1usize..4).prop_flat_map(|w| {
        prop::collection::vec(prop::collection::vec(cell(), w), 0..6).prop_map(move |rows| {
            let cols = (0..w).map(|i| ResultColumn::new(format!("c{i}"), Provenance::Unknown)).collect();
            ResultTable::new(cols, rows)
        })
    })
}

proptest! {
    #[test]
    fn equivalence_is_reflexive_and_symmetric(a in table(), b in table()) {
        prop_assert!(equivalent(&a, &a).matched);
        prop_assert_eq!(equivalent(&a, &b).matched, equivalent(&b, &a).matched);
    }

    #[test]
    fn standardize_is_idempotent(a in table()) {
        let once = standardize(&a);
        prop_assert_eq!(standardize(&once), once);
    }

    #[test]
    fn quoting_round_trips(s in ".{0,12}") {
        let quoted = quote_string(&s);
        prop_assert_eq!(unquote_prefix(&quoted), Some((s, quoted.len())));
    }

    #[test]
    fn generated_qdmrs_round_trip(seed in any::<u64>(), i in 0usize..13) {
        let inst = testgen::instance(seed, i);
        let text = inst.qdmr.to_string();
        prop_assert_eq!(parse_qdmr(&text, &inst.schema).unwrap(), inst.qdmr.clone());
        let sparql = transpile(&inst.qdmr, &inst.schema).unwrap();
        prop_assert_eq!(parse_sparql(&sparql.text).unwrap().ast, sparql.ast);
    }
}
