mod common;

use common::*;
use percheck_core::io::{
    contingency_csv_string, export_explicit_chain, labels_path, load_explicit_chain, parse_contingency_csv,
    parse_eps_grid, predicate_from_json, predicate_to_json, read_summary, write_summary, DENSE_SUMMARY_LIMIT,
};
use percheck_core::linprog::AffinePredicate;
use percheck_core::summary::summarize;
use percheck_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn explicit_chains_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let n = rng.gen_range(1..=12);
        let m = random_chain(&mut rng, n, 4);
        let path = dir.path().join(format!("c{i}.tra"));
        export_explicit_chain(&m, &path).unwrap();
        assert!(labels_path(&path).exists());
        let back = load_explicit_chain(&path).unwrap();
        assert_eq!(back.transitions(), m.transitions());
        assert_eq!(back.space().labels(), m.space().labels());
    }
}

#[test]
fn summaries_round_trip_in_both_layouts() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [3, DENSE_SUMMARY_LIMIT + 1] {
        let m = random_chain(&mut rng, n, 3);
        let c = summarize(&m, 3).unwrap();
        let states = m.space().non_error_labels().to_vec();
        let path = dir.path().join(format!("s{n}.json"));
        write_summary(&path, &c, &states).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.contains("\"a_rows\""), n > DENSE_SUMMARY_LIMIT);
        let (back, labels) = read_summary(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(labels, states);
    }
}

#[test]
fn contingency_csv_round_trips() {
    let text = "state,a,b\ns1,964,44\ns2,0,3\n";
    let cm = parse_contingency_csv(text).unwrap();
    assert_eq!(cm.counts(), &[vec![964, 44], vec![0, 3]]);
    let again = parse_contingency_csv(&contingency_csv_string(&cm)).unwrap();
    assert_eq!(again, cm);
    assert!(matches!(parse_contingency_csv("state,a\ns1,-4\n"), Err(Error::NegativeCount { line: 2, .. })));
}

#[test]
fn predicates_round_trip() {
    let states: Vec<String> = vec!["s1".into(), "s2".into()];
    let p = AffinePredicate::single(vec![1.0, 0.0], 0.7).with(vec![0.1, 0.30000000000000004], 0.25);
    let back = predicate_from_json(&predicate_to_json(&p), &states).unwrap();
    assert_eq!(back, p);
    let by_name = predicate_from_json(r#"{"format_version":1,"constraints":[{"terms":{"s2":1},"theta":"0.5"}]}"#, &states).unwrap();
    assert_eq!(by_name, AffinePredicate::single(vec![0.0, 1.0], 0.5));
}

#[test]
fn eps_grid_matches_the_default() {
    let g = parse_eps_grid("0:0.99:0.01").unwrap();
    assert_eq!(g, percheck_core::analysis::default_eps_grid());
    assert_eq!(parse_eps_grid("0.5:0.5:0.1").unwrap(), vec![0.5]);
    assert!(parse_eps_grid("1:0:0.1").is_err());
}
