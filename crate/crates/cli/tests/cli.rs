use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tactic-forge")).args(args).output().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["eval-knn", "--no-such-flag", "x.jsonl"]).status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_corpus_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"file\":\"A.v\",\"deps\":[\"Missing.v\"]}\n").unwrap();
    let out = run(&["stats", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_corpus_is_an_input_error() {
    assert_eq!(run(&["ingest", "/nonexistent/corpus.jsonl"]).status.code(), Some(2));
}

#[test]
fn search_proves_a_demo_lemma() {
    let demo = concat!(env!("CARGO_MANIFEST_DIR"), "/demo");
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let rec = run(&["record", "--rules", &format!("{demo}/rules.json"), &format!("{demo}/scripts.jsonl"), "--out", pairs.to_str().unwrap()]);
    assert!(rec.status.success(), "{}", String::from_utf8_lossy(&rec.stderr));
    let out = run(&["search", pairs.to_str().unwrap(), "--lemma", "basics_3", "--rules", &format!("{demo}/rules.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
