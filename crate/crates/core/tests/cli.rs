use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use slrkit::suite::{ANBN_GRAMMAR, RING_SID};

fn slrkit(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_slrkit"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const TRIANGLE: &str = "rel E 2\ntuple E 1 2\ntuple E 2 3\ntuple E 3 1\n";

#[test]
fn ring_verdicts() {
    let ring = "rel C 1\nrel I 2\ntuple C 1\ntuple C 2\ntuple I 1 2\ntuple I 2 3\ntuple I 3 1\n";
    let o = slrkit(&["check-slr", "-", RING_SID, "Ring()"], ring);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "true\n"));
    let o = slrkit(&["oracle-check", "-", RING_SID, "Ring()"], ring);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), "true\n"));
    let o = slrkit(&["check-slr", "-", RING_SID, "Chain(x, y)", "--store", "x=1,y=3"], "rel C 1\nrel I 2\ntuple C 1\ntuple C 2\ntuple I 1 2\ntuple I 2 3\n");
    assert_eq!(o.status.code(), Some(0));
    let o = slrkit(&["check-slr", "-", RING_SID, "Ring()"], "rel C 1\nrel I 2\ntuple I 1 2\ntuple I 2 1\n");
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(1), "false\n"));
}

#[test]
fn words_through_the_grammar_sid() {
    let sid = stdout(&slrkit(&["cfg2sid", ANBN_GRAMMAR], ""));
    for (word, expected) in [("ab", Some(0)), ("aabb", Some(0)), ("aab", Some(1)), ("ba", Some(1))] {
        let s = stdout(&slrkit(&["word2struct", word], ""));
        let o = slrkit(&["check-slr", "-", &sid, "A_S(b, e)"], &s);
        assert_eq!(o.status.code(), expected, "{word}");
    }
}

#[test]
fn treewidth_and_generators() {
    let o = slrkit(&["treewidth", "-"], TRIANGLE);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with('2'), "{}", stdout(&o));
    let sid = stdout(&slrkit(&["gen-twk", "1", "E/2"], ""));
    assert_eq!(sid.lines().count(), 9);
    let o = slrkit(&["gen-twk-mso", "1", "E/2", "!(exists x. E(x, x))", "--tuple-bound", "2"], "");
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("A_1_phi() <-"));
}

#[test]
fn second_order_checks() {
    let bipartite = "exists2 X/1. forall x y. E(x, y) -> ((X(x) & !X(y)) | (!X(x) & X(y)))";
    assert_eq!(slrkit(&["check-so", "-", bipartite], TRIANGLE).status.code(), Some(1));
    assert_eq!(slrkit(&["check-so", "-", bipartite], "rel E 2\ntuple E 1 2\ntuple E 2 3\n").status.code(), Some(0));
    let o = slrkit(&["--json", "translate-so", RING_SID, "Ring()", "--emit-stats"], "");
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verb"], "translate-so");
    assert!(v["output"].as_str().unwrap().contains("exists"));
}

#[test]
fn isomorphism() {
    let shifted = "rel E 2\ntuple E 7 8\ntuple E 8 9\ntuple E 9 7\n";
    let path = std::env::temp_dir().join(format!("slrkit-cli-{}.txt", std::process::id()));
    std::fs::write(&path, shifted).unwrap();
    let o = slrkit(&["iso", "-", path.to_str().unwrap()], TRIANGLE);
    std::fs::remove_file(&path).unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().collect::<Vec<_>>(), ["true", "1 -> 7", "2 -> 8", "3 -> 9"]);
}

#[test]
fn errors_exit_with_two() {
    let o = slrkit(&["check-slr", "-", "A() <- E(x ;", "A()"], TRIANGLE);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(slrkit(&["gen-twk", "one", "E/2"], "").status.code(), Some(2));
    assert_eq!(slrkit(&["suite", "--criterion", "11"], "").status.code(), Some(2));
}
