use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use reoc::automata::isomorphic;
use reoc::export::import_json;
use reoc::fixtures;
use reoc::runtime::Event;

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn reoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reoc"))
        .args(args)
        .env_remove("REOC_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("reoc-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Data values on `D` firings, in log order.
fn deliveries(out: &str) -> Vec<String> {
    out.lines()
        .filter_map(Event::parse)
        .filter_map(|e| match e {
            Event::Fire { sync, data, .. } if sync.contains("D") => Some(data["D"].to_string()),
            _ => None,
        })
        .collect()
}

#[test]
fn check_reports_exit_codes() {
    assert_eq!(code(&reoc(&["check", &fixture("merger.reo")])), 0);

    let bad = scratch("garbage.reo");
    fs::write(&bad, "connector X {\n  nodes { boundary A B }\n  channels { sync A => B; }\n}\n").unwrap();
    let o = reoc(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":3:22:"), "{}", stderr(&o));

    let invalid = scratch("mixed.reo");
    fs::write(&invalid, "connector X {\n  nodes { boundary A B C }\n  channels { sync A -> B; sync B -> C; }\n}\n")
        .unwrap();
    let o = reoc(&["check", invalid.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("boundary node B is mixed"), "{}", stderr(&o));

    assert_eq!(code(&reoc(&["check", &fixture("missing.reo")])), 2);
}

#[test]
fn compile_json_is_the_merger_automaton() {
    let o = reoc(&["compile", &fixture("merger.reo"), "--emit", "json"]);
    assert_eq!(code(&o), 0);
    let a = import_json(&stdout(&o)).unwrap();
    assert!(isomorphic(&a.erase_data(), &fixtures::merger_automaton()).is_some());
}

#[test]
fn compile_dot_respects_hiding() {
    let o = reoc(&["compile", &fixture("merger.reo"), "--emit", "dot", "--hide", "none"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("{A,C}"));

    let o = reoc(&["compile", &fixture("sequencer.reo"), "--emit", "dot", "--hide", "internal"]);
    let dot = stdout(&o);
    assert_eq!(dot.matches("[shape=circle]").count(), 4);
    assert_eq!(dot.lines().filter(|l| l.contains("\" -> \"")).count(), 6);
    assert!(dot.contains("[A]=\\\"foo\\\""), "{dot}");
}

#[test]
fn compile_writes_to_out_and_reports_io_errors() {
    let out = scratch("alternator.json");
    let o = reoc(&["compile", &fixture("alternator.reo"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());
    let a = import_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(isomorphic(&a.erase_data(), &fixtures::alternator_automaton()).is_some());

    // analyze and trace accept the artifact
    let o = reoc(&["analyze", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("states: 4\n"));

    let nowhere = scratch("no/such/dir/x.json");
    assert_eq!(code(&reoc(&["compile", &fixture("merger.reo"), "--out", nowhere.to_str().unwrap()])), 2);
}

#[test]
fn analyze_counts_and_deadlocks() {
    let o = reoc(&["analyze", &fixture("merger.reo")]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("states: 2\ntransitions: 3\n"), "{text}");

    let o = reoc(&["analyze", &fixture("alternator.reo")]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("deadlocks: 0\n"));

    let o = reoc(&["analyze", &fixture("deadlock.reo")]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("deadlock states: q0\n"), "{}", stdout(&o));
}

#[test]
fn trace_listing() {
    let o = reoc(&["trace", &fixture("merger.reo"), "--depth", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "{A,C} {A=\"x\",C=\"x\"}\n{B,C} {B=\"x\",C=\"x\"}\n");

    let o = reoc(&["trace", &fixture("merger.reo"), "--depth", "0"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty());

    assert_eq!(code(&reoc(&["trace", &fixture("merger.reo"), "--depth", "9"])), 1);
    assert_eq!(code(&reoc(&["trace", &fixture("merger.reo"), "--depth", "4", "--cap", "3"])), 4);
}

#[test]
fn trace_shows_the_wasted_turn() {
    let args = ["trace", &fixture("sequencer.reo"), "--depth", "2", "--pool", "foo,bar", "--hide", "internal"];
    let o = reoc(&args);
    assert_eq!(code(&o), 0);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(lines.contains(&"{A} {A=\"bar\"} ; {B} {B=\"foo\"}".to_string()), "{lines:?}");
    assert!(lines.contains(&"{A} {A=\"foo\"} ; {D} {D=\"foo\"}".to_string()));
    assert_eq!(stdout(&reoc(&args)), stdout(&o));
}

#[test]
fn run_merger_delivers_everything() {
    let o = reoc(&["run", "--demo", "merger", "--producers", "2", "--items", "100", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("produced: 200\n"));
    assert!(out.contains("delivered: 200\n"));
    assert!(out.contains("fired: 400\n"));
    let mut got = deliveries(&out);
    got.sort();
    let mut want: Vec<String> = (0..2)
        .flat_map(|k| (0..100).map(move |i| format!("\"P{k}-{i}\"")))
        .collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn run_alternator_alternates() {
    let o = reoc(&["run", "--demo", "alternator", "--items", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = deliveries(&stdout(&o));
    let want: Vec<String> = (0..5)
        .flat_map(|i| [format!("\"P0-{i}\""), format!("\"P1-{i}\"")])
        .collect();
    assert_eq!(got, want);
}

#[test]
fn run_sequencer_loses_bar() {
    let o = reoc(&["run", "--demo", "sequencer", "--items", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut got = deliveries(&stdout(&o));
    got.sort();
    assert_eq!(got, ["\"P1-0\"", "\"P1-1\"", "\"P1-2\"", "\"P1-3\"", "\"foo\"", "\"foo\""]);
    assert!(stdout(&o).contains("produced: 8\n"));
}

#[test]
fn run_accepts_files_and_is_deterministic_when_serial() {
    let args = ["run", "--demo", &fixture("merger.reo"), "--items", "6", "--seed", "3", "--serial"];
    let a = reoc(&args);
    let b = reoc(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));

    let seeded = |s: &str| stdout(&reoc(&["run", "--demo", "merger", "--items", "20", "--seed", s, "--serial"]));
    assert_eq!(seeded("1"), seeded("1"));
}

#[test]
fn run_errors() {
    let o = reoc(&["run", "--demo", "alternator", "--producers", "1", "--items", "1", "--timeout", "1"]);
    assert_eq!(code(&o), 5);
    assert_eq!(code(&reoc(&["run", "--demo", "nosuchdemo"])), 2);
    assert_eq!(code(&reoc(&["run", "--demo", "merger", "--items", "0"])), 1);
    assert_eq!(code(&reoc(&["run", "--demo", &fixture("deadlock.reo")])), 1);
    assert_eq!(code(&reoc(&["frobnicate"])), 1);
    assert_eq!(code(&reoc(&["--help"])), 0);
}

#[test]
fn event_log_goes_to_stderr() {
    let o = Command::new(env!("CARGO_BIN_EXE_reoc"))
        .args(["run", "--demo", "merger", "--items", "2"])
        .env("REOC_LOG", "events")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let fires = stderr(&o).lines().filter(|l| l.starts_with("FIRE ")).count();
    assert_eq!(fires, 8);
}
