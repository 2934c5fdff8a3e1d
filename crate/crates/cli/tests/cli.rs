use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value as Json;
use xrl::state::{State, Value};
use xrl::syntax::parser::{parse_expr_with, ParseCtx};
use xrl::syntax::parse_program;
use xrl::wd::eval_a2;

fn corpus(f: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/corpus")
        .join(f)
        .to_string_lossy()
        .into_owned()
}

fn xrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xrl")).args(args).output().unwrap()
}

fn json(o: &Output) -> Json {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&o.stdout))
    })
}

#[test]
fn missing_file_is_a_usage_error() {
    let o = xrl(&["check", "/nonexistent.xrl", "/nonexistent.xrlproof"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(xrl(&["check"]).status.code(), Some(2));
    assert_eq!(xrl(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn looper_checks() {
    let o = xrl(&["check", &corpus("looper.xrl"), &corpus("looper.xrlproof")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let j = json(&o);
    assert_eq!(j["schema"], "xrl-report/1");
    assert_eq!(j["ok"], true);
}

#[test]
fn broken_certificate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.xrlproof");
    let src = std::fs::read_to_string(corpus("looper.xrlproof")).unwrap();
    std::fs::write(&bad, src.replace("this.spin@Loop()", "this.spin@Loop() + 1")).unwrap();
    let o = xrl(&["check", &corpus("looper.xrl"), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["ok"], false);
}

#[test]
fn countdown_checks_and_a_looping_variant_fails_its_measure() {
    let o = xrl(&["check", &corpus("countdown.simple"), &corpus("countdown.simpleproof")]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("loop.simple");
    let proof = dir.path().join("loop.simpleproof");
    let src = std::fs::read_to_string(corpus("countdown.simple")).unwrap();
    let pf = std::fs::read_to_string(corpus("countdown.simpleproof")).unwrap();
    std::fs::write(&prog, src.replace("p(x - 1)", "p(x)")).unwrap();
    std::fs::write(&proof, pf.replace("p(x - 1)", "p(x)")).unwrap();
    let o = xrl(&["check", prog.to_str().unwrap(), proof.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let j = json(&o);
    let failed: Vec<&str> = j["obligations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["status"] == "fail")
        .map(|v| v["id"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["p/T.0.1.0:measure"]);
}

fn run_chain(extra: &[&str]) -> Output {
    let (prog, cert, state) = (corpus("pizza.xrl"), corpus("pizza.xrlproof"), corpus("anchovy_chain.state.json"));
    let mut args = vec!["run", &prog, &cert, "--method", "Anchovy.remA", "--state", &state];
    args.extend_from_slice(extra);
    xrl(&args)
}

#[test]
fn run_removes_anchovies_without_raising_the_price() {
    let o = run_chain(&[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = json(&o);
    assert_eq!(j["outcome"], "ok");
    let t = State::from_json(&j["state"]).unwrap();
    let p = parse_program(&std::fs::read_to_string(corpus("pizza.xrl")).unwrap()).unwrap();
    let price = parse_expr_with("ret.price@Pizza()", &ParseCtx::of_program(&p)).unwrap();
    let got = eval_a2(&p, &price, &t).unwrap();
    assert_eq!(got, Value::Nat(3));
    assert!(got.as_nat() <= t.get("p").as_nat());
}

#[test]
fn fuel_on_a_total_run_is_a_usage_error() {
    assert_eq!(run_chain(&["--fuel", "10"]).status.code(), Some(2));
    assert_eq!(run_chain(&["--partial", "--fuel", "0"]).status.code(), Some(0));
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    let o = run_chain(&["--trace", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let events: Vec<Json> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!events.is_empty());
    for e in &events {
        for k in ["node", "rule", "entryHead", "reducedMeasure", "monitors"] {
            assert!(e.get(k).is_some(), "{k} missing from {e}");
        }
    }
    let entries = events.iter().filter(|e| !e["node"].as_str().unwrap().contains('.')).count();
    assert_eq!(entries, 5);
}

#[test]
fn violated_precondition_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut s: Json = serde_json::from_str(&std::fs::read_to_string(corpus("anchovy_chain.state.json")).unwrap()).unwrap();
    s["stack"]["p"] = Json::from(9);
    std::fs::write(&path, s.to_string()).unwrap();
    let (prog, cert) = (corpus("pizza.xrl"), corpus("pizza.xrlproof"));
    let o = xrl(&["run", &prog, &cert, "--method", "Anchovy.remA", "--state", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let j = json(&o);
    assert_eq!(j["outcome"], "monitor_violation");
    assert_eq!(j["kind"], "PRE");
}

#[test]
fn looper_times_out() {
    let o = xrl(&[
        "run",
        &corpus("looper.xrl"),
        &corpus("looper.xrlproof"),
        "--method",
        "Spinner.spin",
        "--state",
        &corpus("spinner.state.json"),
        "--partial",
        "--fuel",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["outcome"], "timeout");
}

#[test]
fn countdown_runs_with_an_entry_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("entries.jsonl");
    let o = xrl(&[
        "run",
        &corpus("countdown.simple"),
        &corpus("countdown.simpleproof"),
        "--method",
        "p",
        "--state",
        &corpus("countdown.state.json"),
        "--trace",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ms: Vec<u64> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Json>(l).unwrap()["reducedMeasure"].as_u64().unwrap())
        .collect();
    assert_eq!(ms, (0..=100).rev().collect::<Vec<_>>());
}

#[test]
fn diff_with_zero_count_is_empty() {
    let o = xrl(&["diff", &corpus("pizza.xrl"), &corpus("pizza.xrlproof"), "--count", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let j = json(&o);
    assert_eq!(j["schema"], "xrl-diff/1");
    assert_eq!(j["disagreements"], 0);
    assert!(j["first"].is_null());
}

#[test]
fn diff_reports_are_byte_stable() {
    let args = ["diff", &corpus("pizza.xrl"), &corpus("pizza.xrlproof"), "--count", "15", "--seed", "2"];
    let (a, b) = (xrl(&args), xrl(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn obligations_are_listed() {
    let o = xrl(&["obligations", &corpus("pizza.xrl"), &corpus("pizza.xrlproof")]);
    assert_eq!(o.status.code(), Some(0));
    let j = json(&o);
    assert_eq!(j["schema"], "xrl-obligations/1");
    let obs = j["obligations"].as_array().unwrap();
    assert!(obs.iter().any(|o| o["kind"] == "TOTAL_ABSTRACTION"));
    assert!(obs.iter().all(|o| o.get("statement").is_some()));
}

#[test]
fn fmt_is_a_fixed_point() {
    let once = xrl(&["fmt", &corpus("pizza.xrl")]);
    assert_eq!(once.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.xrl");
    std::fs::write(&path, &once.stdout).unwrap();
    let twice = xrl(&["fmt", path.to_str().unwrap()]);
    assert_eq!(once.stdout, twice.stdout);
}
