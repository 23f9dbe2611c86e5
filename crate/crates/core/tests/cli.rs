use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracelogic")).args(args).output().unwrap()
}

fn write(name: &str, body: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("tracelogic-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn fixtures_are_listed() {
    let out = run(&["fixtures"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for n in tracelogic::fixtures::names() {
        assert!(text.contains(n), "{n}");
    }
}

#[test]
fn parse_prints_a_spec_that_parses_again() {
    let p = write("ok.tlp", tracelogic::fixtures::source("tmn_secrets").unwrap());
    let out = run(&["parse", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8(out.stdout).unwrap();
    let again = tracelogic::dsl::parse(&printed).unwrap();
    assert_eq!(again, tracelogic::fixtures::fixture("tmn_secrets").unwrap());
}

#[test]
fn scoping_errors_exit_with_usage_status() {
    let p = write(
        "bad.tlp",
        "role r(B) as A {\n  send A,B to B\n    assert exists e in tr : subterm(A, msg(f))\n}\nscenario {\n  r(b) as a\n}\n",
    );
    let out = run(&["parse", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unbound event variable"));
    assert_eq!(run(&["verify", "/no/such/file.tlp"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--fixture", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--fixture", "tmn_secrets", "--jobs", "0"]).status.code(), Some(2));
}

#[test]
fn exit_status_carries_the_verdict() {
    assert_eq!(run(&["verify", "--quiet", "--fixture", "tmn_secrets"]).status.code(), Some(0));
    assert_eq!(run(&["verify", "--quiet", "--fixture", "tmn_mutual"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--quiet", "--fixture", "tmn_secrets", "--max-states", "1"]).status.code(), Some(3));
}

#[test]
fn json_reports_are_stable() {
    let args = ["verify", "--format", "json", "--fixture", "tmn_mutual", "--seed-order", "lex"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["status"], "exhausted");
    assert_eq!(v["options"]["order"], "lex");
    assert!(!v["violations"].as_array().unwrap().is_empty());
}
