//! The eager-send and twin-role reductions must not lose violations: every
//! violation of the unreduced search reappears, up to where sends sit in the
//! trace and how intruder atoms are numbered.

use std::collections::BTreeSet;

use tracelogic::dsl::parse;
use tracelogic::engine::{search, SearchOptions, Violation};
use tracelogic::fixtures::source;

fn with_scenario(fixture: &str, scenario: &str) -> tracelogic::model::Scenario {
    let src = source(fixture).unwrap();
    let roles = &src[..src.find("scenario {").unwrap()];
    parse(&format!("{roles}{scenario}")).unwrap().to_scenario().unwrap()
}

/// Fresh atoms all read as `?`.
fn blur(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let starts = chars[i] == 'n'
            && chars.get(i + 1) == Some(&'i')
            && chars.get(i + 2).is_some_and(|c| c.is_ascii_digit())
            && (i == 0 || !chars[i - 1].is_alphanumeric());
        if starts {
            out.push('?');
            i += 2;
            while chars.get(i).is_some_and(|c| c.is_ascii_digit()) {
                i += 1;
            }
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

type Shape = (String, usize, Vec<String>, String, String);

fn shape(v: &Violation) -> Shape {
    let mut events: Vec<String> = v.trace.events.iter().map(|e| blur(&e.to_string())).collect();
    let last = events.last().cloned().unwrap_or_default();
    events.sort();
    (v.role_label.clone(), v.action_index, events, last, blur(&v.instantiated.to_string()))
}

fn shapes(scn: &tracelogic::model::Scenario, reduced: bool) -> BTreeSet<Shape> {
    let opts = SearchOptions { stop_at_first: false, eager_sends: reduced, symmetry: reduced, ..SearchOptions::default() };
    search(scn, &opts).violations.iter().map(shape).collect()
}

fn assert_same(scn: &tracelogic::model::Scenario) {
    let full = shapes(scn, false);
    let reduced = shapes(scn, true);
    assert!(!full.is_empty());
    let missing: Vec<_> = full.difference(&reduced).collect();
    assert!(missing.is_empty(), "lost by the reductions: {missing:#?}");
    assert_eq!(full, reduced);
}

#[test]
fn mutual_authentication_with_one_server() {
    assert_same(&with_scenario(
        "tmn_mutual",
        "scenario {\n  initiator(s, b, ta, sa, r1) as a\n  responder(s, _, tb, sb, r2) as b\n  server(a, b, sa, sb) as s\n}\n",
    ));
}

#[test]
fn freshness_with_twin_servers() {
    assert_same(&with_scenario(
        "tmn_timestamps",
        "scenario {\n  initiator(s, b, ta, r1) as a\n  server(a, b) as s\n  server(a, b) as s\n}\n",
    ));
}
