//! Run reports: human-readable text and a stable JSON form.

use std::fmt::Write as _;
use std::time::Duration;

use serde::ser::{Serialize, SerializeMap, SerializeSeq, Serializer};
use serde_json::{json, Map, Value};

use crate::engine::{BranchOrder, SearchOptions, SearchOutcome, Status, Violation};
use crate::model::{Direction, Event, Scenario};
use crate::term::Term;

pub struct RunReport<'a> {
    /// Where the specification came from, e.g. a path or `fixture:tmn_original`.
    pub source: String,
    pub scenario: &'a Scenario,
    pub options: &'a SearchOptions,
    pub outcome: &'a SearchOutcome,
    pub elapsed: Duration,
}

impl RunReport<'_> {
    pub fn found_nothing(&self) -> bool {
        self.outcome.status == Status::Exhausted && self.outcome.violations.is_empty()
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let total: usize = self.scenario.roles.iter().map(|r| r.actions.len()).sum();
        let _ = writeln!(out, "scenario {} ({} roles, {} actions)", self.source, self.scenario.roles.len(), total);
        for (i, r) in self.scenario.roles.iter().enumerate() {
            let _ = writeln!(out, "  [{i}] {} as {}: {} actions", r.label, r.identity, r.actions.len());
        }
        let o = self.options;
        let _ = writeln!(
            out,
            "options: {}, order {}, max states {}",
            if o.stop_at_first { "first violation" } else { "all violations" },
            order_name(o.order),
            o.max_states.map_or("none".to_string(), |n| n.to_string())
        );
        let s = &self.outcome.stats;
        let _ = writeln!(
            out,
            "explored {} states, {} solver calls ({} steps), {} candidate failures in {:.3} s",
            s.states,
            s.solver_calls,
            s.solver_steps,
            s.candidates,
            self.elapsed.as_secs_f64()
        );
        for (n, v) in self.outcome.violations.iter().enumerate() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "violation {}: {} [{}] action {} after {} events",
                n + 1,
                v.role_label,
                v.role_index,
                v.action_index + 1,
                v.position
            );
            let _ = writeln!(out, "  formula: {}", v.formula);
            let _ = writeln!(out, "  fails as: {}", v.instantiated);
            let b = bindings(v);
            if !b.is_empty() {
                let parts: Vec<String> = b.iter().map(|(k, t)| format!("{k} = {t}")).collect();
                let _ = writeln!(out, "  bindings: {}", parts.join(", "));
            }
            for line in v.render() {
                let _ = writeln!(out, "    {line}");
            }
        }
        let _ = writeln!(out);
        let n = self.outcome.violations.len();
        let verdict = match (self.outcome.status, n) {
            (Status::Exhausted, 0) => "status: exhausted, no attack found".to_string(),
            (Status::Exhausted, _) if self.options.stop_at_first => "status: stopped at the first violation".to_string(),
            (Status::Exhausted, n) => format!("status: exhausted, {n} violation(s)"),
            (Status::Capped, 0) => "status: capped before exhaustion, no violation among the explored states".to_string(),
            (Status::Capped, n) => format!("status: capped before exhaustion, {n} violation(s) so far"),
        };
        let _ = writeln!(out, "{verdict}");
        out
    }

    /// The JSON report as a value tree. Prefer serializing the report
    /// directly for large outputs; that streams the violations.
    pub fn json(&self) -> Value {
        serde_json::to_value(self).expect("serializable")
    }

    fn scenario_json(&self) -> Value {
        let roles: Vec<Value> = self
            .scenario
            .roles
            .iter()
            .map(|r| json!({ "label": r.label, "identity": r.identity.to_string(), "actions": r.actions.len() }))
            .collect();
        json!({
            "source": self.source,
            "roles": roles,
            "initial_knowledge": self.scenario.initial_knowledge.iter().map(Term::to_string).collect::<Vec<_>>(),
        })
    }

    fn options_json(&self) -> Value {
        let o = self.options;
        json!({
            "all": !o.stop_at_first,
            "max_states": o.max_states,
            "order": order_name(o.order),
            "continue_after_violation": o.continue_after_violation,
        })
    }

    fn stats_json(&self) -> Value {
        let s = &self.outcome.stats;
        json!({
            "states": s.states,
            "solver_calls": s.solver_calls,
            "solver_steps": s.solver_steps,
            "candidates": s.candidates,
        })
    }
}

/// Top-level keys {scenario, options, violations, stats, status}, emitted in
/// sorted order. Deterministic for fixed inputs and options: wall time and
/// the number of worker threads are left out.
impl Serialize for RunReport<'_> {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut m = ser.serialize_map(Some(5))?;
        m.serialize_entry("options", &self.options_json())?;
        m.serialize_entry("scenario", &self.scenario_json())?;
        m.serialize_entry("stats", &self.stats_json())?;
        m.serialize_entry("status", self.outcome.status.as_str())?;
        m.serialize_entry("violations", &Violations(&self.outcome.violations))?;
        m.end()
    }
}

struct Violations<'a>(&'a [Violation]);

impl Serialize for Violations<'_> {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(self.0.len()))?;
        for v in self.0 {
            seq.serialize_element(&violation_json(v))?;
        }
        seq.end()
    }
}

fn order_name(o: BranchOrder) -> &'static str {
    match o {
        BranchOrder::Input => "input",
        BranchOrder::Lex => "lex",
    }
}

fn bindings(v: &Violation) -> Vec<(String, String)> {
    v.bindings.iter().map(|(k, t)| (k.name.to_string(), t.to_string())).collect()
}

fn violation_json(v: &Violation) -> Value {
    let mut b = Map::new();
    for (k, t) in bindings(v) {
        b.insert(k, Value::String(t));
    }
    json!({
        "role": v.role_label,
        "role_index": v.role_index,
        "action_index": v.action_index,
        "position": v.position,
        "formula": v.formula.to_string(),
        "instantiated": v.instantiated.to_string(),
        "bindings": b,
        "rendered": v.render(),
        "trace": v.trace.events.iter().map(event_json).collect::<Vec<_>>(),
    })
}

fn event_json(e: &Event) -> Value {
    json!({
        "actor": e.actor.to_string(),
        "direction": match e.direction { Direction::Send => "send", Direction::Receive => "recv" },
        "peer": e.peer.to_string(),
        "message": term_json(&e.message),
    })
}

/// Messages as nested constructor objects.
pub fn term_json(t: &Term) -> Value {
    match t {
        Term::Const(c) if c.fresh => json!({ "fresh": &*c.name }),
        Term::Const(c) => json!({ "const": &*c.name }),
        Term::Var(v) => json!({ "var": v.to_string() }),
        Term::Pair(a, b) => json!({ "pair": [term_json(a), term_json(b)] }),
        Term::Enc(m, k) => json!({ "enc": { "body": term_json(m), "key": term_json(k) } }),
        Term::Hash(a) => json!({ "hash": term_json(a) }),
        Term::Pk(a) => json!({ "pk": term_json(a) }),
    }
}
