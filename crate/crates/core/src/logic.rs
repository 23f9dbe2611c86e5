//! Trace-logic formulas and their evaluation over (possibly symbolic) traces.
//!
//! [`eval`] returns the substitutions under which a formula holds. Negation is
//! finite failure and `subterm` is purely syntactic, so a residual variable is
//! read as an arbitrary value the intruder picked. [`refute`] answers the dual
//! question: which instantiations make the formula false. It unifies under
//! negated `subterm` and event equality, which is what lets the search engine
//! turn a symbolic run into a concrete counterexample.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::model::{Direction, Event, Trace};
use crate::term::{is_subterm, unify, Substitution, Term, Var};

pub type EventVar = Arc<str>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum EventPattern {
    Bound(EventVar),
    Literal(Event),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum TermRef {
    Term(Term),
    /// `msg(e)`: the message of a bound event.
    Msg(EventVar),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Formula {
    True,
    False,
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    ForallEvent(EventVar, Box<Formula>),
    ExistsEvent(EventVar, Box<Formula>),
    ExistsTerm(Var, Box<Formula>),
    EventEq(EventPattern, EventPattern),
    Subterm(TermRef, TermRef),
    LastEvent(EventVar),
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }
    pub fn forall_event(e: &str, body: Formula) -> Formula {
        Formula::ForallEvent(e.into(), Box::new(body))
    }
    pub fn exists_event(e: &str, body: Formula) -> Formula {
        Formula::ExistsEvent(e.into(), Box::new(body))
    }
    pub fn exists_term(v: Var, body: Formula) -> Formula {
        Formula::ExistsTerm(v, Box::new(body))
    }

    /// `∀e ∈ tr : last_event(e) ∨ ¬(t ⪯ msg(e))`
    pub fn freshness(t: Term) -> Formula {
        Formula::forall_event(
            "e",
            Formula::or(
                Formula::LastEvent("e".into()),
                Formula::not(Formula::Subterm(TermRef::Term(t), TermRef::Msg("e".into()))),
            ),
        )
    }

    /// `∃e ∈ tr : e = <actor : message -> peer>`
    pub fn was_sent(actor: Term, message: Term, peer: Term) -> Formula {
        Formula::exists_event(
            "e",
            Formula::EventEq(
                EventPattern::Bound("e".into()),
                EventPattern::Literal(Event { actor, message, peer, direction: Direction::Send }),
            ),
        )
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    /// Term variables not bound by an `exists X :` quantifier.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        let term = |t: &Term, bound: &Vec<Var>, out: &mut BTreeSet<Var>| {
            for v in t.vars() {
                if !bound.contains(&v) {
                    out.insert(v);
                }
            }
        };
        match self {
            Formula::True | Formula::False | Formula::LastEvent(_) => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Not(a) | Formula::ForallEvent(_, a) | Formula::ExistsEvent(_, a) => a.collect_free(bound, out),
            Formula::ExistsTerm(v, a) => {
                bound.push(v.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
            Formula::EventEq(p, q) => {
                for pat in [p, q] {
                    if let EventPattern::Literal(e) = pat {
                        term(&e.actor, bound, out);
                        term(&e.message, bound, out);
                        term(&e.peer, bound, out);
                    }
                }
            }
            Formula::Subterm(x, y) => {
                for r in [x, y] {
                    if let TermRef::Term(t) = r {
                        term(t, bound, out);
                    }
                }
            }
        }
    }

    /// Visit the actor and peer terms of every event literal.
    pub fn collect_agent_terms(&self, f: &mut impl FnMut(&Term)) {
        match self {
            Formula::True | Formula::False | Formula::LastEvent(_) | Formula::Subterm(..) => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_agent_terms(f);
                b.collect_agent_terms(f);
            }
            Formula::Not(a) | Formula::ForallEvent(_, a) | Formula::ExistsEvent(_, a) | Formula::ExistsTerm(_, a) => {
                a.collect_agent_terms(f)
            }
            Formula::EventEq(p, q) => {
                for pat in [p, q] {
                    if let EventPattern::Literal(e) = pat {
                        f(&e.actor);
                        f(&e.peer);
                    }
                }
            }
        }
    }

    /// Replace free variable occurrences; variables bound by `exists X :` are left alone.
    pub fn map_free_vars(&self, f: &mut dyn FnMut(&Var) -> Term) -> Formula {
        self.map_inner(&mut Vec::new(), f)
    }

    fn map_inner(&self, bound: &mut Vec<Var>, f: &mut dyn FnMut(&Var) -> Term) -> Formula {
        fn term(t: &Term, bound: &[Var], f: &mut dyn FnMut(&Var) -> Term) -> Term {
            t.map_vars(&mut |v| if bound.contains(v) { Term::Var(v.clone()) } else { f(v) })
        }
        let pat = |p: &EventPattern, bound: &[Var], f: &mut dyn FnMut(&Var) -> Term| match p {
            EventPattern::Bound(e) => EventPattern::Bound(e.clone()),
            EventPattern::Literal(e) => EventPattern::Literal(Event {
                actor: term(&e.actor, bound, f),
                message: term(&e.message, bound, f),
                peer: term(&e.peer, bound, f),
                direction: e.direction,
            }),
        };
        let tref = |r: &TermRef, bound: &[Var], f: &mut dyn FnMut(&Var) -> Term| match r {
            TermRef::Term(t) => TermRef::Term(term(t, bound, f)),
            TermRef::Msg(e) => TermRef::Msg(e.clone()),
        };
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::LastEvent(e) => Formula::LastEvent(e.clone()),
            Formula::And(a, b) => Formula::and(a.map_inner(bound, f), b.map_inner(bound, f)),
            Formula::Or(a, b) => Formula::or(a.map_inner(bound, f), b.map_inner(bound, f)),
            Formula::Implies(a, b) => Formula::implies(a.map_inner(bound, f), b.map_inner(bound, f)),
            Formula::Not(a) => Formula::not(a.map_inner(bound, f)),
            Formula::ForallEvent(e, a) => Formula::ForallEvent(e.clone(), Box::new(a.map_inner(bound, f))),
            Formula::ExistsEvent(e, a) => Formula::ExistsEvent(e.clone(), Box::new(a.map_inner(bound, f))),
            Formula::ExistsTerm(v, a) => {
                bound.push(v.clone());
                let body = a.map_inner(bound, f);
                bound.pop();
                Formula::ExistsTerm(v.clone(), Box::new(body))
            }
            Formula::EventEq(p, q) => Formula::EventEq(pat(p, bound, f), pat(q, bound, f)),
            Formula::Subterm(x, y) => Formula::Subterm(tref(x, bound, f), tref(y, bound, f)),
        }
    }

    pub fn apply(&self, s: &Substitution) -> Formula {
        if s.is_empty() {
            return self.clone();
        }
        self.map_free_vars(&mut |v| s.apply(&Term::Var(v.clone())))
    }

    /// The first event variable used outside the scope of its quantifier.
    pub fn unbound_event_var(&self) -> Option<EventVar> {
        fn go(f: &Formula, scope: &mut Vec<EventVar>) -> Option<EventVar> {
            let check = |e: &EventVar, scope: &Vec<EventVar>| (!scope.contains(e)).then(|| e.clone());
            match f {
                Formula::True | Formula::False => None,
                Formula::LastEvent(e) => check(e, scope),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    go(a, scope).or_else(|| go(b, scope))
                }
                Formula::Not(a) | Formula::ExistsTerm(_, a) => go(a, scope),
                Formula::ForallEvent(e, a) | Formula::ExistsEvent(e, a) => {
                    scope.push(e.clone());
                    let r = go(a, scope);
                    scope.pop();
                    r
                }
                Formula::EventEq(p, q) => [p, q].into_iter().find_map(|p| match p {
                    EventPattern::Bound(e) => check(e, scope),
                    EventPattern::Literal(_) => None,
                }),
                Formula::Subterm(x, y) => [x, y].into_iter().find_map(|r| match r {
                    TermRef::Msg(e) => check(e, scope),
                    TermRef::Term(_) => None,
                }),
            }
        }
        go(self, &mut Vec::new())
    }
}

/// Substitutions under which a formula holds, deduplicated and sorted.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct WitnessSet(BTreeSet<Substitution>);

impl WitnessSet {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn iter(&self) -> impl Iterator<Item = &Substitution> {
        self.0.iter()
    }
    pub fn contains(&self, s: &Substitution) -> bool {
        self.0.contains(s)
    }
}

impl IntoIterator for WitnessSet {
    type Item = Substitution;
    type IntoIter = std::collections::btree_set::IntoIter<Substitution>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl FromIterator<Substitution> for WitnessSet {
    fn from_iter<I: IntoIterator<Item = Substitution>>(iter: I) -> Self {
        WitnessSet(iter.into_iter().collect())
    }
}

/// Index range reserved for variables introduced while evaluating `exists X :`.
const BOUND_BASE: u32 = u32::MAX - 4096;

/// Witnesses for `f` on `tr`, each extending `under`.
pub fn eval(f: &Formula, tr: &Trace, under: &Substitution) -> WitnessSet {
    let ev = Evaluator { trace: tr };
    ev.sat(f, &mut Vec::new(), under, Mode::Finite, 0).into_iter().collect()
}

/// Instantiations (extending `under`) under which `f` is false on `tr` once
/// remaining variables are read as fresh values.
pub fn refute(f: &Formula, tr: &Trace, under: &Substitution) -> WitnessSet {
    let ev = Evaluator { trace: tr };
    ev.fals(f, &mut Vec::new(), under, 0).into_iter().collect()
}

/// Boolean reading of `eval` on a trace with no prior bindings.
pub fn holds(f: &Formula, tr: &Trace) -> bool {
    !eval(f, tr, &Substitution::new()).is_empty()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Negation as failure, syntactic subterm.
    Finite,
    /// Unify under `subterm`; negation flips to refutation.
    Instantiating,
}

struct Evaluator<'a> {
    trace: &'a Trace,
}

type Env = Vec<(EventVar, usize)>;

fn lookup(env: &Env, e: &EventVar) -> Option<usize> {
    env.iter().rev().find(|(n, _)| n == e).map(|(_, i)| *i)
}

fn dedup(mut v: Vec<Substitution>) -> Vec<Substitution> {
    v.sort();
    v.dedup();
    v
}

impl<'a> Evaluator<'a> {
    /// Candidate readings of a pattern. A received event whose apparent
    /// sender is ε also reads as ε's own send, `<ε : m -> receiver>`; the
    /// boolean flag marks that reading (it requires the peer to be ε).
    fn views(&self, p: &EventPattern, env: &Env) -> Vec<(Event, bool)> {
        match p {
            EventPattern::Literal(e) => vec![(e.clone(), false)],
            EventPattern::Bound(name) => match lookup(env, name) {
                None => vec![],
                Some(i) => {
                    let e = &self.trace.events[i];
                    let mut out = vec![(e.clone(), false)];
                    if e.direction == Direction::Receive {
                        out.push((
                            Event {
                                actor: Term::intruder(),
                                message: e.message.clone(),
                                peer: e.actor.clone(),
                                direction: Direction::Send,
                            },
                            true,
                        ));
                    }
                    out
                }
            },
        }
    }

    fn peer_of(&self, p: &EventPattern, env: &Env) -> Option<Term> {
        match p {
            EventPattern::Bound(name) => lookup(env, name).map(|i| self.trace.events[i].peer.clone()),
            EventPattern::Literal(_) => None,
        }
    }

    fn unify_events(a: &Event, b: &Event, s: &Substitution) -> Option<Substitution> {
        if a.direction != b.direction {
            return None;
        }
        let s = unify(&a.actor, &b.actor, s)?;
        let s = unify(&a.message, &b.message, &s)?;
        unify(&a.peer, &b.peer, &s)
    }

    fn eq_witnesses(&self, p: &EventPattern, q: &EventPattern, env: &Env, s: &Substitution) -> Vec<Substitution> {
        let mut out = Vec::new();
        let (pp, qp) = (self.peer_of(p, env), self.peer_of(q, env));
        for (a, dual_a) in self.views(p, env) {
            for (b, dual_b) in self.views(q, env) {
                let mut s = s.clone();
                if dual_a {
                    match unify(pp.as_ref().unwrap(), &Term::intruder(), &s) {
                        Some(x) => s = x,
                        None => continue,
                    }
                }
                if dual_b {
                    match unify(qp.as_ref().unwrap(), &Term::intruder(), &s) {
                        Some(x) => s = x,
                        None => continue,
                    }
                }
                if let Some(w) = Self::unify_events(&a, &b, &s) {
                    out.push(w);
                }
            }
        }
        dedup(out)
    }

    fn syntactically_equal(&self, p: &EventPattern, q: &EventPattern, env: &Env, s: &Substitution) -> bool {
        let (pp, qp) = (self.peer_of(p, env), self.peer_of(q, env));
        let eps = Term::intruder();
        for (a, dual_a) in self.views(p, env) {
            if dual_a && s.apply(pp.as_ref().unwrap()) != eps {
                continue;
            }
            for (b, dual_b) in self.views(q, env) {
                if dual_b && s.apply(qp.as_ref().unwrap()) != eps {
                    continue;
                }
                if a.substitute(s) == b.substitute(s) {
                    return true;
                }
            }
        }
        false
    }

    fn resolve(&self, r: &TermRef, env: &Env, s: &Substitution) -> Option<Term> {
        match r {
            TermRef::Term(t) => Some(s.apply(t)),
            TermRef::Msg(e) => lookup(env, e).map(|i| s.apply(&self.trace.events[i].message)),
        }
    }

    fn is_last(&self, env: &Env, e: &EventVar) -> bool {
        lookup(env, e).map(|i| i + 1 == self.trace.len()).unwrap_or(false)
    }

    fn fresh_binder(v: &Var, depth: u32) -> Var {
        Var { name: v.name.clone(), index: BOUND_BASE + depth }
    }

    fn rename_binder(body: &Formula, v: &Var, fresh: &Var) -> Formula {
        // Inner `exists v :` shadows; map_free_vars leaves it untouched.
        body.map_free_vars(&mut |w| if w == v { Term::Var(fresh.clone()) } else { Term::Var(w.clone()) })
    }

    fn sat(&self, f: &Formula, env: &mut Env, s: &Substitution, mode: Mode, depth: u32) -> Vec<Substitution> {
        match f {
            Formula::True => vec![s.clone()],
            Formula::False => vec![],
            Formula::And(a, b) => {
                let mut out = Vec::new();
                for w in self.sat(a, env, s, mode, depth) {
                    out.extend(self.sat(b, env, &w, mode, depth));
                }
                dedup(out)
            }
            Formula::Or(a, b) => {
                let mut out = self.sat(a, env, s, mode, depth);
                out.extend(self.sat(b, env, s, mode, depth));
                dedup(out)
            }
            Formula::Implies(a, b) => match mode {
                Mode::Finite => {
                    if self.sat(a, env, s, mode, depth).is_empty() {
                        vec![s.clone()]
                    } else {
                        self.sat(&Formula::and((**a).clone(), (**b).clone()), env, s, mode, depth)
                    }
                }
                Mode::Instantiating => {
                    let mut out = self.fals(a, env, s, depth);
                    for w in self.sat(a, env, s, mode, depth) {
                        out.extend(self.sat(b, env, &w, mode, depth));
                    }
                    dedup(out)
                }
            },
            Formula::Not(a) => match mode {
                Mode::Finite => {
                    if self.sat(a, env, s, mode, depth).is_empty() {
                        vec![s.clone()]
                    } else {
                        vec![]
                    }
                }
                Mode::Instantiating => self.fals(a, env, s, depth),
            },
            Formula::ForallEvent(e, body) => match mode {
                Mode::Finite => {
                    for i in 0..self.trace.len() {
                        env.push((e.clone(), i));
                        let ok = !self.sat(body, env, s, mode, depth).is_empty();
                        env.pop();
                        if !ok {
                            return vec![];
                        }
                    }
                    vec![s.clone()]
                }
                Mode::Instantiating => {
                    let mut acc = vec![s.clone()];
                    for i in 0..self.trace.len() {
                        let mut next = Vec::new();
                        env.push((e.clone(), i));
                        for w in &acc {
                            next.extend(self.sat(body, env, w, mode, depth));
                        }
                        env.pop();
                        acc = dedup(next);
                        if acc.is_empty() {
                            break;
                        }
                    }
                    acc
                }
            },
            Formula::ExistsEvent(e, body) => {
                let mut out = Vec::new();
                for i in 0..self.trace.len() {
                    env.push((e.clone(), i));
                    out.extend(self.sat(body, env, s, mode, depth));
                    env.pop();
                }
                dedup(out)
            }
            Formula::ExistsTerm(v, body) => {
                let fresh = Self::fresh_binder(v, depth);
                let body = Self::rename_binder(body, v, &fresh);
                let only = BTreeSet::from([fresh]);
                dedup(self.sat(&body, env, s, mode, depth + 1).into_iter().map(|w| w.without(&only)).collect())
            }
            Formula::EventEq(p, q) => self.eq_witnesses(p, q, env, s),
            Formula::Subterm(x, y) => {
                let (Some(a), Some(b)) = (self.resolve(x, env, s), self.resolve(y, env, s)) else {
                    return vec![];
                };
                match mode {
                    // A variable bound by `exists X :` is solved for; other
                    // variables stand for values the intruder picked.
                    Mode::Finite if a.vars().iter().any(|v| v.index >= BOUND_BASE) => {
                        let open = b.vars();
                        dedup(
                            b.subterms()
                                .into_iter()
                                .filter_map(|sub| unify(&a, sub, s))
                                .filter(|w| open.iter().all(|v| w.get(v).is_none()))
                                .collect(),
                        )
                    }
                    Mode::Finite => {
                        if is_subterm(&a, &b) {
                            vec![s.clone()]
                        } else {
                            vec![]
                        }
                    }
                    Mode::Instantiating => {
                        dedup(b.subterms().into_iter().filter_map(|sub| unify(&a, sub, s)).collect())
                    }
                }
            }
            Formula::LastEvent(e) => {
                if self.is_last(env, e) {
                    vec![s.clone()]
                } else {
                    vec![]
                }
            }
        }
    }

    fn fals(&self, f: &Formula, env: &mut Env, s: &Substitution, depth: u32) -> Vec<Substitution> {
        match f {
            Formula::True => vec![],
            Formula::False => vec![s.clone()],
            Formula::And(a, b) => {
                let mut out = self.fals(a, env, s, depth);
                out.extend(self.fals(b, env, s, depth));
                dedup(out)
            }
            Formula::Or(a, b) => {
                let mut out = Vec::new();
                for w in self.fals(a, env, s, depth) {
                    out.extend(self.fals(b, env, &w, depth));
                }
                dedup(out)
            }
            Formula::Implies(a, b) => {
                let mut out = Vec::new();
                for w in self.sat(a, env, s, Mode::Instantiating, depth) {
                    out.extend(self.fals(b, env, &w, depth));
                }
                dedup(out)
            }
            Formula::Not(a) => self.sat(a, env, s, Mode::Instantiating, depth),
            Formula::ForallEvent(e, body) => {
                let mut out = Vec::new();
                for i in 0..self.trace.len() {
                    env.push((e.clone(), i));
                    out.extend(self.fals(body, env, s, depth));
                    env.pop();
                }
                dedup(out)
            }
            Formula::ExistsEvent(e, body) => {
                let mut acc = vec![s.clone()];
                for i in 0..self.trace.len() {
                    let mut next = Vec::new();
                    env.push((e.clone(), i));
                    for w in &acc {
                        next.extend(self.fals(body, env, w, depth));
                    }
                    env.pop();
                    acc = dedup(next);
                    if acc.is_empty() {
                        break;
                    }
                }
                acc
            }
            Formula::ExistsTerm(v, body) => {
                // Refuting `exists X` needs a refutation that leaves X generic.
                let fresh = Self::fresh_binder(v, depth);
                let body = Self::rename_binder(body, v, &fresh);
                self.fals(&body, env, s, depth + 1)
                    .into_iter()
                    .filter(|w| w.get(&fresh).is_none() && w.iter().all(|(_, t)| !t.occurs(&fresh)))
                    .collect()
            }
            Formula::EventEq(p, q) => {
                if self.syntactically_equal(p, q, env, s) {
                    vec![]
                } else {
                    vec![s.clone()]
                }
            }
            Formula::Subterm(x, y) => match (self.resolve(x, env, s), self.resolve(y, env, s)) {
                (Some(a), Some(b)) if is_subterm(&a, &b) => vec![],
                _ => vec![s.clone()],
            },
            Formula::LastEvent(e) => {
                if self.is_last(env, e) {
                    vec![]
                } else {
                    vec![s.clone()]
                }
            }
        }
    }
}

// Printing uses the `.tlp` surface syntax so that specs can be re-read.

fn fmt_arg(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if matches!(t, Term::Pair(..)) {
        write!(f, "({t})")
    } else {
        write!(f, "{t}")
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventPattern::Bound(e) => write!(f, "{e}"),
            EventPattern::Literal(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for TermRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermRef::Term(t) => fmt_arg(t, f),
            TermRef::Msg(e) => write!(f, "msg({e})"),
        }
    }
}

impl Formula {
    // 0: implies, 1: or, 2: and, 3: unary / atoms
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        let binary = |f: &mut fmt::Formatter<'_>, a: &Formula, op: &str, b: &Formula, me: u8, lp: u8, rp: u8| {
            if prec > me {
                write!(f, "(")?;
            }
            a.fmt_prec(f, lp)?;
            write!(f, " {op} ")?;
            b.fmt_prec(f, rp)?;
            if prec > me {
                write!(f, ")")?;
            }
            Ok(())
        };
        let quant = |f: &mut fmt::Formatter<'_>, head: String, body: &Formula| {
            if prec > 0 {
                write!(f, "(")?;
            }
            write!(f, "{head} : ")?;
            body.fmt_prec(f, 0)?;
            if prec > 0 {
                write!(f, ")")?;
            }
            Ok(())
        };
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::And(a, b) => binary(f, a, "and", b, 2, 2, 3),
            Formula::Or(a, b) => binary(f, a, "or", b, 1, 1, 2),
            Formula::Implies(a, b) => binary(f, a, "implies", b, 0, 1, 0),
            Formula::Not(a) => {
                write!(f, "not ")?;
                a.fmt_prec(f, 3)
            }
            Formula::ForallEvent(e, b) => quant(f, format!("forall {e} in tr"), b),
            Formula::ExistsEvent(e, b) => quant(f, format!("exists {e} in tr"), b),
            Formula::ExistsTerm(v, b) => quant(f, format!("exists {v}"), b),
            Formula::EventEq(p, q) => write!(f, "{p} = {q}"),
            Formula::Subterm(x, y) => write!(f, "subterm({x}, {y})"),
            Formula::LastEvent(e) => write!(f, "last_event({e})"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
