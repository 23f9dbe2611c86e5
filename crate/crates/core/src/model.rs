//! Protocol roles annotated with local formulas, events, traces and scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::logic::Formula;
use crate::term::{Substitution, Term, Var};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Direction {
    Send,
    Receive,
}

impl Direction {
    pub fn arrow(self) -> &'static str {
        match self {
            Direction::Send => "->",
            Direction::Receive => "<-",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Action {
    pub message: Term,
    pub peer: Term,
    pub direction: Direction,
    /// `Formula::True` when the action carries no assertion.
    pub formula: Formula,
}

impl Action {
    pub fn send(message: Term, peer: Term) -> Self {
        Action { message, peer, direction: Direction::Send, formula: Formula::True }
    }

    pub fn recv(message: Term, peer: Term) -> Self {
        Action { message, peer, direction: Direction::Receive, formula: Formula::True }
    }

    pub fn asserting(mut self, formula: Formula) -> Self {
        self.formula = formula;
        self
    }

    fn substitute(&self, s: &Substitution) -> Action {
        Action {
            message: s.apply(&self.message),
            peer: s.apply(&self.peer),
            direction: self.direction,
            formula: self.formula.apply(s),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExtendedRole {
    pub label: String,
    pub identity: Term,
    pub actions: Vec<Action>,
}

impl ExtendedRole {
    pub fn is_finished(&self) -> bool {
        self.actions.is_empty()
    }

    /// Every term variable mentioned by the role, free formula variables included.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = self.identity.vars();
        for a in &self.actions {
            a.message.collect_vars(&mut out);
            a.peer.collect_vars(&mut out);
            out.extend(a.formula.free_vars());
        }
        out
    }

    /// Variables that denote principals: the identity, peers, and the actor
    /// and peer slots of event literals in the attached formulas.
    pub fn agent_vars(&self) -> BTreeSet<Var> {
        let mut out = self.identity.vars();
        for a in &self.actions {
            a.peer.collect_vars(&mut out);
            a.formula.collect_agent_terms(&mut |t| t.collect_vars(&mut out));
        }
        out
    }

    pub fn substitute(&self, s: &Substitution) -> ExtendedRole {
        ExtendedRole {
            label: self.label.clone(),
            identity: s.apply(&self.identity),
            actions: self.actions.iter().map(|a| a.substitute(s)).collect(),
        }
    }
}

/// `true` iff the role has no actions left.
pub fn role_is_finished(r: &ExtendedRole) -> bool {
    r.is_finished()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("role `{role}` has no parameter `{name}`")]
    UnknownParameter { role: String, name: String },
    #[error("role `{role}`: `{name}` is used as an agent and cannot be bound to `{term}`")]
    NonAtomicAgent { role: String, name: String, term: String },
    #[error("role `{role}` takes {expected} argument(s), got {found}")]
    Arity { role: String, expected: usize, found: usize },
    #[error("initial knowledge must be ground, found `{0}`")]
    NonGroundKnowledge(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
}

/// Instantiate a template role. Variables named in `args` are replaced by
/// their images; every other template variable becomes a copy indexed by
/// `copy`, so two instantiations with different `copy` share no variables.
pub fn instantiate_role(
    template: &ExtendedRole,
    args: &BTreeMap<String, Term>,
    copy: u32,
) -> Result<ExtendedRole, ModelError> {
    let vars = template.vars();
    for name in args.keys() {
        if !vars.iter().any(|v| &*v.name == name) {
            return Err(ModelError::UnknownParameter { role: template.label.clone(), name: name.clone() });
        }
    }
    let agents = template.agent_vars();
    let mut bindings = Vec::new();
    for v in &vars {
        let image = match args.get(&*v.name) {
            Some(t) => {
                if agents.contains(v) && !t.is_atomic() {
                    return Err(ModelError::NonAtomicAgent {
                        role: template.label.clone(),
                        name: v.name.to_string(),
                        term: t.to_string(),
                    });
                }
                t.clone()
            }
            None => Term::Var(Var { name: v.name.clone(), index: copy }),
        };
        bindings.push((v.clone(), image));
    }
    // Simultaneous replacement: images never mention template (index-0) vars
    // unless the caller passes them explicitly.
    let map: BTreeMap<Var, Term> = bindings.into_iter().collect();
    let sub = SimultaneousMap(map);
    Ok(sub.apply_role(template))
}

struct SimultaneousMap(BTreeMap<Var, Term>);

impl SimultaneousMap {
    fn term(&self, t: &Term) -> Term {
        t.map_vars(&mut |v| self.0.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())))
    }

    fn apply_role(&self, r: &ExtendedRole) -> ExtendedRole {
        ExtendedRole {
            label: r.label.clone(),
            identity: self.term(&r.identity),
            actions: r
                .actions
                .iter()
                .map(|a| Action {
                    message: self.term(&a.message),
                    peer: self.term(&a.peer),
                    direction: a.direction,
                    formula: a
                        .formula
                        .map_free_vars(&mut |v| self.0.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()))),
                })
                .collect(),
        }
    }
}

/// A named role with an ordered parameter list, as declared in a spec file.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RoleTemplate {
    pub name: String,
    pub params: Vec<Var>,
    pub role: ExtendedRole,
}

impl RoleTemplate {
    /// Positional instantiation; `None` leaves a parameter unbound.
    pub fn instantiate(
        &self,
        args: &[Option<Term>],
        identity: Option<&Term>,
        copy: u32,
    ) -> Result<ExtendedRole, ModelError> {
        if args.len() != self.params.len() {
            return Err(ModelError::Arity { role: self.name.clone(), expected: self.params.len(), found: args.len() });
        }
        let used = self.role.vars();
        let mut map = BTreeMap::new();
        for (p, a) in self.params.iter().zip(args) {
            if !used.contains(p) {
                continue;
            }
            if let Some(t) = a {
                map.insert(p.name.to_string(), t.clone());
            }
        }
        if let (Some(t), Some(v)) = (identity, self.role.identity.as_var()) {
            map.insert(v.name.to_string(), t.clone());
        }
        instantiate_role(&self.role, &map, copy)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Event {
    pub actor: Term,
    pub message: Term,
    pub peer: Term,
    pub direction: Direction,
}

impl Event {
    pub fn substitute(&self, s: &Substitution) -> Event {
        Event {
            actor: s.apply(&self.actor),
            message: s.apply(&self.message),
            peer: s.apply(&self.peer),
            direction: self.direction,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.actor.is_ground() && self.message.is_ground() && self.peer.is_ground()
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{} : {} {} {}>", self.actor, self.message, self.direction.arrow(), self.peer)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Trace {
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(events: Vec<Event>) -> Self {
        Trace { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn prefix(&self, n: usize) -> Trace {
        Trace { events: self.events[..n].to_vec() }
    }

    pub fn substitute(&self, s: &Substitution) -> Trace {
        Trace { events: self.events.iter().map(|e| e.substitute(s)).collect() }
    }
}

/// A finite multiset of instantiated roles plus the intruder's initial knowledge.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Scenario {
    pub roles: Vec<Arc<ExtendedRole>>,
    pub initial_knowledge: Vec<Term>,
    /// Agent constants, ε last. Grounding draws principal variables from here.
    pub agents: Vec<Term>,
    pub agent_vars: BTreeSet<Var>,
}

impl Scenario {
    /// The intruder starts out knowing ε, every agent constant of the
    /// scenario, their public keys, and `extra`.
    pub fn new(roles: Vec<ExtendedRole>, extra: Vec<Term>) -> Result<Scenario, ModelError> {
        if let Some(t) = extra.iter().find(|t| !t.is_ground()) {
            return Err(ModelError::NonGroundKnowledge(t.to_string()));
        }
        let mut agents: Vec<Term> = Vec::new();
        let mut agent_vars = BTreeSet::new();
        let note = |t: &Term, agents: &mut Vec<Term>| {
            if matches!(t, Term::Const(_)) && !t.is_intruder() && !agents.contains(t) {
                agents.push(t.clone());
            }
        };
        for r in &roles {
            note(&r.identity, &mut agents);
            for a in &r.actions {
                note(&a.peer, &mut agents);
                a.formula.collect_agent_terms(&mut |t| note(t, &mut agents));
            }
            agent_vars.extend(r.agent_vars());
        }
        agents.push(Term::intruder());

        let mut initial_knowledge: Vec<Term> = Vec::new();
        let mut add = |t: Term| {
            if !initial_knowledge.contains(&t) {
                initial_knowledge.push(t);
            }
        };
        for a in &agents {
            add(a.clone());
            add(Term::pk(a.clone()));
        }
        for t in extra {
            add(t);
        }
        Ok(Scenario { roles: roles.into_iter().map(Arc::new).collect(), initial_knowledge, agents, agent_vars })
    }

    pub fn action_count(&self) -> usize {
        self.roles.iter().map(|r| r.actions.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{EventPattern, Formula};

    fn v(n: &str) -> Term {
        Term::var(n, 0)
    }
    fn c(n: &str) -> Term {
        Term::constant(n)
    }

    fn responder() -> ExtendedRole {
        ExtendedRole {
            label: "responder".into(),
            identity: v("B"),
            actions: vec![Action::recv(Term::pk(v("Na")), v("A"))],
        }
    }

    #[test]
    fn instantiate_binds_and_renames() {
        let r = instantiate_role(&responder(), &BTreeMap::from([("B".to_string(), c("b"))]), 1).unwrap();
        assert_eq!(r.identity, c("b"));
        assert_eq!(r.actions[0].message, Term::pk(Term::var("Na", 1)));
        assert_eq!(r.actions[0].peer, Term::var("A", 1));
    }

    #[test]
    fn instantiate_without_args_only_renames() {
        let r = instantiate_role(&responder(), &BTreeMap::new(), 3).unwrap();
        assert_eq!(r.identity, Term::var("B", 3));
        assert_eq!(r.actions.len(), 1);
        assert_eq!(r.actions[0].direction, Direction::Receive);
    }

    #[test]
    fn copies_share_no_variables() {
        let r1 = instantiate_role(&responder(), &BTreeMap::new(), 1).unwrap();
        let r2 = instantiate_role(&responder(), &BTreeMap::new(), 2).unwrap();
        assert!(r1.vars().is_disjoint(&r2.vars()));
    }

    #[test]
    fn instantiate_rejects_compound_agents() {
        let err = instantiate_role(&responder(), &BTreeMap::from([("A".to_string(), Term::pk(c("a")))]), 1);
        assert!(matches!(err, Err(ModelError::NonAtomicAgent { .. })));
        let err = instantiate_role(&responder(), &BTreeMap::from([("Q".to_string(), c("a"))]), 1);
        assert!(matches!(err, Err(ModelError::UnknownParameter { .. })));
    }

    #[test]
    fn instantiation_reaches_formulas() {
        let f = Formula::exists_event(
            "e",
            Formula::EventEq(
                EventPattern::Bound("e".into()),
                EventPattern::Literal(Event {
                    actor: v("A"),
                    message: v("Na"),
                    peer: v("B"),
                    direction: Direction::Send,
                }),
            ),
        );
        let role = ExtendedRole {
            label: "responder".into(),
            identity: v("B"),
            actions: vec![Action::recv(v("Na"), v("A")).asserting(f)],
        };
        let r = instantiate_role(&role, &BTreeMap::from([("B".to_string(), c("b"))]), 1).unwrap();
        let fv = r.actions[0].formula.free_vars();
        assert!(fv.contains(&Var::new("A", 1)));
        assert!(fv.contains(&Var::new("Na", 1)));
        assert!(!fv.iter().any(|v| &*v.name == "B"));
    }

    #[test]
    fn finished_roles() {
        let empty = ExtendedRole { label: "x".into(), identity: c("a"), actions: vec![] };
        assert!(role_is_finished(&empty));
        let mut r = responder();
        assert!(!role_is_finished(&r));
        r.actions.remove(0);
        assert!(role_is_finished(&r));
    }

    #[test]
    fn instantiation_commutes_with_disjoint_substitution() {
        let r = instantiate_role(&responder(), &BTreeMap::from([("B".to_string(), c("b"))]), 1).unwrap();
        let s = Substitution::from_bindings([(Var::new("Z", 9), c("z"))]).unwrap();
        assert_eq!(r.substitute(&s), r);
    }

    #[test]
    fn scenario_knowledge_has_agents_and_keys() {
        let r = instantiate_role(&responder(), &BTreeMap::from([("B".to_string(), c("b"))]), 1).unwrap();
        let sc = Scenario::new(vec![r.clone(), r], vec![c("k")]).unwrap();
        assert_eq!(sc.roles.len(), 2);
        assert_eq!(sc.agents, vec![c("b"), Term::intruder()]);
        for t in [c("b"), Term::pk(c("b")), Term::intruder(), Term::pk(Term::intruder()), c("k")] {
            assert!(sc.initial_knowledge.contains(&t), "{t}");
        }
        assert!(sc.agent_vars.contains(&Var::new("A", 1)));
        assert!(Scenario::new(vec![], vec![v("X")]).is_err());
    }
}
