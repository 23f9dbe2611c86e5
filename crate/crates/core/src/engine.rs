//! Extended runs over a scenario and bounded depth-first search for
//! violations of the attached formulas.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::intruder::{derivable_ground, solve_counted, Constraint, ConstraintSeq, Knowledge, Solution};
use crate::logic::{eval, refute, Formula};
use crate::model::{Action, Direction, Event, ExtendedRole, Scenario, Trace};
use crate::term::{unify, FreshNamer, Substitution, Term, Var};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum BranchOrder {
    /// Roles in the order the scenario lists them.
    #[default]
    Input,
    /// Roles sorted by label, then identity.
    Lex,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub stop_at_first: bool,
    pub max_states: Option<usize>,
    pub order: BranchOrder,
    /// Keep exploring a run after one of its formulas fails.
    pub continue_after_violation: bool,
    pub jobs: usize,
    pub time_limit: Option<Duration>,
    /// Schedule assertion-free sends eagerly (see [`search`]).
    pub eager_sends: bool,
    /// Start identical role instances in scenario order only.
    pub symmetry: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            stop_at_first: true,
            max_states: None,
            order: BranchOrder::Input,
            continue_after_violation: true,
            jobs: 1,
            time_limit: None,
            eager_sends: true,
            symmetry: true,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RoleCursor {
    pub role: Arc<ExtendedRole>,
    pub next: usize,
    /// The run has decided this role takes no further part.
    pub halted: bool,
}

impl RoleCursor {
    pub fn is_finished(&self) -> bool {
        self.next >= self.role.actions.len()
    }

    fn can_act(&self) -> bool {
        !self.halted && !self.is_finished()
    }

    pub fn current(&self) -> Option<&Action> {
        self.role.actions.get(self.next)
    }
}

/// A point in a symbolic run. Terms in `knowledge`, `constraints` and `trace`
/// are stored as written in the role instances; `subst` resolves them.
/// `constraints` holds only what the solver left open (variable goals);
/// `receives` keeps every receive obligation for ground confirmation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SearchState {
    pub roles: Vec<RoleCursor>,
    pub subst: Substitution,
    pub knowledge: Knowledge,
    pub constraints: Vec<Constraint>,
    pub receives: Vec<Constraint>,
    pub trace: Trace,
    /// `(role index, action index)` of each trace event.
    pub origins: Vec<(usize, usize)>,
}

impl SearchState {
    pub fn initial(scenario: &Scenario) -> SearchState {
        SearchState {
            roles: scenario.roles.iter().map(|r| RoleCursor { role: r.clone(), next: 0, halted: false }).collect(),
            subst: Substitution::new(),
            knowledge: Knowledge::new(scenario.initial_knowledge.iter().cloned()),
            constraints: Vec::new(),
            receives: Vec::new(),
            trace: Trace::default(),
            origins: Vec::new(),
        }
    }

    pub fn is_final(&self) -> bool {
        self.roles.iter().all(RoleCursor::is_finished)
    }

    /// The trace with the current bindings applied.
    pub fn resolved_trace(&self) -> Trace {
        self.trace.substitute(&self.subst)
    }

    /// Current bindings plus a fresh intruder atom for every variable still
    /// open in the trace (the intruder's free choices).
    pub fn closed_bindings(&self) -> Substitution {
        let mut namer = FreshNamer::default();
        let mut s = self.subst.clone();
        let mut open = BTreeSet::new();
        for e in &self.resolved_trace().events {
            e.actor.collect_vars(&mut open);
            e.message.collect_vars(&mut open);
            e.peer.collect_vars(&mut open);
        }
        for v in open {
            s = unify(&Term::Var(v), &namer.next_constant(), &s).expect("open variable");
        }
        s
    }
}

/// A ground-confirmed formula failure.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Violation {
    /// Ground trace the formula was evaluated on.
    pub trace: Trace,
    /// The formula as attached to the role instance.
    pub formula: Formula,
    /// `formula` under the violating bindings.
    pub instantiated: Formula,
    pub role_label: String,
    pub role_index: usize,
    pub action_index: usize,
    /// Number of events the formula was evaluated over.
    pub position: usize,
    /// Ground values of the failing role's variables.
    pub bindings: Substitution,
    pub origins: Vec<(usize, usize)>,
}

impl Violation {
    pub fn render(&self) -> Vec<String> {
        render_trace(&self.trace)
    }

    fn key(&self) -> ViolationKey {
        (
            self.position,
            self.render().join("\n"),
            self.role_index,
            self.action_index,
            self.instantiated.to_string(),
        )
    }
}

type ViolationKey = (usize, String, usize, usize, String);

impl Violation {
    /// Everything that identifies the violation, with fresh atoms renamed
    /// in order of first occurrence. Two violations with the same class
    /// differ only in the names the intruder picked.
    pub fn class(&self) -> String {
        let mut order = Vec::new();
        for e in &self.trace.events {
            for t in [&e.actor, &e.message, &e.peer] {
                fresh_atoms(t, &mut order);
            }
        }
        for (_, t) in self.bindings.iter() {
            fresh_atoms(t, &mut order);
        }
        let names: BTreeMap<&str, String> =
            order.iter().enumerate().map(|(i, n)| (&**n, format!("#{}", i + 1))).collect();
        let mut b: Vec<String> = self.bindings.iter().map(|(k, t)| format!("{k}={t}")).collect();
        b.sort();
        let raw = format!(
            "{}|{}|{}|{}|{}|{}",
            self.role_index,
            self.action_index,
            self.position,
            self.render().join("\n"),
            self.instantiated,
            b.join(",")
        );
        rename_words(&raw, &names)
    }
}

fn fresh_atoms(t: &Term, out: &mut Vec<Arc<str>>) {
    match t {
        Term::Const(c) if c.fresh => {
            if !out.contains(&c.name) {
                out.push(c.name.clone());
            }
        }
        _ => t.children().into_iter().for_each(|x| fresh_atoms(x, out)),
    }
}

fn rename_words(s: &str, names: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    let flush = |w: &mut String, out: &mut String| {
        out.push_str(names.get(w.as_str()).map_or(w.as_str(), |n| n.as_str()));
        w.clear();
    };
    for ch in s.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
        } else {
            flush(&mut word, &mut out);
            out.push(ch);
        }
    }
    flush(&mut word, &mut out);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct SearchStats {
    pub states: u64,
    pub solver_calls: u64,
    pub solver_steps: u64,
    pub candidates: u64,
}

impl SearchStats {
    fn add(&mut self, o: &SearchStats) {
        self.states += o.states;
        self.solver_calls += o.solver_calls;
        self.solver_steps += o.solver_steps;
        self.candidates += o.candidates;
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Status {
    Exhausted,
    Capped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Exhausted => "exhausted",
            Status::Capped => "capped",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub violations: Vec<Violation>,
    pub stats: SearchStats,
    pub status: Status,
}

/// Successor states and confirmed violations of one expansion.
#[derive(Clone, Debug, Default)]
pub struct StepResult {
    pub successors: Vec<SearchState>,
    pub violations: Vec<Violation>,
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    opts: &'a SearchOptions,
    stats: SearchStats,
    twins: Vec<Option<usize>>,
}

/// For each role instance, the nearest earlier instance that differs from it
/// only in the copy index of its variables.
fn twins(scenario: &Scenario) -> Vec<Option<usize>> {
    let shapes: Vec<String> = scenario.roles.iter().map(|r| role_shape(r)).collect();
    (0..shapes.len()).map(|i| (0..i).rev().find(|&j| shapes[j] == shapes[i])).collect()
}

fn role_shape(r: &ExtendedRole) -> String {
    let mut flat = |v: &Var| Term::var(&v.name, 0);
    let mut out = format!("{}|{}", r.label, r.identity.map_vars(&mut flat));
    for a in &r.actions {
        out += &format!(
            "|{:?} {} {} {}",
            a.direction,
            a.message.map_vars(&mut flat),
            a.peer.map_vars(&mut flat),
            a.formula.map_free_vars(&mut flat)
        );
    }
    out
}

impl<'a> Ctx<'a> {
    fn new(scenario: &'a Scenario, opts: &'a SearchOptions) -> Self {
        Ctx { scenario, opts, stats: SearchStats::default(), twins: twins(scenario) }
    }
}

impl<'a> Ctx<'a> {
    fn solve(&mut self, cs: &[Constraint], knowledge: &Knowledge, under: &Substitution) -> Vec<Solution> {
        let seq = ConstraintSeq { constraints: cs.to_vec(), solution: under.clone() };
        let (sols, steps) = solve_counted(&seq, knowledge.terms());
        self.stats.solver_calls += 1;
        self.stats.solver_steps += steps as u64;
        sols
    }

    /// Continue `st` under `w`, re-checking open constraints if `w` binds more.
    fn rebind(&mut self, st: &SearchState, w: Substitution) -> Vec<SearchState> {
        if w == st.subst {
            let mut next = st.clone();
            next.subst = w;
            return vec![next];
        }
        self.solve(&st.constraints, &st.knowledge, &w)
            .into_iter()
            .map(|sol| {
                let mut next = st.clone();
                next.subst = sol.subst;
                next.constraints = sol.residual;
                next
            })
            .collect()
    }

    fn role_order(&self, st: &SearchState) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..st.roles.len()).filter(|&i| st.roles[i].can_act()).collect();
        if self.opts.symmetry {
            // A twin waits until its predecessor has started or dropped out;
            // the runs it skips are renamings of runs that are kept.
            idx.retain(|&i| match self.twins[i] {
                Some(j) if st.roles[i].next == 0 => st.roles[j].next > 0 || st.roles[j].halted,
                _ => true,
            });
        }
        if self.opts.order == BranchOrder::Lex {
            idx.sort_by_key(|&i| {
                let r = &st.roles[i].role;
                (r.label.clone(), r.identity.to_string(), i)
            });
        }
        idx
    }

    fn expand(&mut self, st: &SearchState) -> StepResult {
        let mut out = StepResult::default();
        let order = self.role_order(st);
        if self.opts.eager_sends {
            let eager = order.iter().copied().find(|&i| {
                let a = st.roles[i].current().expect("active role");
                a.direction == Direction::Send && a.formula.is_true()
            });
            if let Some(i) = eager {
                self.step_role(st, i, &mut out);
                let mut quiet = st.clone();
                quiet.roles[i].halted = true;
                out.successors.push(quiet);
                return out;
            }
        }
        for i in order {
            self.step_role(st, i, &mut out);
        }
        out
    }

    /// Evaluate the action's formula; record confirmed violations and
    /// return the substitutions the run continues with.
    fn check(
        &mut self,
        st: &SearchState,
        role: usize,
        action_index: usize,
        formula: &Formula,
        out: &mut StepResult,
    ) -> Vec<Substitution> {
        if formula.is_true() {
            return vec![st.subst.clone()];
        }
        let witnesses = eval(formula, &st.trace, &st.subst);
        let refutations = refute(formula, &st.trace, &st.subst);
        for r in refutations.iter() {
            self.stats.candidates += 1;
            out.violations.extend(detect_violation(self.scenario, st, role, action_index, formula, r, !self.opts.stop_at_first));
        }
        let mut conts: Vec<Substitution> = witnesses.into_iter().collect();
        if self.opts.continue_after_violation && !refutations.is_empty() && !conts.contains(&st.subst) {
            conts.push(st.subst.clone());
        }
        conts
    }

    fn step_role(&mut self, st: &SearchState, i: usize, out: &mut StepResult) {
        let cursor = &st.roles[i];
        let action = cursor.current().expect("unfinished role").clone();
        let actor = cursor.role.identity.clone();
        let action_index = cursor.next;
        let event = Event {
            actor,
            message: action.message.clone(),
            peer: action.peer.clone(),
            direction: action.direction,
        };
        match action.direction {
            Direction::Send => {
                for w in self.check(st, i, action_index, &action.formula, out) {
                    for mut next in self.rebind(st, w) {
                        next.knowledge.add(action.message.clone());
                        next.trace.push(event.clone());
                        next.origins.push((i, action_index));
                        next.roles[i].next += 1;
                        out.successors.push(next);
                    }
                }
            }
            Direction::Receive => {
                let obligation = Constraint::new(action.message.clone(), st.knowledge.len());
                let mut constraints = st.constraints.clone();
                constraints.push(obligation.clone());
                for sol in self.solve(&constraints, &st.knowledge, &st.subst) {
                    let mut mid = st.clone();
                    mid.subst = sol.subst;
                    mid.constraints = sol.residual;
                    mid.receives.push(obligation.clone());
                    mid.trace.push(event.clone());
                    mid.origins.push((i, action_index));
                    mid.roles[i].next += 1;
                    for w in self.check(&mid, i, action_index, &action.formula, out) {
                        out.successors.extend(self.rebind(&mid, w));
                    }
                }
            }
        }
    }
}

/// Every successor of `st` together with the violations found on the way:
/// each role that can act performs its next action, in every way the
/// intruder and the formula witnesses allow.
pub fn step(scenario: &Scenario, st: &SearchState, opts: &SearchOptions) -> StepResult {
    let opts = SearchOptions { eager_sends: false, symmetry: false, ..opts.clone() };
    Ctx::new(scenario, &opts).expand(st)
}

/// Try to turn the refutation `r` of `formula` at `st` into concrete
/// violations: re-solve the intruder constraints, ground what is left
/// (principal variables range over the scenario's agents, everything else
/// becomes a fresh intruder atom), check derivability of every received
/// message and confirm that the formula is false on the ground trace.
pub fn detect_violation(
    scenario: &Scenario,
    st: &SearchState,
    role: usize,
    action_index: usize,
    formula: &Formula,
    r: &Substitution,
    all: bool,
) -> Vec<Violation> {
    let mut found = Vec::new();
    let seq = ConstraintSeq { constraints: st.constraints.clone(), solution: r.clone() };
    let (sols, _) = solve_counted(&seq, st.knowledge.terms());
    for sol in sols {
        let s = &sol.subst;
        let mut open = BTreeSet::new();
        for e in &st.trace.substitute(s).events {
            e.actor.collect_vars(&mut open);
            e.message.collect_vars(&mut open);
            e.peer.collect_vars(&mut open);
        }
        for c in &st.receives {
            s.apply(&c.goal).collect_vars(&mut open);
        }
        let agent_images: BTreeSet<Var> =
            scenario.agent_vars.iter().filter_map(|v| s.apply(&Term::Var(v.clone())).as_var().cloned()).collect();
        let (agent_vars, other_vars): (Vec<Var>, Vec<Var>) = open.into_iter().partition(|v| agent_images.contains(v));

        let mut base = s.clone();
        let mut namer = FreshNamer::default();
        for v in &other_vars {
            base = unify(&Term::Var(v.clone()), &namer.next_constant(), &base).expect("open variable");
        }
        let n = scenario.agents.len();
        let combos = n.checked_pow(agent_vars.len() as u32).unwrap_or(usize::MAX);
        for mut code in 0..combos {
            let mut g = base.clone();
            let mut ok = true;
            for v in &agent_vars {
                match unify(&Term::Var(v.clone()), &scenario.agents[code % n], &g) {
                    Some(x) => g = x,
                    None => ok = false,
                }
                code /= n;
            }
            if !ok || !confirm(st, formula, &g) {
                continue;
            }
            let v = build_violation(st, role, action_index, formula, &g);
            found.push(v);
            if !all {
                return found;
            }
        }
    }
    found
}

fn confirm(st: &SearchState, formula: &Formula, g: &Substitution) -> bool {
    let knowledge: Vec<Term> = st.knowledge.terms().iter().map(|t| g.apply(t)).collect();
    for c in &st.receives {
        let goal = g.apply(&c.goal);
        if !goal.is_ground() || !derivable_ground(&goal, &knowledge[..c.known], goal.depth()) {
            return false;
        }
    }
    let trace = st.trace.substitute(g);
    if !trace.events.iter().all(Event::is_ground) {
        return false;
    }
    eval(&formula.apply(g), &trace, &Substitution::new()).is_empty()
}

fn build_violation(st: &SearchState, role: usize, action_index: usize, formula: &Formula, g: &Substitution) -> Violation {
    let trace = st.trace.substitute(g);
    let mut names: BTreeMap<Term, Term> = BTreeMap::new();
    for e in &trace.events {
        for t in [&e.actor, &e.message, &e.peer] {
            collect_fresh(t, &mut names);
        }
    }
    let cursor = &st.roles[role];
    let role_vars = cursor.role.vars();
    let mut bindings = g.restrict(&role_vars);
    for (_, t) in bindings.iter() {
        collect_fresh(t, &mut names);
    }
    let instantiated = formula.apply(g);
    let rename_term = |t: &Term| rename_fresh(t, &names);
    let trace = Trace::new(
        trace
            .events
            .iter()
            .map(|e| Event {
                actor: rename_term(&e.actor),
                message: rename_term(&e.message),
                peer: rename_term(&e.peer),
                direction: e.direction,
            })
            .collect(),
    );
    bindings = Substitution::from_bindings(bindings.iter().map(|(v, t)| (v.clone(), rename_term(t))))
        .expect("ground bindings");
    let instantiated = instantiated.map_free_vars(&mut |v| Term::Var(v.clone()));
    let instantiated = rename_formula(&instantiated, &names);
    Violation {
        trace,
        formula: formula.clone(),
        instantiated,
        role_label: cursor.role.label.clone(),
        role_index: role,
        action_index,
        position: st.trace.len(),
        bindings,
        origins: st.origins.clone(),
    }
}

/// Number fresh atoms in order of first appearance, so that renamings of
/// the same attack compare equal.
fn collect_fresh(t: &Term, names: &mut BTreeMap<Term, Term>) {
    match t {
        Term::Const(c) if c.fresh => {
            if !names.contains_key(t) {
                let n = names.len() + 1;
                names.insert(t.clone(), Term::fresh_constant(&format!("ni{n}")));
            }
        }
        _ => {
            for ch in t.children() {
                collect_fresh(ch, names);
            }
        }
    }
}

fn rename_fresh(t: &Term, names: &BTreeMap<Term, Term>) -> Term {
    match t {
        Term::Const(_) => names.get(t).cloned().unwrap_or_else(|| t.clone()),
        Term::Var(_) => t.clone(),
        Term::Pair(a, b) => Term::pair(rename_fresh(a, names), rename_fresh(b, names)),
        Term::Enc(a, b) => Term::enc(rename_fresh(a, names), rename_fresh(b, names)),
        Term::Hash(a) => Term::hash(rename_fresh(a, names)),
        Term::Pk(a) => Term::pk(rename_fresh(a, names)),
    }
}

fn rename_formula(f: &Formula, names: &BTreeMap<Term, Term>) -> Formula {
    use crate::logic::{EventPattern, TermRef};
    let ev = |e: &Event| Event {
        actor: rename_fresh(&e.actor, names),
        message: rename_fresh(&e.message, names),
        peer: rename_fresh(&e.peer, names),
        direction: e.direction,
    };
    let pat = |p: &EventPattern| match p {
        EventPattern::Literal(e) => EventPattern::Literal(ev(e)),
        other => other.clone(),
    };
    let tref = |r: &TermRef| match r {
        TermRef::Term(t) => TermRef::Term(rename_fresh(t, names)),
        other => other.clone(),
    };
    let go = |g: &Formula| Box::new(rename_formula(g, names));
    match f {
        Formula::True | Formula::False | Formula::LastEvent(_) => f.clone(),
        Formula::And(a, b) => Formula::And(go(a), go(b)),
        Formula::Or(a, b) => Formula::Or(go(a), go(b)),
        Formula::Implies(a, b) => Formula::Implies(go(a), go(b)),
        Formula::Not(a) => Formula::Not(go(a)),
        Formula::ForallEvent(e, a) => Formula::ForallEvent(e.clone(), go(a)),
        Formula::ExistsEvent(e, a) => Formula::ExistsEvent(e.clone(), go(a)),
        Formula::ExistsTerm(v, a) => Formula::ExistsTerm(v.clone(), go(a)),
        Formula::EventEq(p, q) => Formula::EventEq(pat(p), pat(q)),
        Formula::Subterm(x, y) => Formula::Subterm(tref(x), tref(y)),
    }
}

struct Explorer<'a> {
    ctx: Ctx<'a>,
    found: Vec<Violation>,
    seen: BTreeSet<ViolationKey>,
    deadline: Option<Instant>,
    capped: bool,
    stop: bool,
}

impl<'a> Explorer<'a> {
    fn new(scenario: &'a Scenario, opts: &'a SearchOptions, deadline: Option<Instant>) -> Self {
        Explorer {
            ctx: Ctx::new(scenario, opts),
            found: Vec::new(),
            seen: BTreeSet::new(),
            deadline,
            capped: false,
            stop: false,
        }
    }

    fn over_budget(&self) -> bool {
        if let Some(max) = self.ctx.opts.max_states {
            if self.ctx.stats.states as usize >= max {
                return true;
            }
        }
        matches!(self.deadline, Some(d) if Instant::now() >= d)
    }

    /// Expand one state; returns its successors unless the search should end.
    fn visit(&mut self, st: &SearchState) -> Vec<SearchState> {
        if self.stop {
            return vec![];
        }
        if self.over_budget() {
            self.capped = true;
            self.stop = true;
            return vec![];
        }
        self.ctx.stats.states += 1;
        if std::env::var("TL_DEBUG").is_ok() && self.ctx.stats.states % 20000 == 0 {
            eprintln!("--- {} pos={:?}\n{}", self.ctx.stats.states, st.roles.iter().map(|r| (r.next, r.halted)).collect::<Vec<_>>(), st.resolved_trace().events.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"));
        }
        let res = self.ctx.expand(st);
        for v in res.violations {
            if self.seen.insert(v.key()) {
                self.found.push(v);
                if self.ctx.opts.stop_at_first {
                    self.stop = true;
                    return vec![];
                }
            }
        }
        res.successors
    }

    fn dfs(&mut self, st: &SearchState) {
        for next in self.visit(st) {
            if self.stop {
                return;
            }
            self.dfs(&next);
        }
    }
}

/// Depth-first exploration of the runs of `scenario`.
///
/// Formulas only see a trace as a set of events plus its last event, and a
/// send only ever adds to the intruder's knowledge. So any violation also
/// shows up in a run where each assertion-free send happens as soon as its
/// role reaches it, or its role stops for good. With `eager_sends` the
/// search explores only those runs, one representative per reordering.
pub fn search(scenario: &Scenario, opts: &SearchOptions) -> SearchOutcome {
    let deadline = opts.time_limit.map(|d| Instant::now() + d);
    let root = SearchState::initial(scenario);
    let parallel = opts.jobs > 1 && opts.max_states.is_none() && opts.time_limit.is_none();

    let mut ex = Explorer::new(scenario, opts, deadline);
    if !parallel {
        ex.dfs(&root);
        return finish(ex.found, ex.ctx.stats, ex.capped, opts);
    }

    let subtrees = ex.visit(&root);
    if ex.stop {
        return finish(ex.found, ex.ctx.stats, ex.capped, opts);
    }
    let results: Vec<Mutex<Option<(Vec<Violation>, SearchStats)>>> =
        subtrees.iter().map(|_| Mutex::new(None)).collect();
    let next_task = AtomicUsize::new(0);
    // With stop_at_first, subtrees after the first one with a finding are
    // irrelevant; this index lets workers skip them.
    let first_hit = AtomicUsize::new(usize::MAX);
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.min(subtrees.len().max(1)) {
            scope.spawn(|| loop {
                let i = next_task.fetch_add(1, Ordering::SeqCst);
                if i >= subtrees.len() {
                    break;
                }
                if opts.stop_at_first && i > first_hit.load(Ordering::SeqCst) {
                    continue;
                }
                let mut sub = Explorer::new(scenario, opts, None);
                sub.dfs(&subtrees[i]);
                if opts.stop_at_first && !sub.found.is_empty() {
                    first_hit.fetch_min(i, Ordering::SeqCst);
                }
                *results[i].lock().unwrap() = Some((sub.found, sub.ctx.stats));
            });
        }
    });

    let mut found = ex.found;
    let mut seen = ex.seen;
    let mut stats = ex.ctx.stats;
    for slot in results {
        let Some((vs, st)) = slot.into_inner().unwrap() else { break };
        stats.add(&st);
        let mut hit = false;
        for v in vs {
            if seen.insert(v.key()) {
                found.push(v);
                hit = true;
            }
        }
        if opts.stop_at_first && hit {
            break;
        }
    }
    finish(found, stats, false, opts)
}

fn finish(mut found: Vec<Violation>, stats: SearchStats, capped: bool, opts: &SearchOptions) -> SearchOutcome {
    if opts.stop_at_first {
        found.truncate(1);
    } else {
        // One violation per class, the least under the report order.
        found.sort_by_cached_key(Violation::key);
        let mut seen = BTreeSet::new();
        found.retain(|v| seen.insert(v.class()));
    }
    SearchOutcome { violations: found, stats, status: if capped { Status::Capped } else { Status::Exhausted } }
}

/// Alice&Bob rendering. A send immediately followed by its delivery to the
/// intended peer is one line; the final event always stands alone since it
/// is where the failed check happened.
pub fn render_trace(tr: &Trace) -> Vec<String> {
    let eps = Term::intruder();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tr.events.len() {
        let e = &tr.events[i];
        match e.direction {
            Direction::Send => {
                let next = tr.events.get(i + 1);
                let delivered = next.filter(|n| {
                    i + 2 < tr.events.len()
                        && n.direction == Direction::Receive
                        && n.message == e.message
                        && n.actor == e.peer
                        && n.peer == e.actor
                });
                if delivered.is_some() {
                    out.push(format!("{} → {} : {}", e.actor, e.peer, e.message));
                    i += 2;
                    continue;
                }
                if e.peer == eps {
                    out.push(format!("{} → ε : {}", e.actor, e.message));
                } else {
                    out.push(format!("{} → ε({}) : {}", e.actor, e.peer, e.message));
                }
            }
            Direction::Receive => {
                if e.peer == eps {
                    out.push(format!("ε → {} : {}", e.actor, e.message));
                } else {
                    out.push(format!("ε({}) → {} : {}", e.peer, e.actor, e.message));
                }
            }
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Formula;
    use crate::model::Action;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }
    fn v(n: &str, i: u32) -> Term {
        Term::var(n, i)
    }

    fn responder_scenario() -> Scenario {
        let role = ExtendedRole {
            label: "responder".into(),
            identity: c("b"),
            actions: vec![Action::recv(v("Na", 1), v("A", 1)).asserting(Formula::was_sent(v("A", 1), v("Na", 1), c("b")))],
        };
        Scenario::new(vec![role], vec![c("a"), c("s"), Term::pk(c("a")), Term::pk(c("s"))]).unwrap()
    }

    #[test]
    fn single_receive_binds_sender_to_the_intruder() {
        let scn = responder_scenario();
        let res = step(&scn, &SearchState::initial(&scn), &SearchOptions::default());
        let runs: Vec<_> = res.successors.iter().filter(|s| s.subst.get(&Var::new("A", 1)).is_some()).collect();
        assert_eq!(runs.len(), 1);
        let st = runs[0];
        assert_eq!(st.trace.len(), 1);
        let closed = st.closed_bindings();
        assert_eq!(closed.apply(&v("A", 1)), Term::intruder());
        assert!(closed.apply(&v("Na", 1)).is_fresh_constant());
        assert_eq!(render_trace(&st.trace.substitute(&closed)), vec!["ε → b : ni1"]);
    }

    #[test]
    fn finished_states_have_no_successors() {
        let scn = Scenario::new(vec![], vec![]).unwrap();
        let res = step(&scn, &SearchState::initial(&scn), &SearchOptions::default());
        assert!(res.successors.is_empty());
        let out = search(&scn, &SearchOptions::default());
        assert!(out.violations.is_empty());
        assert_eq!(out.status, Status::Exhausted);
    }

    #[test]
    fn underivable_receive_stops_the_run() {
        let role = ExtendedRole {
            label: "r".into(),
            identity: c("b"),
            actions: vec![Action::recv(Term::enc(c("k"), Term::pk(c("b"))), c("a"))],
        };
        let scn = Scenario::new(vec![role], vec![]).unwrap();
        assert!(step(&scn, &SearchState::initial(&scn), &SearchOptions::default()).successors.is_empty());
    }

    #[test]
    fn freshness_false_alarm_is_not_reported() {
        // b receives X then Y; the check is that Y does not occur earlier.
        // Symbolically Y may equal X, but a fresh grounding does not make
        // that happen by itself, so only instantiations that really reuse
        // an old value are reported.
        let role = ExtendedRole {
            label: "r".into(),
            identity: c("b"),
            actions: vec![
                Action::recv(v("X", 1), c("a")),
                Action::recv(v("Y", 1), c("a")).asserting(Formula::freshness(v("Y", 1))),
            ],
        };
        let scn = Scenario::new(vec![role], vec![]).unwrap();
        let out = search(&scn, &SearchOptions { stop_at_first: false, ..Default::default() });
        assert!(!out.violations.is_empty());
        for viol in &out.violations {
            let y = viol.bindings.apply(&v("Y", 1));
            assert_eq!(y, viol.bindings.apply(&v("X", 1)));
            assert!(eval(&viol.instantiated, &viol.trace, &Substitution::new()).is_empty());
        }
    }

    #[test]
    fn true_is_never_violated() {
        let role = ExtendedRole { label: "r".into(), identity: c("a"), actions: vec![Action::send(c("m"), c("b"))] };
        let scn = Scenario::new(vec![role], vec![]).unwrap();
        let out = search(&scn, &SearchOptions { stop_at_first: false, ..Default::default() });
        assert!(out.violations.is_empty());
        // The root, the run after the send, and the run that stops instead.
        assert_eq!(out.stats.states, 3);
    }

    #[test]
    fn rendering_merges_relays_except_at_the_end() {
        let m = Term::tuple([c("s"), c("b"), c("a")]);
        let ev = |a: &str, d: Direction, p: &str, m: &Term| Event { actor: c(a), message: m.clone(), peer: c(p), direction: d };
        let tr = Trace::new(vec![
            ev("s", Direction::Send, "b", &m),
            ev("b", Direction::Receive, "s", &m),
            ev("a", Direction::Send, "ε", &c("x")),
            ev("s", Direction::Send, "b", &m),
            ev("b", Direction::Receive, "s", &m),
        ]);
        assert_eq!(
            render_trace(&tr),
            vec!["s → b : s,b,a", "a → ε : x", "s → ε(b) : s,b,a", "ε(s) → b : s,b,a"]
        );
        assert!(render_trace(&Trace::default()).is_empty());
    }

    #[test]
    fn parallel_search_matches_sequential() {
        let role = |id: &str, peer: &str| ExtendedRole {
            label: "r".into(),
            identity: c(id),
            actions: vec![
                Action::send(c(id), c(peer)),
                Action::recv(v("X", if id == "a" { 1 } else { 2 }), c(peer))
                    .asserting(Formula::freshness(v("X", if id == "a" { 1 } else { 2 }))),
            ],
        };
        let scn = Scenario::new(vec![role("a", "b"), role("b", "a")], vec![]).unwrap();
        for stop in [true, false] {
            let base = SearchOptions { stop_at_first: stop, ..Default::default() };
            let seq = search(&scn, &base);
            let par = search(&scn, &SearchOptions { jobs: 3, ..base.clone() });
            assert_eq!(seq.violations, par.violations);
            assert_eq!(seq.stats, par.stats);
        }
    }
}
