//! The `.tlp` specification language.
//!
//! ```text
//! role responder(A, Na) as B {
//!   recv Na from A assert exists e in tr : e = <A : Na -> B>
//! }
//! scenario { responder(_, _) as b }
//! ```
//!
//! Identifiers starting with an uppercase letter are variables, lowercase
//! ones are constants. `eps` (or `ε`) is the intruder. `{m}k` is encryption,
//! `v(k, m)` is Vernam encryption and means `{m}k`, `pk(x)` and `h(x)` are
//! public keys and hashes. Commas build right-nested pairs; inside argument
//! lists a pair needs parentheses. `#` starts a comment.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::logic::{EventPattern, EventVar, Formula, TermRef};
use crate::model::{Action, Direction, Event, ExtendedRole, ModelError, RoleTemplate, Scenario};
use crate::term::{Term, Var};

#[derive(Clone, PartialEq, Eq, Debug, Error)]
#[error("{line}:{column}: {message}")]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Instance {
    pub role: String,
    /// `None` for `_`.
    pub args: Vec<Option<Term>>,
    pub identity: Option<Term>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ScenarioBlock {
    pub instances: Vec<Instance>,
    pub knowledge: Vec<Term>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SpecOptions {
    pub all: Option<bool>,
    pub max_states: Option<u64>,
    pub halt_on_violation: Option<bool>,
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SpecFile {
    pub roles: Vec<RoleTemplate>,
    pub scenario: ScenarioBlock,
    pub options: SpecOptions,
}

impl SpecFile {
    pub fn template(&self, name: &str) -> Option<&RoleTemplate> {
        self.roles.iter().find(|r| r.name == name)
    }

    /// Instantiate the scenario block. Instance `k` (from 1) renames its
    /// unbound variables with index `k`.
    pub fn to_scenario(&self) -> Result<Scenario, ModelError> {
        let mut roles = Vec::new();
        for (k, inst) in self.scenario.instances.iter().enumerate() {
            let t = self.template(&inst.role).ok_or_else(|| ModelError::UnknownRole(inst.role.clone()))?;
            roles.push(t.instantiate(&inst.args, inst.identity.as_ref(), k as u32 + 1)?);
        }
        Scenario::new(roles, self.scenario.knowledge.clone())
    }
}

const KEYWORDS: &[&str] = &[
    "role", "as", "send", "to", "recv", "from", "assert", "scenario", "knowledge", "options", "true", "false", "and",
    "or", "not", "implies", "forall", "exists", "in", "tr", "subterm", "last_event", "msg", "pk", "h", "v", "eps",
];

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| Diagnostic { line, column, message };
    while i < chars.len() {
        let ch = chars[i];
        let (l0, c0) = (line, col);
        if ch == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if ch == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == 'ε' {
            let start = i;
            if ch == 'ε' {
                i += 1;
            } else {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Spanned { tok: Tok::Ident(if s == "ε" { "eps".into() } else { s }), line: l0, column: c0 });
            continue;
        }
        if ch.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let n = s.parse::<u64>().map_err(|_| err(l0, c0, format!("number `{s}` is too large")))?;
            out.push(Spanned { tok: Tok::Num(n), line: l0, column: c0 });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym: &'static str = match two.as_str() {
            "->" => "->",
            "<-" => "<-",
            _ => match ch {
                '(' => "(",
                ')' => ")",
                '{' => "{",
                '}' => "}",
                ',' => ",",
                ':' => ":",
                '=' => "=",
                '<' => "<",
                '>' => ">",
                '_' => "_",
                other => return Err(err(l0, c0, format!("unexpected character `{}`", other.escape_default()))),
            },
        };
        i += sym.chars().count();
        col += sym.chars().count();
        out.push(Spanned { tok: Tok::Sym(sym), line: l0, column: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

const MAX_NESTING: usize = 128;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    depth: usize,
    event_scope: Vec<EventVar>,
}

type PResult<T> = Result<T, Diagnostic>;

fn is_var_name(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_uppercase())
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here<T>(&self, message: impl Into<String>) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(Diagnostic { line: s.line, column: s.column, message: message.into() })
    }

    fn error_at<T>(&self, pos: usize, message: impl Into<String>) -> PResult<T> {
        let s = &self.toks[pos];
        Err(Diagnostic { line: s.line, column: s.column, message: message.into() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error_here(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.error_here(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    /// A non-keyword identifier.
    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            Tok::Ident(s) => self.error_here(format!("`{s}` is a reserved word and cannot be used as {what}")),
            other => self.error_here(format!("expected {what}, found {other}")),
        }
    }

    fn var_binder(&mut self, what: &str) -> PResult<Var> {
        let pos = self.pos;
        let s = self.ident(what)?;
        if !is_var_name(&s) {
            return self.error_at(pos, format!("{what} `{s}` must be a variable (start with an uppercase letter)"));
        }
        Ok(Var::new(&s, 0))
    }

    fn nest(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.error_here("nesting too deep");
        }
        Ok(())
    }

    // ---- terms

    fn term(&mut self) -> PResult<Term> {
        self.nest()?;
        let first = self.term1()?;
        let t = if self.eat_sym(",") { Term::pair(first, self.term()?) } else { first };
        self.depth -= 1;
        Ok(t)
    }

    fn term1(&mut self) -> PResult<Term> {
        self.nest()?;
        let t = self.term1_inner()?;
        self.depth -= 1;
        Ok(t)
    }

    fn term1_inner(&mut self) -> PResult<Term> {
        if self.eat_sym("{") {
            let body = self.term()?;
            self.expect_sym("}")?;
            let key = self.term1()?;
            return Ok(Term::enc(body, key));
        }
        if self.eat_sym("(") {
            let t = self.term()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        match self.peek().clone() {
            Tok::Ident(s) if s == "pk" || s == "h" => {
                self.bump();
                self.expect_sym("(")?;
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(if s == "pk" { Term::pk(t) } else { Term::hash(t) })
            }
            Tok::Ident(s) if s == "v" => {
                self.bump();
                self.expect_sym("(")?;
                let k = self.term1()?;
                self.expect_sym(",")?;
                let m = self.term1()?;
                self.expect_sym(")")?;
                Ok(Term::vernam(k, m))
            }
            Tok::Ident(s) if s == "eps" => {
                self.bump();
                Ok(Term::intruder())
            }
            Tok::Ident(_) => {
                let s = self.ident("a term")?;
                Ok(if is_var_name(&s) { Term::var(&s, 0) } else { Term::constant(&s) })
            }
            other => self.error_here(format!("expected a term, found {other}")),
        }
    }

    // ---- formulas

    fn formula(&mut self) -> PResult<Formula> {
        self.nest()?;
        let lhs = self.disjunction()?;
        let f = if self.eat_kw("implies") { Formula::implies(lhs, self.formula()?) } else { lhs };
        self.depth -= 1;
        Ok(f)
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut f = self.conjunction()?;
        while self.eat_kw("or") {
            f = Formula::or(f, self.conjunction()?);
        }
        Ok(f)
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut f = self.unary()?;
        while self.eat_kw("and") {
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> PResult<Formula> {
        self.nest()?;
        let f = self.unary_inner()?;
        self.depth -= 1;
        Ok(f)
    }

    fn unary_inner(&mut self) -> PResult<Formula> {
        if self.eat_kw("not") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_kw("forall") || self.is_kw("exists") {
            let universal = self.is_kw("forall");
            self.bump();
            let pos = self.pos;
            let name = self.ident("a bound variable")?;
            if self.eat_kw("in") {
                self.expect_kw("tr")?;
                self.expect_sym(":")?;
                if is_var_name(&name) {
                    return self.error_at(pos, format!("event variable `{name}` must start with a lowercase letter"));
                }
                let e: EventVar = name.as_str().into();
                self.event_scope.push(e.clone());
                let body = self.formula();
                self.event_scope.pop();
                let body = Box::new(body?);
                return Ok(if universal { Formula::ForallEvent(e, body) } else { Formula::ExistsEvent(e, body) });
            }
            if universal {
                return self.error_here("`forall` ranges over events: expected `in tr`");
            }
            if !is_var_name(&name) {
                return self.error_at(pos, format!("lowercase variable `{name}` in binder position"));
            }
            self.expect_sym(":")?;
            return Ok(Formula::exists_term(Var::new(&name, 0), self.formula()?));
        }
        self.atom()
    }

    fn event_var(&mut self) -> PResult<EventVar> {
        let pos = self.pos;
        let name = self.ident("an event variable")?;
        let e: EventVar = name.as_str().into();
        if !self.event_scope.contains(&e) {
            return self.error_at(pos, format!("unbound event variable `{name}`"));
        }
        Ok(e)
    }

    fn event_pattern(&mut self) -> PResult<EventPattern> {
        if self.eat_sym("<") {
            let actor = self.term1()?;
            self.expect_sym(":")?;
            let message = self.term()?;
            let direction = if self.eat_sym("->") {
                Direction::Send
            } else if self.eat_sym("<-") {
                Direction::Receive
            } else {
                return self.error_here(format!("expected `->` or `<-`, found {}", self.peek()));
            };
            let peer = self.term1()?;
            self.expect_sym(">")?;
            return Ok(EventPattern::Literal(Event { actor, message, peer, direction }));
        }
        Ok(EventPattern::Bound(self.event_var()?))
    }

    fn term_ref(&mut self) -> PResult<TermRef> {
        if self.is_kw("msg") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            self.bump();
            let e = self.event_var()?;
            self.expect_sym(")")?;
            return Ok(TermRef::Msg(e));
        }
        Ok(TermRef::Term(self.term1()?))
    }

    fn atom(&mut self) -> PResult<Formula> {
        if self.eat_kw("true") {
            return Ok(Formula::True);
        }
        if self.eat_kw("false") {
            return Ok(Formula::False);
        }
        if self.eat_sym("(") {
            let f = self.formula()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        if self.eat_kw("subterm") {
            self.expect_sym("(")?;
            let a = self.term_ref()?;
            self.expect_sym(",")?;
            let b = self.term_ref()?;
            self.expect_sym(")")?;
            return Ok(Formula::Subterm(a, b));
        }
        if self.eat_kw("last_event") {
            self.expect_sym("(")?;
            let e = self.event_var()?;
            self.expect_sym(")")?;
            return Ok(Formula::LastEvent(e));
        }
        if self.is_sym("<") || matches!(self.peek(), Tok::Ident(_)) {
            let a = self.event_pattern()?;
            self.expect_sym("=")?;
            let b = self.event_pattern()?;
            return Ok(Formula::EventEq(a, b));
        }
        self.error_here(format!("expected a formula, found {}", self.peek()))
    }

    // ---- declarations

    fn role(&mut self) -> PResult<RoleTemplate> {
        let pos = self.pos;
        let name = self.ident("a role name")?;
        if is_var_name(&name) {
            return self.error_at(pos, format!("role name `{name}` must start with a lowercase letter"));
        }
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let p = self.pos;
                let v = self.var_binder("parameter")?;
                if params.contains(&v) {
                    return self.error_at(p, format!("duplicate parameter `{v}`"));
                }
                params.push(v);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        self.expect_kw("as")?;
        let p = self.pos;
        let identity = self.var_binder("role identity")?;
        if params.contains(&identity) {
            return self.error_at(p, format!("identity `{identity}` is also a parameter"));
        }
        self.expect_sym("{")?;
        let mut actions = Vec::new();
        while !self.eat_sym("}") {
            let action = if self.eat_kw("send") {
                let m = self.term()?;
                self.expect_kw("to")?;
                Action::send(m, self.term1()?)
            } else if self.eat_kw("recv") {
                let m = self.term()?;
                self.expect_kw("from")?;
                Action::recv(m, self.term1()?)
            } else {
                return self.error_here(format!("expected `send`, `recv` or `}}`, found {}", self.peek()));
            };
            let action = if self.eat_kw("assert") { action.asserting(self.formula()?) } else { action };
            actions.push(action);
        }
        let role = ExtendedRole { label: name.clone(), identity: Term::Var(identity), actions };
        Ok(RoleTemplate { name, params, role })
    }

    fn ground_arg(&mut self) -> PResult<Term> {
        let pos = self.pos;
        let t = self.term1()?;
        if !t.is_ground() {
            return self.error_at(pos, format!("`{t}` is not ground; scenario terms must be built from constants"));
        }
        Ok(t)
    }

    fn scenario(&mut self, roles: &[RoleTemplate], block: &mut ScenarioBlock) -> PResult<()> {
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.eat_kw("knowledge") {
                loop {
                    block.knowledge.push(self.ground_arg()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                continue;
            }
            let pos = self.pos;
            let role = self.ident("a role name")?;
            let Some(t) = roles.iter().find(|r| r.name == role) else {
                return self.error_at(pos, format!("unknown role `{role}`"));
            };
            self.expect_sym("(")?;
            let mut args = Vec::new();
            if !self.is_sym(")") {
                loop {
                    if self.eat_sym("_") {
                        args.push(None);
                    } else {
                        args.push(Some(self.ground_arg()?));
                    }
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            if args.len() != t.params.len() {
                return self.error_at(
                    pos,
                    format!("role `{role}` takes {} argument(s), got {}", t.params.len(), args.len()),
                );
            }
            let identity = if self.eat_kw("as") {
                let p = self.pos;
                let id = self.term1()?;
                if !(id.is_atomic() && id.is_ground()) {
                    return self.error_at(p, format!("identity `{id}` must be a constant"));
                }
                Some(id)
            } else {
                None
            };
            block.instances.push(Instance { role, args, identity });
        }
        Ok(())
    }

    fn options(&mut self, opts: &mut SpecOptions) -> PResult<()> {
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            let pos = self.pos;
            let key = match self.bump() {
                Tok::Ident(s) => s,
                other => return self.error_at(pos, format!("expected an option name, found {other}")),
            };
            self.expect_sym("=")?;
            let vpos = self.pos;
            let value = self.bump();
            let boolean = |v: &Tok| match v {
                Tok::Ident(s) if s == "true" => Some(true),
                Tok::Ident(s) if s == "false" => Some(false),
                _ => None,
            };
            match key.as_str() {
                "all" | "halt_on_violation" => {
                    let Some(b) = boolean(&value) else {
                        return self.error_at(vpos, format!("`{key}` expects `true` or `false`"));
                    };
                    if key == "all" {
                        opts.all = Some(b);
                    } else {
                        opts.halt_on_violation = Some(b);
                    }
                }
                "max_states" => match value {
                    Tok::Num(n) => opts.max_states = Some(n),
                    _ => return self.error_at(vpos, "`max_states` expects a number"),
                },
                _ => return self.error_at(pos, format!("unknown option `{key}`")),
            }
        }
        Ok(())
    }

    fn file(&mut self) -> PResult<SpecFile> {
        let mut spec = SpecFile::default();
        let mut seen_scenario = false;
        loop {
            let pos = self.pos;
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "role" => {
                    self.bump();
                    let name_pos = self.pos;
                    let r = self.role()?;
                    if spec.template(&r.name).is_some() {
                        return self.error_at(name_pos, format!("role `{}` is declared twice", r.name));
                    }
                    spec.roles.push(r);
                }
                Tok::Ident(s) if s == "scenario" => {
                    self.bump();
                    if seen_scenario {
                        return self.error_at(pos, "only one scenario block is allowed");
                    }
                    seen_scenario = true;
                    let roles = spec.roles.clone();
                    self.scenario(&roles, &mut spec.scenario)?;
                }
                Tok::Ident(s) if s == "options" => {
                    self.bump();
                    self.options(&mut spec.options)?;
                }
                other => return self.error_here(format!("expected `role`, `scenario` or `options`, found {other}")),
            }
        }
        Ok(spec)
    }
}

pub fn parse(src: &str) -> Result<SpecFile, Diagnostic> {
    let toks = lex(src)?;
    Parser { toks, pos: 0, depth: 0, event_scope: Vec::new() }.file()
}

/// Parse a single term, e.g. for tests and tooling.
pub fn parse_term(src: &str) -> Result<Term, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, depth: 0, event_scope: Vec::new() };
    let t = p.term()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.error_here(format!("unexpected {}", p.peek()));
    }
    Ok(t)
}

/// Parse a single closed formula.
pub fn parse_formula(src: &str) -> Result<Formula, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, depth: 0, event_scope: Vec::new() };
    let f = p.formula()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.error_here(format!("unexpected {}", p.peek()));
    }
    Ok(f)
}

fn arg(t: &Term) -> String {
    if matches!(t, Term::Pair(..)) {
        format!("({t})")
    } else {
        t.to_string()
    }
}

/// Pretty-print a spec so that `parse(render_spec(s)) == s`.
pub fn render_spec(s: &SpecFile) -> String {
    let mut out = String::new();
    for r in &s.roles {
        let params: Vec<String> = r.params.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "role {}({}) as {} {{", r.name, params.join(", "), r.role.identity);
        for a in &r.role.actions {
            let (kw, prep) = match a.direction {
                Direction::Send => ("send", "to"),
                Direction::Receive => ("recv", "from"),
            };
            let _ = write!(out, "  {kw} {} {prep} {}", a.message, arg(&a.peer));
            if !a.formula.is_true() {
                let _ = write!(out, "\n    assert {}", a.formula);
            }
            out.push('\n');
        }
        out.push_str("}\n\n");
    }
    let sc = &s.scenario;
    if sc.instances.is_empty() && sc.knowledge.is_empty() {
        out.push_str("scenario { }\n");
    } else {
        out.push_str("scenario {\n");
        for i in &sc.instances {
            let args: Vec<String> = i.args.iter().map(|a| a.as_ref().map_or("_".into(), arg)).collect();
            let _ = write!(out, "  {}({})", i.role, args.join(", "));
            if let Some(id) = &i.identity {
                let _ = write!(out, " as {id}");
            }
            out.push('\n');
        }
        if !sc.knowledge.is_empty() {
            let ks: Vec<String> = sc.knowledge.iter().map(arg).collect();
            let _ = writeln!(out, "  knowledge {}", ks.join(", "));
        }
        out.push_str("}\n");
    }
    let o = &s.options;
    if o != &SpecOptions::default() {
        out.push_str("\noptions {\n");
        if let Some(b) = o.all {
            let _ = writeln!(out, "  all = {b}");
        }
        if let Some(n) = o.max_states {
            let _ = writeln!(out, "  max_states = {n}");
        }
        if let Some(b) = o.halt_on_violation {
            let _ = writeln!(out, "  halt_on_violation = {b}");
        }
        out.push_str("}\n");
    }
    out
}

/// Variables that a role mentions but that are neither parameters nor its
/// identity; they are bound during a run.
pub fn local_vars(t: &RoleTemplate) -> BTreeSet<Var> {
    let mut vs = t.role.vars();
    for p in &t.params {
        vs.remove(p);
    }
    if let Some(v) = t.role.identity.as_var() {
        vs.remove(v);
    }
    vs
}
