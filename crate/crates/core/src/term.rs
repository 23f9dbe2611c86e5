//! Message terms: atoms, pairing, encryption, hashing and public keys,
//! together with substitutions and syntactic unification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// Name of the intruder constant.
pub const INTRUDER: &str = "ε";

/// A constant. `fresh` marks atoms invented by the intruder (or by grounding)
/// rather than declared in a specification.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Constant {
    pub name: Arc<str>,
    pub fresh: bool,
}

/// A term variable. The index separates copies of the same template variable
/// across role instances; templates themselves use index 0.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Var {
    pub name: Arc<str>,
    pub index: u32,
}

impl Var {
    pub fn new(name: &str, index: u32) -> Self {
        Var { name: name.into(), index }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}#{}", self.name, self.index)
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Const(Constant),
    Var(Var),
    Pair(Arc<Term>, Arc<Term>),
    /// `Enc(body, key)`. Asymmetric exactly when the key is `Pk(_)`.
    Enc(Arc<Term>, Arc<Term>),
    Hash(Arc<Term>),
    Pk(Arc<Term>),
}

impl Term {
    pub fn constant(name: &str) -> Term {
        Term::Const(Constant { name: name.into(), fresh: false })
    }

    pub fn fresh_constant(name: &str) -> Term {
        Term::Const(Constant { name: name.into(), fresh: true })
    }

    pub fn intruder() -> Term {
        Term::constant(INTRUDER)
    }

    pub fn var(name: &str, index: u32) -> Term {
        Term::Var(Var::new(name, index))
    }

    pub fn pair(l: Term, r: Term) -> Term {
        Term::Pair(Arc::new(l), Arc::new(r))
    }

    /// Right-nested tuple: `tuple([a, b, c]) = Pair(a, Pair(b, c))`.
    ///
    /// Panics on an empty list.
    pub fn tuple(items: impl IntoIterator<Item = Term>) -> Term {
        let mut items: Vec<Term> = items.into_iter().collect();
        let mut acc = items.pop().expect("tuple of zero terms");
        while let Some(t) = items.pop() {
            acc = Term::pair(t, acc);
        }
        acc
    }

    pub fn enc(body: Term, key: Term) -> Term {
        Term::Enc(Arc::new(body), Arc::new(key))
    }

    /// Vernam encryption `v(key, body)`, modelled as symmetric encryption.
    pub fn vernam(key: Term, body: Term) -> Term {
        Term::enc(body, key)
    }

    pub fn hash(t: Term) -> Term {
        Term::Hash(Arc::new(t))
    }

    pub fn pk(t: Term) -> Term {
        Term::Pk(Arc::new(t))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Term::Const(_) | Term::Var(_))
    }

    pub fn is_intruder(&self) -> bool {
        matches!(self, Term::Const(c) if !c.fresh && &*c.name == INTRUDER)
    }

    pub fn is_fresh_constant(&self) -> bool {
        matches!(self, Term::Const(c) if c.fresh)
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Const(_) | Term::Var(_) => vec![],
            Term::Pair(a, b) | Term::Enc(a, b) => vec![a, b],
            Term::Hash(a) | Term::Pk(a) => vec![a],
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            _ => self.children().iter().all(|c| c.is_ground()),
        }
    }

    pub fn occurs(&self, v: &Var) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::Const(_) => false,
            _ => self.children().iter().any(|c| c.occurs(v)),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Const(_) => {}
            _ => self.children().iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// All subterms, including `self`, in pre-order.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            for c in t.children().into_iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Rebuild the term bottom-up, replacing variables through `f`.
    pub fn map_vars(&self, f: &mut impl FnMut(&Var) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Const(_) => self.clone(),
            Term::Pair(a, b) => Term::pair(a.map_vars(f), b.map_vars(f)),
            Term::Enc(a, b) => Term::enc(a.map_vars(f), b.map_vars(f)),
            Term::Hash(a) => Term::hash(a.map_vars(f)),
            Term::Pk(a) => Term::pk(a.map_vars(f)),
        }
    }

    /// Flatten a right-nested pair into its components.
    pub fn tuple_items(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Term::Pair(a, b) = cur {
            out.push(&**a);
            cur = b;
        }
        out.push(cur);
        out
    }
}

/// True iff `small` equals `big` or occurs anywhere inside it, key positions
/// of encryptions included.
pub fn is_subterm(small: &Term, big: &Term) -> bool {
    if small == big {
        return true;
    }
    big.children().iter().any(|c| is_subterm(small, c))
}

/// A finite, idempotent mapping from variables to terms.
///
/// Images are kept fully resolved: no image mentions a variable of the domain.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.map.keys()
    }

    /// Build a substitution from arbitrary bindings, resolving chains.
    /// Returns `None` if the bindings are cyclic.
    pub fn from_bindings(bindings: impl IntoIterator<Item = (Var, Term)>) -> Option<Self> {
        let mut s = Substitution::new();
        for (v, t) in bindings {
            let t = s.apply(&t);
            let cur = s.apply(&Term::Var(v.clone()));
            s = unify(&cur, &t, &s)?;
        }
        Some(s)
    }

    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() {
            return t.clone();
        }
        match t {
            Term::Var(v) => self.map.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::Const(_) => t.clone(),
            Term::Pair(a, b) => Term::pair(self.apply(a), self.apply(b)),
            Term::Enc(a, b) => Term::enc(self.apply(a), self.apply(b)),
            Term::Hash(a) => Term::hash(self.apply(a)),
            Term::Pk(a) => Term::pk(self.apply(a)),
        }
    }

    /// Add `v ↦ t`. The caller guarantees `v` is unbound, `t` is resolved and
    /// `t` does not contain `v`.
    fn bind(&mut self, v: Var, t: Term) {
        let single = Substitution { map: BTreeMap::from([(v.clone(), t.clone())]) };
        for image in self.map.values_mut() {
            if image.occurs(&v) {
                *image = single.apply(image);
            }
        }
        self.map.insert(v, t);
    }

    /// Drop bindings for the given variables.
    pub fn without(&self, vars: &BTreeSet<Var>) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(v, _)| !vars.contains(v))
                .map(|(v, t)| (v.clone(), t.clone()))
                .collect(),
        }
    }

    /// Keep only bindings for the given variables.
    pub fn restrict(&self, vars: &BTreeSet<Var>) -> Substitution {
        Substitution {
            map: self
                .map
                .iter()
                .filter(|(v, _)| vars.contains(v))
                .map(|(v, t)| (v.clone(), t.clone()))
                .collect(),
        }
    }

    /// Occurs-check and idempotence, for tests and debug assertions.
    pub fn is_well_formed(&self) -> bool {
        self.map.iter().all(|(_, t)| self.map.keys().all(|v| !t.occurs(v)))
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v} ↦ {t}")?;
        }
        write!(f, "}}")
    }
}

/// Most general unifier of `t1` and `t2` extending `under`, with occurs-check.
pub fn unify(t1: &Term, t2: &Term, under: &Substitution) -> Option<Substitution> {
    let mut s = under.clone();
    let mut work = vec![(s.apply(t1), s.apply(t2))];
    while let Some((a, b)) = work.pop() {
        let a = s.apply(&a);
        let b = s.apply(&b);
        if a == b {
            continue;
        }
        match (a, b) {
            (Term::Var(v), t) | (t, Term::Var(v)) => {
                if t.occurs(&v) {
                    return None;
                }
                s.bind(v, t);
            }
            (Term::Pair(a1, a2), Term::Pair(b1, b2)) | (Term::Enc(a1, a2), Term::Enc(b1, b2)) => {
                work.push(((*a2).clone(), (*b2).clone()));
                work.push(((*a1).clone(), (*b1).clone()));
            }
            (Term::Hash(a), Term::Hash(b)) | (Term::Pk(a), Term::Pk(b)) => {
                work.push(((*a).clone(), (*b).clone()));
            }
            _ => return None,
        }
    }
    Some(s)
}

/// Hands out intruder-tagged constants `ni1`, `ni2`, ...
#[derive(Clone, Debug)]
pub struct FreshNamer {
    prefix: String,
    next: u32,
}

impl Default for FreshNamer {
    fn default() -> Self {
        FreshNamer::new("ni")
    }
}

impl FreshNamer {
    pub fn new(prefix: &str) -> Self {
        FreshNamer { prefix: prefix.to_string(), next: 1 }
    }

    pub fn next_constant(&mut self) -> Term {
        let t = Term::fresh_constant(&format!("{}{}", self.prefix, self.next));
        self.next += 1;
        t
    }
}

/// Replace every variable by a fresh intruder constant; repeated variables
/// share one image.
pub fn ground(t: &Term, namer: &mut FreshNamer) -> Term {
    let mut seen: BTreeMap<Var, Term> = BTreeMap::new();
    t.map_vars(&mut |v| seen.entry(v.clone()).or_insert_with(|| namer.next_constant()).clone())
}

fn fmt_key(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Pair(..) => write!(f, "({t})"),
        _ => write!(f, "{t}"),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{}", c.name),
            Term::Var(v) => write!(f, "{v}"),
            Term::Pair(a, b) => {
                if matches!(**a, Term::Pair(..)) {
                    write!(f, "({a}),{b}")
                } else {
                    write!(f, "{a},{b}")
                }
            }
            Term::Enc(body, key) => {
                write!(f, "{{{body}}}")?;
                fmt_key(key, f)
            }
            Term::Hash(a) => write!(f, "h({a})"),
            Term::Pk(a) => write!(f, "pk({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(n: &str) -> Term {
        Term::constant(n)
    }
    fn v(n: &str) -> Term {
        Term::var(n, 0)
    }

    #[test]
    fn apply_examples() {
        let s = Substitution::new();
        assert_eq!(s.apply(&Term::pk(c("s"))), Term::pk(c("s")));

        let s = Substitution::from_bindings([(Var::new("Na", 0), c("ni"))]).unwrap();
        assert_eq!(s.apply(&Term::enc(v("Na"), Term::pk(c("s")))), Term::enc(c("ni"), Term::pk(c("s"))));

        let s = Substitution::from_bindings([(Var::new("A", 0), Term::intruder()), (Var::new("Na", 0), c("ni"))])
            .unwrap();
        assert_eq!(s.apply(&v("Na")), c("ni"));
        assert_eq!(s.apply(&v("A")), Term::intruder());
    }

    #[test]
    fn unify_examples() {
        let empty = Substitution::new();
        assert_eq!(unify(&c("a"), &c("a"), &empty), Some(Substitution::new()));
        let s = unify(&v("Na"), &c("ni"), &empty).unwrap();
        assert_eq!(s.get(&Var::new("Na", 0)), Some(&c("ni")));
        assert_eq!(s.len(), 1);
        assert_eq!(unify(&v("X"), &Term::pair(c("a"), v("X")), &empty), None);
        assert_eq!(unify(&c("a"), &c("b"), &empty), None);
        assert_eq!(unify(&Term::hash(c("a")), &Term::pk(c("a")), &empty), None);
    }

    #[test]
    fn unify_respects_prior_bindings() {
        let under = unify(&v("X"), &c("a"), &Substitution::new()).unwrap();
        assert_eq!(unify(&v("X"), &c("b"), &under), None);
        let s = unify(&Term::pair(v("X"), v("Y")), &Term::pair(v("Y"), v("Z")), &under).unwrap();
        assert_eq!(s.apply(&v("Z")), c("a"));
        assert!(s.is_well_formed());
    }

    #[test]
    fn subterm_examples() {
        assert!(is_subterm(&c("x"), &c("x")));
        let msg = Term::enc(Term::pair(c("ta"), c("r1")), Term::pk(c("s")));
        assert!(is_subterm(&c("r1"), &msg));
        assert!(is_subterm(&c("s"), &msg));
        assert!(!is_subterm(&c("r2"), &Term::hash(c("r1"))));
    }

    #[test]
    fn ground_examples() {
        let mut n = FreshNamer::default();
        assert_eq!(ground(&c("a"), &mut n), c("a"));
        let g = ground(&Term::pair(v("X"), v("X")), &mut n);
        match &g {
            Term::Pair(a, b) => {
                assert_eq!(a, b);
                assert!(a.is_fresh_constant());
            }
            _ => panic!("expected pair"),
        }
        let g = ground(&Term::enc(v("X"), Term::pk(c("s"))), &mut n);
        assert!(g.is_ground());
        assert!(matches!(&g, Term::Enc(b, k) if b.is_fresh_constant() && **k == Term::pk(c("s"))));
    }

    #[test]
    fn display_flattens_tuples() {
        let t = Term::tuple([c("a"), c("s"), c("b"), Term::enc(Term::pair(c("ta"), c("r1")), Term::pk(c("s")))]);
        assert_eq!(t.to_string(), "a,s,b,{ta,r1}pk(s)");
        assert_eq!(Term::pair(Term::pair(c("a"), c("b")), c("c")).to_string(), "(a,b),c");
        assert_eq!(Term::vernam(c("r1"), c("r2")).to_string(), "{r2}r1");
    }

    pub(crate) fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::constant),
            prop::sample::select(vec!["X", "Y", "Z"]).prop_map(|n| Term::var(n, 0)),
        ];
        leaf.prop_recursive(3, 16, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::enc(a, b)),
                inner.clone().prop_map(Term::hash),
                inner.prop_map(Term::pk),
            ]
        })
    }

    fn arb_ground_sub() -> impl Strategy<Value = Substitution> {
        let ground_leaf = prop::sample::select(vec!["a", "b", "c"]).prop_map(Term::constant);
        let ground = ground_leaf.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
                inner.prop_map(Term::hash),
            ]
        });
        (ground.clone(), ground.clone(), ground).prop_map(|(x, y, z)| {
            Substitution::from_bindings([(Var::new("X", 0), x), (Var::new("Y", 0), y), (Var::new("Z", 0), z)])
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn unifier_is_sound(a in arb_term(), b in arb_term()) {
            if let Some(s) = unify(&a, &b, &Substitution::new()) {
                prop_assert_eq!(s.apply(&a), s.apply(&b));
                prop_assert!(s.is_well_formed());
                prop_assert_eq!(s.apply(&s.apply(&a)), s.apply(&a));
            }
        }

        #[test]
        fn unifier_is_most_general(t in arb_term(), u in arb_term(), g in arb_ground_sub()) {
            // Both sides become the same ground instance under `g` only when
            // they agree there; the mgu must then exist and factor through g.
            if g.apply(&t) == g.apply(&u) {
                let m = unify(&t, &u, &Substitution::new());
                prop_assert!(m.is_some());
                let m = m.unwrap();
                prop_assert_eq!(g.apply(&m.apply(&t)), g.apply(&t));
            }
        }

        #[test]
        fn instance_unifies_with_pattern(t in arb_term(), g in arb_ground_sub()) {
            let inst = g.apply(&t);
            let m = unify(&t, &inst, &Substitution::new());
            prop_assert!(m.is_some());
            prop_assert_eq!(m.unwrap().apply(&t), inst);
        }

        #[test]
        fn apply_is_homomorphic(a in arb_term(), b in arb_term(), g in arb_ground_sub()) {
            prop_assert_eq!(g.apply(&Term::pair(a.clone(), b.clone())), Term::pair(g.apply(&a), g.apply(&b)));
            prop_assert_eq!(g.apply(&Term::enc(a.clone(), b.clone())), Term::enc(g.apply(&a), g.apply(&b)));
            prop_assert_eq!(g.apply(&Term::hash(a.clone())), Term::hash(g.apply(&a)));
            prop_assert_eq!(g.apply(&Term::pk(b.clone())), Term::pk(g.apply(&b)));
        }

        #[test]
        fn subterm_is_a_partial_order(a in arb_term(), b in arb_term(), c in arb_term()) {
            prop_assert!(is_subterm(&a, &a));
            if is_subterm(&a, &b) && is_subterm(&b, &c) {
                prop_assert!(is_subterm(&a, &c));
            }
            if is_subterm(&a, &b) && is_subterm(&b, &a) {
                prop_assert_eq!(&a, &b);
            }
            for s in c.subterms() {
                prop_assert!(is_subterm(s, &c));
            }
        }
    }
}
