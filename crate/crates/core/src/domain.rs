//! Bounded state domains and lazy exhaustive enumeration.
//!
//! States are built on demand: evaluation runs against a partial state with a
//! probe attached, and the first undecided read (a variable, a heap location
//! or the allocation set) becomes the next branching point. Objects are
//! created only when a reference or region choice asks for a fresh one, so
//! addresses follow creation order and no two branches differ by a renaming.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entry::ReducedEntry;
use crate::name::{reserved, Name};
use crate::state::{Miss, Probe, Ptr, State, Value, DEFAULT, LAZY};
use crate::syntax::{types::TypeEnv, BinOp, Expr, Program, Ty};
use crate::wd::{Layer, Wd};

pub const DEFAULT_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    /// Maximum number of objects in a state.
    pub max_addr: u64,
    pub nat_max: u64,
    pub max_region: usize,
    /// Leaf budget for exhaustive enumeration before falling back to sampling.
    pub cap: u64,
    /// Random walks performed when sampling.
    pub samples: u64,
    pub seed: u64,
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            max_addr: 4,
            nat_max: 4,
            max_region: 4,
            cap: DEFAULT_CAP,
            samples: 20_000,
            seed: 7,
        }
    }
}

impl Domain {
    /// Default domain with the cap taken from `XRL_DOMAIN_CAP` when set.
    pub fn from_env() -> Self {
        let mut d = Domain::default();
        if let Some(cap) = std::env::var("XRL_DOMAIN_CAP")
            .ok()
            .and_then(|v| v.parse().ok())
        {
            d.cap = cap;
        }
        d
    }
}

/// `∀ s. (∧ antecedent) s ⇒ consequent s` over the bounded domain.
pub struct Query<'a> {
    pub p: &'a Program,
    pub env: &'a TypeEnv,
    /// Conjuncts read with `⟦_⟧𝐁`.
    pub antecedent: Vec<Expr>,
    pub consequent: Box<dyn Fn(&State) -> bool + Sync + 'a>,
}

#[derive(Clone, Debug)]
pub enum Outcome {
    /// Every leaf satisfied the implication.
    Proved {
        leaves: u64,
    },
    Refuted {
        witness: State,
        leaves: u64,
    },
    /// The cap was hit; random walks found no counterexample.
    Sampled {
        walks: u64,
    },
}

enum Probed<T> {
    Done(T),
    Miss(Miss),
}

fn probe<T>(s: &State, f: impl FnOnce(&State) -> T) -> Probed<T> {
    let mut t = s.clone();
    let pr = Probe::new();
    t.attach_probe(pr.clone(), s.alloc_frozen());
    let r = f(&t);
    match pr.miss() {
        Some(m) => Probed::Miss(m.clone()),
        None => Probed::Done(r),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gen<'t> {
    Nat,
    Bool,
    Ref(&'t str),
    Set(&'t str),
    Any,
}

const ANY_CLASS: &str = "*";

fn gen_of(t: Option<&Ty>) -> Gen<'_> {
    match t {
        Some(Ty::Nat) => Gen::Nat,
        Some(Ty::Bool) => Gen::Bool,
        Some(Ty::Ref { target, .. }) => Gen::Ref(target),
        Some(Ty::Set(t)) => Gen::Set(t),
        None => Gen::Any,
    }
}

/// A node's children: refined states, each possibly settling a defining conjunct.
type Children = Vec<(State, Option<usize>)>;

struct Search<'q, 'a> {
    q: &'q Query<'a>,
    dom: Domain,
    /// Antecedent conjuncts, call-free ones first.
    ante: Vec<&'q Expr>,
    /// Variable → index of its defining conjunct `v == e`.
    defs: BTreeMap<Name, usize>,
    fvs: Vec<BTreeSet<Name>>,
    wd: Wd<'a>,
    leaves: u64,
    over_cap: bool,
    rng: Option<ChaCha8Rng>,
}

impl<'q, 'a> Search<'q, 'a> {
    fn new(q: &'q Query<'a>, dom: Domain) -> Self {
        let mut ante: Vec<&Expr> = q
            .antecedent
            .iter()
            .filter(|e| crate::syntax::call_free(e))
            .collect();
        ante.extend(q.antecedent.iter().filter(|e| !crate::syntax::call_free(e)));
        let mut defs = BTreeMap::new();
        for (i, c) in ante.iter().enumerate() {
            if let Some((v, _)) = defining(c) {
                defs.entry(v.clone()).or_insert(i);
            }
        }
        let fvs = ante.iter().map(|c| crate::syntax::fv(c)).collect();
        Search {
            q,
            dom,
            ante,
            defs,
            fvs,
            wd: Wd::new(q.p),
            leaves: 0,
            over_cap: false,
            rng: None,
        }
    }

    fn unbound(&self, i: usize, s: &State) -> usize {
        self.fvs[i].iter().filter(|v| !s.is_bound(v)).count()
    }

    fn wd(&self) -> &Wd<'a> {
        &self.wd
    }

    fn holds(&self, e: &Expr, s: &State) -> bool {
        self.wd()
            .holds(Layer::Two, &ReducedEntry::top(), e, s)
            .unwrap_or(false)
    }

    fn leaf(&mut self) {
        self.leaves += 1;
        if self.rng.is_none() && self.leaves > self.dom.cap {
            self.over_cap = true;
        }
    }

    /// Explores `s`; returns a counterexample if one is found. Every open
    /// conjunct is evaluated so any false one prunes, then the search branches
    /// on the pending read with the fewest children.
    fn node(&mut self, mut s: State, mut sat: Vec<bool>) -> Option<State> {
        if self.over_cap {
            return None;
        }
        if let Probed::Done(true) = probe(&s, |t| (self.q.consequent)(t)) {
            self.leaf();
            return None;
        }
        // Pending reads, each with the number of unbound variables of its conjunct.
        let mut misses: Vec<(usize, Miss)> = Vec::new();
        let mut rescan = true;
        while rescan {
            rescan = false;
            misses.clear();
            for i in 0..self.ante.len() {
                if sat[i] {
                    continue;
                }
                let c = self.ante[i];
                if let Some((v, rhs)) = defining(c) {
                    if self.defs.get(v) == Some(&i) && !s.is_bound(v) {
                        match probe(&s, |t| self.wd().value(Layer::Two, rhs, t)) {
                            Probed::Miss(m) => {
                                note(&mut misses, self.unbound(i, &s), m);
                                continue;
                            }
                            Probed::Done(Ok(val)) => {
                                s.update_mut(v, val);
                                sat[i] = true;
                                rescan = true;
                                continue;
                            }
                            Probed::Done(Err(_)) => {
                                self.leaf();
                                return None;
                            }
                        }
                    }
                }
                match probe(&s, |t| self.holds(c, t)) {
                    Probed::Miss(m) => note(&mut misses, self.unbound(i, &s), m),
                    Probed::Done(true) => sat[i] = true,
                    Probed::Done(false) => {
                        self.leaf();
                        return None;
                    }
                }
            }
        }
        if let Some(least) = misses.iter().map(|(k, _)| *k).min() {
            let mut best: Option<Children> = None;
            for (_, m) in misses.into_iter().filter(|(k, _)| *k == least) {
                let ch = self.prune(self.expand(&s, m, &sat, &mut Vec::new()), &sat);
                if best.as_ref().is_none_or(|b| ch.len() < b.len()) {
                    let done = ch.len() <= 1;
                    best = Some(ch);
                    if done {
                        break;
                    }
                }
            }
            return self.descend(sat, best.unwrap_or_default());
        }
        match probe(&s, |t| (self.q.consequent)(t)) {
            Probed::Done(true) => {
                self.leaf();
                None
            }
            Probed::Done(false) => Some(s),
            Probed::Miss(m) => self.branch(s, sat, m),
        }
    }

    fn branch(&mut self, s: State, sat: Vec<bool>, m: Miss) -> Option<State> {
        let children = self.expand(&s, m, &sat, &mut Vec::new());
        self.descend(sat, children)
    }

    /// Drops children that already falsify an open call-free conjunct.
    fn prune(&self, children: Children, sat: &[bool]) -> Children {
        if children.len() <= 1 {
            return children;
        }
        children
            .into_iter()
            .filter(|(t, d)| {
                (0..self.ante.len()).all(|i| {
                    sat[i]
                        || Some(i) == *d
                        || !crate::syntax::call_free(self.ante[i])
                        || !matches!(probe(t, |u| self.holds(self.ante[i], u)), Probed::Done(false))
                })
            })
            .collect()
    }

    fn descend(&mut self, sat: Vec<bool>, children: Children) -> Option<State> {
        if children.is_empty() {
            self.leaf();
            return None;
        }
        if let Some(rng) = self.rng.as_mut() {
            let i = rng.gen_range(0..children.len());
            let (c, d) = children.into_iter().nth(i).unwrap();
            let mut sat = sat;
            if let Some(j) = d {
                sat[j] = true;
            }
            return self.node(c, sat);
        }
        for (c, d) in children {
            let mut sat2 = sat.clone();
            if let Some(j) = d {
                sat2[j] = true;
            }
            if let Some(w) = self.node(c, sat2) {
                return Some(w);
            }
            if self.over_cap {
                return None;
            }
        }
        None
    }

    /// Children of `s` deciding the missed item. A variable with an unsettled
    /// defining conjunct is solved from it instead of enumerated.
    fn expand(&self, s: &State, m: Miss, sat: &[bool], seen: &mut Vec<Name>) -> Children {
        match m {
            Miss::Var(v) => {
                if let Some(&j) = self.defs.get(&v) {
                    if !sat[j] && !seen.contains(&v) {
                        seen.push(v.clone());
                        let (_, rhs) = defining(self.ante[j]).unwrap();
                        return match probe(s, |t| self.wd().value(Layer::Two, rhs, t)) {
                            Probed::Done(Ok(val)) => vec![(s.update(&v, val), Some(j))],
                            Probed::Done(Err(_)) => Vec::new(),
                            Probed::Miss(m2) => self.expand(s, m2, sat, seen),
                        };
                    }
                }
                self.values(s, gen_of(self.q.env.get(&v)))
                    .into_iter()
                    .map(|(val, t)| (t.update(&v, val), None))
                    .collect()
            }
            Miss::Class(ptr) => self.resolve(s, &ptr),
            Miss::Loc((ptr, f)) => {
                if ptr.is_lazy() {
                    return self.resolve(s, &ptr);
                }
                if !class_has_field(self.q.p, &ptr.class, &f) {
                    return vec![(s.heap_update(&ptr, &f, DEFAULT), None)];
                }
                self.values(s, gen_of(self.q.p.field_ty(&f)))
                    .into_iter()
                    .map(|(val, t)| (t.heap_update(&ptr, &f, val), None))
                    .collect()
            }
            Miss::Alloc => {
                let classes = self.q.p.class_names();
                (0..=self.room(s))
                    .map(|j| {
                        let mut t = s.clone();
                        for _ in 0..j {
                            fresh(&mut t, &classes);
                        }
                        t.set_alloc_frozen(true);
                        (t, None)
                    })
                    .collect()
            }
        }
    }

    /// One child per class the open object may take.
    fn resolve(&self, s: &State, ptr: &Ptr) -> Children {
        open_classes(ptr)
            .iter()
            .map(|c| (s.rename_ptr(ptr, &Ptr::new(ptr.addr, c)), None))
            .collect()
    }

    /// `ptr` restricted to `classes`, if any of its possible classes remain.
    fn admit(&self, ptr: &Ptr, classes: &[Name]) -> Option<Ptr> {
        if !ptr.is_lazy() {
            return classes.contains(&ptr.class).then(|| ptr.clone());
        }
        let open = open_classes(ptr);
        let keep: Vec<Name> = open.iter().filter(|c| classes.contains(c)).cloned().collect();
        if keep.is_empty() {
            None
        } else if keep.len() == open.len() {
            Some(ptr.clone())
        } else {
            Some(with_classes(ptr.addr, &keep))
        }
    }

    fn room(&self, s: &State) -> u64 {
        if s.alloc_frozen() {
            0
        } else {
            self.dom.max_addr.saturating_sub(s.alloc().len() as u64)
        }
    }

    /// Classes whose instances inhabit `target`.
    fn classes_for(&self, target: &str) -> Vec<Name> {
        let p = self.q.p;
        p.class_names()
            .into_iter()
            .filter(|c| target == ANY_CLASS || *c == *target || p.is_t(c, target))
            .collect()
    }

    /// Candidate values with the states that hold any fresh objects they use.
    fn values(&self, s: &State, g: Gen<'_>) -> Vec<(Value, State)> {
        let d = self.dom;
        match g {
            Gen::Nat => (0..=d.nat_max)
                .map(|n| (Value::Nat(n), s.clone()))
                .collect(),
            Gen::Bool => vec![
                (Value::Bool(false), s.clone()),
                (Value::Bool(true), s.clone()),
            ],
            Gen::Ref(target) => {
                let classes = self.classes_for(target);
                let mut out = vec![(Value::null(), s.clone())];
                for p in s.alloc().iter() {
                    if let Some(q) = self.admit(p, &classes) {
                        out.push((Value::Ptr(q.clone()), s.rename_ptr(p, &q)));
                    }
                }
                if self.room(s) > 0 && !classes.is_empty() {
                    let mut t = s.clone();
                    let p = fresh(&mut t, &classes);
                    out.push((Value::Ptr(p), t));
                }
                out
            }
            Gen::Set(target) => {
                let classes = self.classes_for(target);
                let existing: Vec<(Ptr, Ptr)> = s
                    .alloc()
                    .iter()
                    .filter_map(|p| self.admit(p, &classes).map(|q| (p.clone(), q)))
                    .collect();
                let mut out = Vec::new();
                for mask in 0u64..(1 << existing.len()) {
                    let base: Vec<&(Ptr, Ptr)> = existing
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, p)| p)
                        .collect();
                    if base.len() > d.max_region {
                        continue;
                    }
                    let mut t0 = s.clone();
                    for (p, q) in &base {
                        if p != q {
                            t0 = t0.rename_ptr(p, q);
                        }
                    }
                    let extra = if classes.is_empty() {
                        0
                    } else {
                        (self.room(s) as usize).min(d.max_region - base.len())
                    };
                    for j in 0..=extra {
                        let mut t = t0.clone();
                        let mut r: crate::state::Region = base.iter().map(|(_, q)| q.clone()).collect();
                        for _ in 0..j {
                            r.insert(fresh(&mut t, &classes));
                        }
                        out.push((Value::Region(r), t));
                    }
                }
                out
            }
            Gen::Any => {
                let mut out = self.values(s, Gen::Nat);
                out.extend(self.values(s, Gen::Bool));
                out.extend(self.values(s, Gen::Ref(ANY_CLASS)));
                out.extend(self.values(s, Gen::Set(ANY_CLASS)));
                out
            }
        }
    }
}

fn note(misses: &mut Vec<(usize, Miss)>, k: usize, m: Miss) {
    match misses.iter_mut().find(|(_, n)| *n == m) {
        Some(e) => e.0 = e.0.min(k),
        None => misses.push((k, m)),
    }
}

/// `v == e` with `v` a stack variable not free in `e`.
fn defining(c: &Expr) -> Option<(&Name, &Expr)> {
    let Expr::Binary(BinOp::Eq, a, b) = c else {
        return None;
    };
    let ok =
        |v: &Name, rhs: &Expr| v.as_str() != reserved::ALLOC && !crate::syntax::fv(rhs).contains(v);
    match (&**a, &**b) {
        (Expr::Var(v), rhs) if ok(v, rhs) => Some((v, rhs)),
        (lhs, Expr::Var(v)) if ok(v, lhs) => Some((v, lhs)),
        _ => None,
    }
}

fn class_has_field(p: &Program, class: &str, f: &str) -> bool {
    let Some(c) = p.class_decl(class) else {
        return false;
    };
    c.fields.iter().any(|d| d.name == *f)
        || p.trait_decl(&c.extends)
            .is_some_and(|t| t.fields.iter().any(|d| d.name == *f))
}

/// A new object whose class is one of `classes`, left open when there is a choice.
fn fresh(s: &mut State, classes: &[Name]) -> Ptr {
    let p = with_classes(s.next_addr(), classes);
    s.add_alloc(p.clone());
    p
}

fn with_classes(addr: u64, classes: &[Name]) -> Ptr {
    if let [c] = classes {
        return Ptr::new(addr, c);
    }
    let names: Vec<&str> = classes.iter().map(|c| c.as_str()).collect();
    Ptr::new(addr, &format!("{LAZY}{}", names.join(",")))
}

fn open_classes(p: &Ptr) -> Vec<Name> {
    p.class[1..].split(',').map(Name::from).collect()
}

/// Fixes every open class to its first candidate. Sound for a finished
/// witness, since nothing observed those classes.
fn settle(s: &State) -> State {
    let mut t = s.clone();
    for p in s.alloc().iter().filter(|p| p.is_lazy()) {
        t = t.rename_ptr(p, &Ptr::new(p.addr, &open_classes(p)[0]));
    }
    t
}

/// Decides a query exhaustively, or by seeded random walks past the cap.
pub fn decide(q: &Query<'_>, dom: Domain) -> Outcome {
    let mut search = Search::new(q, dom);
    let n = search.ante.len();
    let root = State::new();
    if let Some(w) = search.node(root.clone(), vec![false; n]) {
        return Outcome::Refuted {
            witness: settle(&w),
            leaves: search.leaves,
        };
    }
    if !search.over_cap {
        return Outcome::Proved {
            leaves: search.leaves,
        };
    }
    search.over_cap = false;
    search.rng = Some(ChaCha8Rng::seed_from_u64(dom.seed));
    for _ in 0..dom.samples {
        if let Some(w) = search.node(root.clone(), vec![false; n]) {
            return Outcome::Refuted {
                witness: settle(&w),
                leaves: search.leaves,
            };
        }
    }
    Outcome::Sampled { walks: dom.samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;
    use crate::syntax::parser::{parse_expr_with, ParseCtx};
    use crate::wd::eval_b2;

    fn pizza() -> Program {
        parse_program(include_str!("../corpus/pizza.xrl")).unwrap()
    }

    fn run(p: &Program, env: &[(&str, Ty)], ante: &[&str], cons: &str) -> Outcome {
        let ctx = ParseCtx::of_program(p);
        let env: TypeEnv = env
            .iter()
            .map(|(n, t)| (Name::from(*n), t.clone()))
            .collect();
        let cons = parse_expr_with(cons, &ctx).unwrap();
        let q = Query {
            p,
            env: &env,
            antecedent: ante
                .iter()
                .map(|a| parse_expr_with(a, &ctx).unwrap())
                .collect(),
            consequent: Box::new(move |s| eval_b2(p, &cons, s)),
        };
        decide(&q, Domain::default())
    }

    fn pz() -> Ty {
        Ty::Ref {
            target: Name::from("Pizza"),
            nullable: true,
        }
    }

    #[test]
    fn valid_implies_member_of_footprint() {
        let p = pizza();
        let o = run(
            &p,
            &[("this", pz())],
            &["this.valid@Pizza()"],
            "this in this.fp",
        );
        assert!(matches!(o, Outcome::Proved { .. }), "{o:?}");
    }

    #[test]
    fn refutes_false_claim_with_witness() {
        let p = pizza();
        let o = run(
            &p,
            &[("this", pz())],
            &["this.valid@Pizza()"],
            "this is Crust",
        );
        let Outcome::Refuted { witness, .. } = o else {
            panic!("expected refutation, got {o:?}");
        };
        assert!(eval_b2(
            &p,
            &parse_expr_with("this.valid@Pizza()", &ParseCtx::of_program(&p)).unwrap(),
            &witness
        ));
    }

    #[test]
    fn price_is_positive_and_nested_footprint_shrinks() {
        let p = pizza();
        let o = run(
            &p,
            &[("this", pz())],
            &["this.valid@Pizza()"],
            "1 <= this.price@Pizza()",
        );
        assert!(matches!(o, Outcome::Proved { .. }), "{o:?}");
        let o = run(
            &p,
            &[("this", pz())],
            &["this.valid@Pizza()", "!(this is Crust)"],
            "this.nt.fp < this.fp && this.nt.price@Pizza() + 1 == this.price@Pizza()",
        );
        assert!(matches!(o, Outcome::Proved { .. }), "{o:?}");
    }

    #[test]
    fn defining_equalities_are_solved() {
        let p = pizza();
        let o = run(
            &p,
            &[("this", pz())],
            &[
                "this.valid@Pizza()",
                "f == this.fp",
                "k == this.price@Pizza()",
            ],
            "this in f && 1 <= k",
        );
        match o {
            Outcome::Proved { leaves } => assert!(leaves > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cap_falls_back_to_sampling() {
        let p = pizza();
        let ctx = ParseCtx::of_program(&p);
        let env: TypeEnv = [(Name::from("this"), pz())].into_iter().collect();
        let cons = parse_expr_with("this in this.fp", &ctx).unwrap();
        let q = Query {
            p: &p,
            env: &env,
            antecedent: vec![parse_expr_with("this.valid@Pizza()", &ctx).unwrap()],
            consequent: Box::new(|s| eval_b2(&p, &cons, s)),
        };
        let dom = Domain {
            cap: 5,
            samples: 50,
            ..Domain::default()
        };
        assert!(matches!(decide(&q, dom), Outcome::Sampled { walks: 50 }));
    }

    #[test]
    fn open_classes_resolve_on_observation() {
        let items: Vec<Name> = ["A", "B"].iter().map(|s| Name::from(*s)).collect();
        let p = with_classes(3, &items);
        assert!(p.is_lazy());
        assert_eq!(open_classes(&p), items);
        assert!(!with_classes(3, &items[..1]).is_lazy());
        let p = pizza();
        let o = run(
            &p,
            &[("this", pz())],
            &[],
            "this == null || this is Crust || this is Anchovy || this is Cheese",
        );
        let Outcome::Proved { leaves } = o else {
            panic!("{o:?}");
        };
        assert_eq!(leaves, 4);
    }
}
