//! Random entry states for differential and property tests.
//!
//! Objects are created in address order and point only backwards, so every
//! reference structure is acyclic. Set-typed fields are closed over the same
//! field of referenced objects and may carry extra junk members.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::interp::with_entry_measure;
use crate::logic::check::method_pre;
use crate::entry::EntryHead;
use crate::name::{reserved, Name};
use crate::state::{Ptr, Region, State, Value};
use crate::syntax::{conjuncts, fv, BinOp, Expr, FieldDecl, MethodDecl, Owner, Program, Ty};
use crate::wd::{eval_a2, eval_b2};

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    /// Upper bound on the number of heap objects.
    pub max_objects: usize,
    /// Chance that an earlier object joins a set field as junk.
    pub junk: f64,
    /// Chance that a reference field points to the previous object.
    pub chain_bias: f64,
    /// Attempts before giving up on a state satisfying the precondition.
    pub attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_objects: 10,
            junk: 0.15,
            chain_bias: 0.8,
            attempts: 64,
        }
    }
}

/// Fields of a class, inherited trait fields first.
pub fn class_fields<'p>(p: &'p Program, class: &str) -> Vec<&'p FieldDecl> {
    let Some(c) = p.class_decl(class) else {
        return Vec::new();
    };
    let inherited = p.trait_decl(&c.extends).map(|t| t.fields.iter());
    inherited
        .into_iter()
        .flatten()
        .chain(c.fields.iter())
        .collect()
}

fn inhabits(p: &Program, ptr: &Ptr, target: &str) -> bool {
    if p.is_trait(target) {
        p.is_t(&ptr.class, target)
    } else {
        ptr.class == *target
    }
}

/// A random acyclic heap of `n` objects whose last object has class `last`.
pub fn random_heap<R: Rng>(p: &Program, rng: &mut R, n: usize, last: &str, cfg: &GenConfig) -> State {
    let classes = p.class_names();
    let mut s = State::new();
    let mut objs: Vec<Ptr> = Vec::new();
    for i in 0..n {
        let class = if i + 1 == n {
            Name::from(last)
        } else {
            classes.choose(rng).cloned().unwrap_or_else(|| Name::from(last))
        };
        let me = Ptr::new(i as u64 + 1, &class);
        s.add_alloc(me.clone());
        let fields = class_fields(p, &class);
        for f in fields.iter().filter(|f| matches!(f.ty, Ty::Ref { .. })) {
            let Ty::Ref { target, nullable } = &f.ty else {
                continue;
            };
            let cands: Vec<&Ptr> = objs.iter().filter(|o| inhabits(p, o, target)).collect();
            let prev = objs.last().filter(|o| inhabits(p, o, target));
            let v = if *nullable && rng.gen_bool(0.1) {
                Ptr::null()
            } else if let (Some(o), true) = (prev, rng.gen_bool(cfg.chain_bias)) {
                o.clone()
            } else {
                cands.choose(rng).map(|o| (*o).clone()).unwrap_or_else(Ptr::null)
            };
            s.heap_update_mut(&me, &f.name, Value::Ptr(v));
        }
        for f in &fields {
            let v = match &f.ty {
                Ty::Ref { .. } => continue,
                Ty::Nat => Value::Nat(rng.gen_range(0..5)),
                Ty::Bool => Value::Bool(rng.gen()),
                Ty::Set(t) => {
                    let mut r = Region::new();
                    if inhabits(p, &me, t) {
                        r.insert(me.clone());
                    }
                    for g in fields.iter().filter(|g| matches!(g.ty, Ty::Ref { .. })) {
                        let o = s.heap_get(&me, g.name.clone()).as_ptr();
                        if !o.is_null() {
                            r.extend(s.heap_get(&o, f.name.clone()).as_region());
                        }
                    }
                    for o in objs.iter().filter(|o| inhabits(p, o, t)) {
                        if rng.gen_bool(cfg.junk) {
                            r.insert(o.clone());
                        }
                    }
                    Value::Region(r)
                }
            };
            s.heap_update_mut(&me, &f.name, v);
        }
        objs.push(me);
    }
    s
}

fn random_value<R: Rng>(p: &Program, rng: &mut R, ty: &Ty, s: &State) -> Value {
    match ty {
        Ty::Nat => Value::Nat(rng.gen_range(0..5)),
        Ty::Bool => Value::Bool(rng.gen()),
        Ty::Ref { target, .. } => {
            let cands: Vec<&Ptr> = s.alloc().iter().filter(|o| inhabits(p, o, target)).collect();
            match cands.choose(rng) {
                Some(o) if rng.gen_bool(0.9) => Value::Ptr((*o).clone()),
                _ => Value::null(),
            }
        }
        Ty::Set(t) => Value::Region(
            s.alloc()
                .iter()
                .filter(|o| inhabits(p, o, t) && rng.gen_bool(0.5))
                .cloned()
                .collect(),
        ),
    }
}

/// Binds each parameter, preferring a defining conjunct `a == e` of the
/// precondition over a random value.
fn bind_params<R: Rng>(p: &Program, rng: &mut R, m: &MethodDecl, mut s: State) -> State {
    let mut bound: Vec<Name> = vec![Name::from(reserved::THIS)];
    for (a, ty) in &m.params {
        let def = conjuncts(&m.requires).into_iter().find_map(|c| match c {
            Expr::Binary(BinOp::Eq, l, r) if matches!(&**l, Expr::Var(x) if x == a) => {
                fv(r).iter().all(|x| bound.contains(x)).then_some(&**r)
            }
            _ => None,
        });
        let v = def
            .and_then(|e| eval_a2(p, e, &s).ok())
            .unwrap_or_else(|| random_value(p, rng, ty, &s));
        s.update_mut(a, v);
        bound.push(a.clone());
    }
    s
}

/// A random state satisfying the precondition of `class.method`, with `mse`
/// bound when `total`.
pub fn entry_state<R: Rng>(
    p: &Program,
    rng: &mut R,
    class: &str,
    method: &str,
    total: bool,
    cfg: &GenConfig,
) -> Option<State> {
    let owner = Owner::Class(Name::from(class));
    let m = p.method(&owner, method)?;
    let pre = method_pre(&Name::from(class), m, total);
    for _ in 0..cfg.attempts {
        let n = rng.gen_range(1..=cfg.max_objects.max(1));
        let heap = random_heap(p, rng, n, class, cfg);
        let this = Ptr::new(n as u64, class);
        let s = bind_params(p, rng, m, heap.update(reserved::THIS, Value::Ptr(this)));
        let s = if total {
            with_entry_measure(p, &EntryHead::new(owner.clone(), method), s)
        } else {
            s
        };
        if eval_b2(p, &pre, &s) {
            return Some(s);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_states_satisfy_preconditions() {
        let p = parse_program(include_str!("../../corpus/pizza.xrl")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for class in ["Crust", "Anchovy", "Cheese"] {
            let mut hits = 0;
            for _ in 0..20 {
                if entry_state(&p, &mut rng, class, "remA", true, &GenConfig::default()).is_some() {
                    hits += 1;
                }
            }
            assert!(hits >= 15, "{class}: only {hits} of 20");
        }
    }
}
