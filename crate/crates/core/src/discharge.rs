//! Discharges obligations: syntactic shortcuts, bounded enumeration, or
//! deferral to runtime monitors.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;

use crate::callfree::{eval_alpha, holds_alpha};
use crate::domain::{decide, Domain, Outcome, Query};
use crate::effects::{locs, reff, region_to_effects};
use crate::entry::{
    bounded_reduced_entries, check_wellfoundedness, measure_of, measured_heads, order_for,
    order_holds, reduce, EntryHead, MemberKind, ReducedEntry,
};
use crate::name::{reserved, Name};
use crate::obligation::{Mode, ObKind, Obligation, Status, Verdict};
use crate::state::{State, Value};
use crate::syntax::{conjuncts, print_program, types::TypeEnv, Expr, FuncDecl, Owner, Program};
use crate::wd::{eval_b, eval_b2, Layer, Wd};

#[derive(Clone, Debug, Default)]
pub struct Policy {
    pub domain: Domain,
    /// Obligation ids accepted without checking.
    pub trust: BTreeSet<String>,
}

impl Policy {
    pub fn from_env() -> Self {
        Policy {
            domain: Domain::from_env(),
            trust: BTreeSet::new(),
        }
    }
}

/// Discharges every obligation in parallel; verdicts come back sorted by id.
pub fn discharge_all(p: &Program, obs: &[Obligation], policy: &Policy) -> Vec<Verdict> {
    let mut out: Vec<Verdict> = obs.par_iter().map(|o| discharge(p, o, policy)).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

pub fn discharge(p: &Program, ob: &Obligation, policy: &Policy) -> Verdict {
    let mut v = Verdict {
        id: ob.id.clone(),
        kind: ob.kind.name(),
        mode: ob.mode,
        status: Status::Pass,
        origin: ob.origin.clone(),
        statement: ob.kind.statement(),
        explored: 0,
        witness: None,
        detail: None,
    };
    if policy.trust.contains(&ob.id) {
        v.mode = Mode::Trusted;
        v.status = Status::Trusted;
        return v;
    }
    match ob.mode {
        Mode::Runtime => {
            v.status = Status::Trusted;
            v.detail = Some("checked by interpreter monitors".into());
            return v;
        }
        Mode::Trusted => {
            v.status = Status::Trusted;
            return v;
        }
        Mode::Syntactic => {
            if let Some(b) = syntactic_verdict(p, &ob.kind) {
                v.status = if b { Status::Pass } else { Status::Fail };
                return v;
            }
        }
        Mode::Bounded => {}
    }
    if let Some(b) = syntactic_verdict(p, &ob.kind) {
        v.mode = Mode::Syntactic;
        v.status = if b { Status::Pass } else { Status::Fail };
        return v;
    }
    if let ObKind::WellFounded { kind } = &ob.kind {
        let heads: Vec<EntryHead> = measured_heads(p, *kind).into_values().collect();
        let d = policy.domain;
        let class = p
            .class_names()
            .first()
            .map(|c| c.to_string())
            .unwrap_or_default();
        let entries = bounded_reduced_entries(&heads, d.nat_max, d.max_addr, &class);
        let spec = order_for(p, *kind);
        let r = check_wellfoundedness(&entries, |a, b| order_holds(&spec, a, b));
        v.mode = Mode::Bounded;
        v.explored = entries.len() as u64;
        if !r.pass() {
            v.status = Status::Fail;
            v.detail = r.describe_failure();
        }
        return v;
    }
    let Some(q) = query(p, &ob.kind, &ob.env) else {
        v.status = Status::Fail;
        v.detail = Some("obligation refers to an undeclared member".into());
        return v;
    };
    v.mode = Mode::Bounded;
    let key = cache_key(p, ob, policy);
    let cached = outcomes().lock().unwrap().get(&key).cloned();
    let outcome = cached.unwrap_or_else(|| {
        let o = decide(&q, policy.domain);
        outcomes().lock().unwrap().insert(key, o.clone());
        o
    });
    match outcome {
        Outcome::Proved { leaves } => v.explored = leaves,
        Outcome::Refuted { witness, leaves } => {
            v.status = Status::Fail;
            v.explored = leaves;
            v.witness = Some(witness.to_json());
        }
        Outcome::Sampled { walks } => {
            v.status = Status::Sampled;
            v.explored = walks;
            v.detail = Some(format!(
                "state space exceeds the cap of {}; {walks} random walks found no counterexample",
                policy.domain.cap
            ));
        }
    }
    v
}

/// Bounded outcomes already computed in this process. Certificate variants
/// share most obligations, so checking many of them reuses the work.
fn outcomes() -> &'static Mutex<HashMap<u64, Outcome>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Outcome>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cache_key(p: &Program, ob: &Obligation, policy: &Policy) -> u64 {
    let mut h = DefaultHasher::new();
    print_program(p).hash(&mut h);
    format!("{:?}|{:?}|{:?}", ob.kind, ob.env, policy.domain).hash(&mut h);
    h.finish()
}

fn syntactic_verdict(p: &Program, k: &ObKind) -> Option<bool> {
    match k {
        ObKind::TotalAbstraction { class, tr, method } => Some(
            !p.total(&Owner::Trait(tr.clone()), method)
                || p.total(&Owner::Class(class.clone()), method),
        ),
        ObKind::VirtualEntrySound {
            kind,
            class,
            tr,
            member,
        } => {
            let t = measure_of(p, *kind, &EntryHead::new(Owner::Trait(tr.clone()), member)).ok()?;
            let c = measure_of(
                p,
                *kind,
                &EntryHead::new(Owner::Class(class.clone()), member),
            )
            .ok()?;
            (t == c).then_some(true)
        }
        _ => k.syntactic(),
    }
}

fn this_is(class: &Name) -> Expr {
    Expr::IsClass(Box::new(Expr::var(reserved::THIS)), class.clone())
}

fn owned(e: &Expr) -> Vec<Expr> {
    conjuncts(e).into_iter().cloned().collect()
}

fn class_func<'p>(p: &'p Program, class: &Name, func: &Name) -> Option<&'p FuncDecl> {
    p.func(&Owner::Class(class.clone()), func)
}

fn query<'a>(p: &'a Program, k: &'a ObKind, env: &'a TypeEnv) -> Option<Query<'a>> {
    let q = |antecedent: Vec<Expr>, consequent: Box<dyn Fn(&State) -> bool + Sync + 'a>| Query {
        p,
        env,
        antecedent,
        consequent,
    };
    Some(match k {
        ObKind::Implies { pre, post } => q(owned(pre), Box::new(move |s| eval_b2(p, post, s))),
        ObKind::DfHolds { pre, e } => q(owned(pre), Box::new(move |s| crate::wd::df2(p, e, s))),
        ObKind::Subeffect { pre, sub, sup } => q(
            owned(pre),
            Box::new(move |s| locs(p, sub, s).is_subset(&locs(p, sup, s))),
        ),
        ObKind::Immune { pre, eps2, eps1 } => q(
            owned(pre),
            Box::new(move |s| {
                let l1 = locs(p, eps1, s);
                eps2.iter().all(|e| match reff(&e.region) {
                    Ok(r) => locs(p, &r, s).is_disjoint(&l1),
                    Err(_) => false,
                })
            }),
        ),
        ObKind::Disjoint { pre, eps, region } => q(
            owned(pre),
            Box::new(move |s| {
                let other = eval_alpha(p, region, s)
                    .map(|v| v.as_region())
                    .unwrap_or_default();
                eps.iter().all(|e| {
                    eval_alpha(p, &e.region, s)
                        .map(|v| v.as_region().is_disjoint(&other))
                        .unwrap_or(false)
                })
            }),
        ),
        ObKind::Separates { pre, eps, eta } => q(
            owned(pre),
            Box::new(move |s| locs(p, eps, s).is_disjoint(&locs(p, eta, s))),
        ),
        ObKind::MeasureDecrease {
            pre,
            callee,
            bindings,
            caller,
        } => q(
            owned(pre),
            Box::new(move |s| measure_decreases(p, callee, bindings, caller, s)),
        ),
        ObKind::VirtualEntrySound {
            kind,
            class,
            tr,
            member,
        } => {
            let th = EntryHead::new(Owner::Trait(tr.clone()), member);
            let ch = EntryHead::new(Owner::Class(class.clone()), member);
            let heads: Vec<EntryHead> = measured_heads(p, *kind).into_values().collect();
            let kind = *kind;
            q(
                vec![this_is(class)],
                Box::new(move |s| {
                    let (Ok(a), Ok(b)) = (reduce(p, kind, &th, s), reduce(p, kind, &ch, s)) else {
                        return false;
                    };
                    let spec = order_for(p, kind);
                    heads.iter().all(|h| {
                        let e = ReducedEntry {
                            head: h.clone(),
                            value: s.lookup(reserved::MSE),
                        };
                        !order_holds(&spec, &a, &e) || order_holds(&spec, &b, &e)
                    })
                }),
            )
        }
        ObKind::DfcRefine {
            layer,
            tr,
            class,
            func,
        } => {
            let t = p.func(&Owner::Trait(tr.clone()), func)?;
            let c = class_func(p, class, func)?;
            let mut ante = owned(&t.requires);
            ante.push(this_is(class));
            let layer = *layer;
            q(
                ante,
                Box::new(move |s| match layer {
                    Layer::One => holds_alpha(p, &c.requires, s),
                    Layer::Two => eval_b(p, &c.requires, s),
                }),
            )
        }
        ObKind::Fdf { layer, class, func } => {
            let c = class_func(p, class, func)?;
            let body = c.body.as_ref()?;
            let head = EntryHead::new(Owner::Class(class.clone()), func);
            let mut ante = owned(&c.requires);
            ante.push(this_is(class));
            let layer = *layer;
            q(
                ante,
                Box::new(move |s| {
                    let Ok(cur) = reduce(p, MemberKind::Function, &head, s) else {
                        return false;
                    };
                    Wd::new(p).df(layer, &cur, body, s).unwrap_or(false)
                }),
            )
        }
        ObKind::ReadsSound {
            reads_of,
            class,
            func,
        } => {
            let c = class_func(p, class, func)?;
            let body = c.body.as_ref()?;
            let reads = region_to_effects(p, &p.func(&reads_of.owner, &reads_of.member)?.reads);
            let head = EntryHead::new(Owner::Class(class.clone()), func);
            let layer = match c.kind {
                crate::syntax::FuncKind::One => Layer::One,
                crate::syntax::FuncKind::Two => Layer::Two,
            };
            let mut ante = owned(&c.requires);
            ante.push(this_is(class));
            q(
                ante,
                Box::new(move |s| {
                    let Ok(cur) = reduce(p, MemberKind::Function, &head, s) else {
                        return false;
                    };
                    let wd = Wd::new(p);
                    match wd.df(layer, &cur, body, s) {
                        Ok(true) => {}
                        Ok(false) => return true,
                        Err(_) => return false,
                    }
                    let mut fp = BTreeSet::new();
                    if wd.eval(layer, &cur, body, s, &mut Some(&mut fp)).is_err() {
                        return false;
                    }
                    fp.is_subset(&locs(p, &reads, s))
                }),
            )
        }
        ObKind::TotalAbstraction { .. } | ObKind::WellFounded { .. } | ObKind::CallPost { .. } => {
            return None
        }
    })
}

/// `M_v (T,m, ⟦Mse T m⟧α s[!ȳ/ā!]) (D,n, s[mse])`
pub fn measure_decreases(
    p: &Program,
    callee: &EntryHead,
    bindings: &[(Name, Expr)],
    caller: &EntryHead,
    s: &State,
) -> bool {
    let mut binds: Vec<(Name, Value)> = Vec::new();
    for (x, e) in bindings {
        match eval_alpha(p, e, s) {
            Ok(v) => binds.push((x.clone(), v)),
            Err(_) => return false,
        }
    }
    let Ok(ens) = s.trunc_subst(&binds) else {
        return false;
    };
    let Ok(a) = reduce(p, MemberKind::Method, callee, &ens) else {
        return false;
    };
    let b = ReducedEntry {
        head: caller.clone(),
        value: s.lookup(reserved::MSE),
    };
    order_holds(&p.method_order(), &a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;
    use crate::syntax::parser::{parse_expr_with, ParseCtx};
    use crate::syntax::types::function_env;

    fn pizza() -> Program {
        parse_program(include_str!("../corpus/pizza.xrl")).unwrap()
    }

    fn ob(p: &Program, kind: ObKind, env: TypeEnv) -> Verdict {
        let o = Obligation::new("t".into(), kind, "test".into(), env);
        discharge(p, &o, &Policy::default())
    }

    fn anchovy_env(p: &Program, f: &str) -> TypeEnv {
        let owner = Owner::Class("Anchovy".into());
        function_env(&owner, p.func(&owner, f).unwrap())
    }

    #[test]
    fn fdf_and_reads_pass_on_corpus() {
        let p = pizza();
        for (f, layer) in [("valid", Layer::One), ("price", Layer::Two)] {
            let v = ob(
                &p,
                ObKind::Fdf {
                    layer,
                    class: "Anchovy".into(),
                    func: f.into(),
                },
                anchovy_env(&p, f),
            );
            assert_eq!(v.status, Status::Pass, "{v:?}");
            let v = ob(
                &p,
                ObKind::ReadsSound {
                    reads_of: EntryHead::new(Owner::Trait("Pizza".into()), f),
                    class: "Anchovy".into(),
                    func: f.into(),
                },
                anchovy_env(&p, f),
            );
            assert_eq!(v.status, Status::Pass, "{v:?}");
        }
    }

    #[test]
    fn false_implication_fails_with_witness() {
        let p = pizza();
        let ctx = ParseCtx::of_program(&p);
        let env = anchovy_env(&p, "valid");
        let v = ob(
            &p,
            ObKind::Implies {
                pre: parse_expr_with("this.valid@Pizza()", &ctx).unwrap(),
                post: parse_expr_with("this.price@Pizza() <= 2", &ctx).unwrap(),
            },
            env,
        );
        assert_eq!(v.status, Status::Fail);
        assert!(v.witness.is_some());
    }

    #[test]
    fn trusted_and_wellfounded() {
        let p = pizza();
        let o = Obligation::new(
            "x".into(),
            ObKind::WellFounded {
                kind: MemberKind::Function,
            },
            "test".into(),
            TypeEnv::new(),
        );
        assert_eq!(discharge(&p, &o, &Policy::default()).status, Status::Pass);
        let mut pol = Policy::default();
        pol.trust.insert("x".into());
        assert_eq!(discharge(&p, &o, &pol).status, Status::Trusted);
    }
}
