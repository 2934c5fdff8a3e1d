//! Syntactic effects `r`f`, their locations and the separation predicates.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::{json, Value as Json};

use crate::callfree::{eval_alpha, CallInCallFree};
use crate::name::{reserved, Name};
use crate::state::{Loc, State};
use crate::syntax::{print_expr, subst, Cmd, Expr, Owner, Program, UnOp};
use crate::wd::eval_b2;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Effect {
    pub region: Expr,
    pub field: Name,
}

impl Effect {
    pub fn new(region: Expr, field: &str) -> Self {
        Effect {
            region,
            field: Name::from(field),
        }
    }

    pub fn to_json(&self) -> Json {
        json!({"region": print_expr(&self.region), "field": self.field.as_str()})
    }
}

impl fmt::Debug for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})`{}", print_expr(&self.region), self.field)
    }
}

pub type EffectList = Vec<Effect>;

pub fn effects_to_json(es: &[Effect]) -> Json {
    Json::Array(es.iter().map(Effect::to_json).collect())
}

/// `locs ε̄ s`. Regions are call-free; a call construct denotes no location.
pub fn locs(p: &Program, es: &[Effect], s: &State) -> BTreeSet<Loc> {
    let mut out = BTreeSet::new();
    for e in es {
        let r = eval_alpha(p, &e.region, s)
            .map(|v| v.as_region())
            .unwrap_or_default();
        for ptr in r {
            out.insert((ptr, e.field.clone()));
        }
    }
    out
}

/// `reff e` for call-free `e`. Conditionals take both branches.
pub fn reff(e: &Expr) -> Result<EffectList, CallInCallFree> {
    let mut out = Vec::new();
    reff_into(e, &mut out, &mut |recv, func, owner, _| {
        Err(CallInCallFree(format!(
            "{}.{func}@{owner}",
            print_expr(recv)
        )))
    })?;
    Ok(out)
}

/// `reff` extended to calls: a call contributes the effects of its receiver
/// and argument plus `𝓕` of the callee's reads region at the call's entry.
/// Soundness of that region rests on the reads obligations.
pub fn reff_with_reads(p: &Program, e: &Expr) -> EffectList {
    let mut out = Vec::new();
    let _ = reff_into(e, &mut out, &mut |recv, func, owner, arg| {
        let Some(decl) = p.func(owner, func) else {
            return Ok(Vec::new());
        };
        let mut map = vec![(Name::from(reserved::THIS), recv.clone())];
        if let (Some((x, _)), Some(a)) = (&decl.param, arg) {
            map.push((x.clone(), a.clone()));
        }
        Ok(region_to_effects(p, &subst(&decl.reads, &map)))
    });
    out
}

type CallEffects<'a> =
    dyn FnMut(&Expr, &Name, &Owner, Option<&Expr>) -> Result<EffectList, CallInCallFree> + 'a;

fn reff_into(
    e: &Expr,
    out: &mut EffectList,
    call: &mut CallEffects<'_>,
) -> Result<(), CallInCallFree> {
    match e {
        Expr::Var(_) | Expr::Lit(_) => {}
        Expr::Field(r, f) => {
            reff_into(r, out, call)?;
            out.push(Effect {
                region: Expr::Unary(UnOp::Singleton, r.clone()),
                field: f.clone(),
            });
        }
        Expr::Ite(b, t, f) => {
            reff_into(b, out, call)?;
            reff_into(t, out, call)?;
            reff_into(f, out, call)?;
        }
        Expr::Unary(_, a) | Expr::IsClass(a, _) | Expr::IsTrait(a, _) => reff_into(a, out, call)?,
        Expr::Binary(_, a, b) => {
            reff_into(a, out, call)?;
            reff_into(b, out, call)?;
        }
        Expr::Call {
            recv,
            func,
            owner,
            arg,
        } => {
            reff_into(recv, out, call)?;
            if let Some(a) = arg {
                reff_into(a, out, call)?;
            }
            out.extend(call(recv, func, owner, arg.as_deref())?);
        }
    }
    Ok(())
}

/// `𝓕 r`: the region paired with every field, in declaration order.
pub fn region_to_effects(p: &Program, r: &Expr) -> EffectList {
    p.field_names()
        .into_iter()
        .map(|f| Effect {
            region: r.clone(),
            field: f,
        })
        .collect()
}

pub fn subst_effects(es: &[Effect], map: &[(Name, Expr)]) -> EffectList {
    es.iter()
        .map(|e| Effect {
            region: subst(&e.region, map),
            field: e.field.clone(),
        })
        .collect()
}

/// `η̄ ·/. ε̄` at `s`.
pub fn separates(p: &Program, eta: &[Effect], eps: &[Effect], s: &State) -> bool {
    locs(p, eta, s).is_disjoint(&locs(p, eps, s))
}

/// `P ⊩ ε̄' ≤ ε̄` at `s`.
pub fn subeffect(p: &Program, pre: &Expr, sub: &[Effect], sup: &[Effect], s: &State) -> bool {
    !eval_b2(p, pre, s) || locs(p, sub, s).is_subset(&locs(p, sup, s))
}

/// `ε̄2 is P,ε̄1-immune` at `s`.
pub fn immune(p: &Program, eps2: &[Effect], pre: &Expr, eps1: &[Effect], s: &State) -> bool {
    if !eval_b2(p, pre, s) {
        return true;
    }
    eps2.iter().all(|e| match reff(&e.region) {
        Ok(r) => separates(p, &r, eps1, s),
        Err(_) => false,
    })
}

/// `P ⊩ ε̄ # r'` at `s`.
pub fn disjoint(p: &Program, pre: &Expr, eps: &[Effect], r: &Expr, s: &State) -> bool {
    if !eval_b2(p, pre, s) {
        return true;
    }
    let other = eval_alpha(p, r, s)
        .map(|v| v.as_region())
        .unwrap_or_default();
    eps.iter().all(|e| {
        eval_alpha(p, &e.region, s)
            .map(|v| v.as_region())
            .unwrap_or_default()
            .is_disjoint(&other)
    })
}

/// `Mod c`
pub fn mod_vars(c: &Cmd) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    mod_into(c, &mut out);
    out
}

fn mod_into(c: &Cmd, out: &mut BTreeSet<Name>) {
    match c {
        Cmd::Skip | Cmd::Write(..) => {}
        Cmd::Assign(x, _) => {
            out.insert(x.clone());
        }
        Cmd::Alloc(x, _) | Cmd::Call { lhs: x, .. } => {
            out.insert(x.clone());
            out.insert(Name::from(reserved::ALLOC));
        }
        Cmd::If(_, a, b) | Cmd::Seq(a, b) => {
            mod_into(a, out);
            mod_into(b, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Ptr, Value};
    use crate::syntax::parser::{parse_cmd, ParseCtx};
    use crate::syntax::{parse_expr, parse_program};

    fn pizza() -> Program {
        parse_program(include_str!("../corpus/pizza.xrl")).unwrap()
    }

    fn chain() -> (State, Ptr, Ptr) {
        let a1 = Ptr::new(1, "Anchovy");
        let c0 = Ptr::new(2, "Crust");
        let mut s = State::new().update("this", Value::Ptr(a1.clone()));
        s.add_alloc(a1.clone());
        s.add_alloc(c0.clone());
        s.heap_update_mut(
            &a1,
            "fp",
            Value::Region([a1.clone(), c0.clone()].into_iter().collect()),
        );
        s.heap_update_mut(&a1, "nt", Value::Ptr(c0.clone()));
        s.heap_update_mut(&c0, "fp", Value::Region([c0.clone()].into_iter().collect()));
        (s, a1, c0)
    }

    fn ex(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn locs_examples() {
        let p = pizza();
        let (s, a1, c0) = chain();
        let s = s.update("x", Value::Ptr(a1.clone()));
        let l = locs(&p, &[Effect::new(ex("{x}"), "fp")], &s);
        assert_eq!(l, [(a1.clone(), Name::from("fp"))].into_iter().collect());
        let l = locs(&p, &region_to_effects(&p, &ex("this.fp")), &s);
        let want: BTreeSet<Loc> = [
            (a1.clone(), "fp".into()),
            (c0.clone(), "fp".into()),
            (a1, "nt".into()),
            (c0, "nt".into()),
        ]
        .into_iter()
        .collect();
        assert_eq!(l, want);
        assert!(locs(&p, &[], &s).is_empty());
    }

    #[test]
    fn reff_examples() {
        assert_eq!(
            reff(&ex("this.fp")).unwrap(),
            vec![Effect::new(ex("{this}"), "fp")]
        );
        assert!(reff(&ex("x")).unwrap().is_empty());
        assert_eq!(
            reff(&ex("this.nt.fp")).unwrap(),
            vec![
                Effect::new(ex("{this}"), "nt"),
                Effect::new(ex("{this.nt}"), "fp")
            ]
        );
        assert!(reff(&ex("this.valid@Pizza()")).is_err());
    }

    #[test]
    fn reff_with_reads_uses_reads_region() {
        let p = pizza();
        let r = reff_with_reads(&p, &ex("r.valid@Pizza()"));
        assert_eq!(r, region_to_effects(&p, &ex("{r} + r.fp")));
    }

    #[test]
    fn field_order_and_empty_region() {
        let p = pizza();
        let f = region_to_effects(&p, &ex("this.fp"));
        assert_eq!(
            f,
            vec![
                Effect::new(ex("this.fp"), "fp"),
                Effect::new(ex("this.fp"), "nt")
            ]
        );
        let (s, ..) = chain();
        assert!(locs(&p, &region_to_effects(&p, &ex("{}")), &s).is_empty());
        let none = parse_program("trait T { } class C extends T { }").unwrap();
        assert!(region_to_effects(&none, &ex("this.fp")).is_empty());
    }

    #[test]
    fn predicates() {
        let p = pizza();
        let (s, _, c0) = chain();
        let s = s.update("n", Value::Ptr(c0));
        let pre = ex("n == this.nt && this.nt.fp < this.fp");
        let sub = region_to_effects(&p, &ex("n.fp"));
        let sup = region_to_effects(&p, &ex("this.fp"));
        assert!(subeffect(&p, &pre, &sub, &sup, &s));
        assert!(!subeffect(&p, &ex("true"), &sup, &sub, &s));
        assert!(separates(&p, &[], &sup, &s));
        assert!(!disjoint(&p, &ex("true"), &sup, &ex("this.fp"), &s));
        assert!(disjoint(&p, &ex("true"), &sup, &ex("{}"), &s));
    }

    #[test]
    fn mod_vars_examples() {
        let ctx = ParseCtx::default();
        let c = |s: &str| parse_cmd(s, &ctx).unwrap();
        let names = |v: &[&str]| v.iter().map(|x| Name::from(*x)).collect::<BTreeSet<_>>();
        assert_eq!(mod_vars(&c("x := e")), names(&["x"]));
        assert_eq!(
            mod_vars(&c("if b { x := 1 } else { y := 2 }")),
            names(&["x", "y"])
        );
        assert_eq!(mod_vars(&c("x := new C")), names(&["x", "alloc"]));
        assert!(mod_vars(&c("x.f := 1")).is_empty());
    }
}
