//! Structural semantics `⟦e⟧α` and footprints `⦃e⦄α` of call-free expressions.

use std::collections::BTreeSet;

use crate::state::{Loc, Ptr, State, Value};
use crate::syntax::{BinOp, Expr, Lit, Program, UnOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("call construct {0} reached the call-free evaluator")]
pub struct CallInCallFree(pub String);

pub fn lit_value(l: &Lit) -> Value {
    match l {
        Lit::Nat(n) => Value::Nat(*n),
        Lit::Bool(b) => Value::Bool(*b),
        Lit::Null => Value::null(),
        Lit::EmptySet => Value::Region(Default::default()),
    }
}

pub fn unop(op: UnOp, v: &Value) -> Value {
    match op {
        UnOp::Not => Value::Bool(!v.as_bool()),
        UnOp::Singleton => Value::Region([v.as_ptr()].into_iter().collect()),
    }
}

/// Operator semantics shared by every evaluator. Region operands select the
/// set reading of `+ - < <=`; naturals saturate.
pub fn binop(op: BinOp, a: &Value, b: &Value) -> Value {
    let regions = matches!(a, Value::Region(_)) || matches!(b, Value::Region(_));
    match op {
        BinOp::Add if regions => {
            let mut r = a.as_region();
            r.extend(b.as_region());
            Value::Region(r)
        }
        BinOp::Sub if regions => {
            let rb = b.as_region();
            Value::Region(
                a.as_region()
                    .into_iter()
                    .filter(|p| !rb.contains(p))
                    .collect(),
            )
        }
        BinOp::Lt if regions => {
            let (ra, rb) = (a.as_region(), b.as_region());
            Value::Bool(ra.len() < rb.len() && ra.is_subset(&rb))
        }
        BinOp::Le if regions => Value::Bool(a.as_region().is_subset(&b.as_region())),
        BinOp::Add => Value::Nat(a.as_nat().saturating_add(b.as_nat())),
        BinOp::Sub => Value::Nat(a.as_nat().saturating_sub(b.as_nat())),
        BinOp::Mul => Value::Nat(a.as_nat().saturating_mul(b.as_nat())),
        BinOp::Lt => Value::Bool(a.as_nat() < b.as_nat()),
        BinOp::Le => Value::Bool(a.as_nat() <= b.as_nat()),
        BinOp::Eq => Value::Bool(a == b),
        BinOp::Ne => Value::Bool(a != b),
        BinOp::In => Value::Bool(b.as_region().contains(&a.as_ptr())),
        BinOp::NotIn => Value::Bool(!b.as_region().contains(&a.as_ptr())),
        BinOp::And => Value::Bool(a.as_bool() && b.as_bool()),
        BinOp::Or => Value::Bool(a.as_bool() || b.as_bool()),
        BinOp::Implies => Value::Bool(!a.as_bool() || b.as_bool()),
    }
}

pub fn is_class(v: &Value, class: &str, p: &Program, s: &State) -> bool {
    let ptr = v.as_ptr();
    p.is_class(class) && s.class_of(&ptr) == class
}

pub fn is_trait(v: &Value, tr: &str, p: &Program, s: &State) -> bool {
    let ptr = v.as_ptr();
    p.is_t(s.class_of(&ptr), tr)
}

/// `⟦e⟧α s`
pub fn eval_alpha(p: &Program, e: &Expr, s: &State) -> Result<Value, CallInCallFree> {
    Ok(match e {
        Expr::Var(x) => s.lookup(x),
        Expr::Lit(l) => lit_value(l),
        Expr::Field(r, f) => {
            let ptr: Ptr = eval_alpha(p, r, s)?.as_ptr();
            s.heap_get(&ptr, f)
        }
        Expr::Ite(b, t, f) => {
            if eval_alpha(p, b, s)?.as_bool() {
                eval_alpha(p, t, s)?
            } else {
                eval_alpha(p, f, s)?
            }
        }
        Expr::Unary(op, a) => unop(*op, &eval_alpha(p, a, s)?),
        Expr::Binary(op, a, b) => {
            let va = eval_alpha(p, a, s)?;
            let vb = eval_alpha(p, b, s)?;
            binop(*op, &va, &vb)
        }
        Expr::IsClass(a, c) => Value::Bool(is_class(&eval_alpha(p, a, s)?, c, p, s)),
        Expr::IsTrait(a, t) => Value::Bool(is_trait(&eval_alpha(p, a, s)?, t, p, s)),
        Expr::Call { func, owner, .. } => {
            return Err(CallInCallFree(format!("{owner}.{func}")));
        }
    })
}

/// `⦃e⦄α s`
pub fn fp_alpha(p: &Program, e: &Expr, s: &State) -> Result<BTreeSet<Loc>, CallInCallFree> {
    let mut out = BTreeSet::new();
    fp_into(p, e, s, &mut out)?;
    Ok(out)
}

fn fp_into(
    p: &Program,
    e: &Expr,
    s: &State,
    out: &mut BTreeSet<Loc>,
) -> Result<(), CallInCallFree> {
    match e {
        Expr::Var(_) | Expr::Lit(_) => {}
        Expr::Field(r, f) => {
            fp_into(p, r, s, out)?;
            let ptr = eval_alpha(p, r, s)?.as_ptr();
            out.insert((ptr, f.clone()));
        }
        Expr::Ite(b, t, f) => {
            fp_into(p, b, s, out)?;
            if eval_alpha(p, b, s)?.as_bool() {
                fp_into(p, t, s, out)?;
            } else {
                fp_into(p, f, s, out)?;
            }
        }
        Expr::Unary(_, a) | Expr::IsClass(a, _) | Expr::IsTrait(a, _) => fp_into(p, a, s, out)?,
        Expr::Binary(_, a, b) => {
            fp_into(p, a, s, out)?;
            fp_into(p, b, s, out)?;
        }
        Expr::Call { func, owner, .. } => {
            return Err(CallInCallFree(format!("{owner}.{func}")));
        }
    }
    Ok(())
}

/// `↓b ⟦e⟧α s`, treating a call construct as false.
pub fn holds_alpha(p: &Program, e: &Expr, s: &State) -> bool {
    eval_alpha(p, e, s).map(|v| v.as_bool()).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_expr, parse_program};

    fn prog() -> Program {
        parse_program(
            "trait Pizza { var fp: set<Pizza>; }
             class Crust extends Pizza { }
             class Anchovy extends Pizza { var nt: Pizza?; }",
        )
        .unwrap()
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

    fn ev(e: &str, s: &State) -> Value {
        eval_alpha(&prog(), &parse_expr(e).unwrap(), s).unwrap()
    }

    #[test]
    fn field_and_subset() {
        let (s, a1, c0) = chain();
        assert_eq!(
            ev("this.fp", &s),
            Value::Region([a1, c0.clone()].into_iter().collect())
        );
        assert_eq!(ev("this.nt.fp < this.fp", &s), Value::Bool(true));
        assert_eq!(ev("this.fp < this.fp", &s), Value::Bool(false));
        let s2 = s.update("e", Value::Ptr(c0));
        let p = prog();
        let e = crate::syntax::parser::parse_expr_with(
            "e is Crust",
            &crate::syntax::parser::ParseCtx::of_program(&p),
        )
        .unwrap();
        assert_eq!(eval_alpha(&p, &e, &s2).unwrap(), Value::Bool(true));
        assert_eq!(ev("e is Pizza", &s2), Value::Bool(true));
    }

    #[test]
    fn footprints() {
        let (s, a1, c0) = chain();
        let p = prog();
        let fp = |e: &str| fp_alpha(&p, &parse_expr(e).unwrap(), &s).unwrap();
        assert!(fp("x").is_empty());
        assert_eq!(
            fp("this.fp"),
            [(a1.clone(), "fp".into())].into_iter().collect()
        );
        assert_eq!(
            fp("this.nt.fp"),
            [(a1, "nt".into()), (c0, "fp".into())].into_iter().collect()
        );
    }

    #[test]
    fn ite_footprint_excludes_untaken_branch() {
        let (s, a1, _) = chain();
        let p = prog();
        let e = parse_expr("if false then this.nt else this.fp").unwrap();
        assert_eq!(
            fp_alpha(&p, &e, &s).unwrap(),
            [(a1, "fp".into())].into_iter().collect()
        );
    }

    #[test]
    fn calls_are_defects() {
        let (s, ..) = chain();
        let e = parse_expr("this.valid@Pizza()").unwrap();
        assert!(eval_alpha(&prog(), &e, &s).is_err());
        assert!(fp_alpha(&prog(), &e, &s).is_err());
    }

    #[test]
    fn arithmetic() {
        let s = State::new();
        assert_eq!(ev("2 - 5", &s), Value::Nat(0));
        assert_eq!(ev("2 + 3 * 4", &s), Value::Nat(14));
        assert_eq!(ev("{} <= {}", &s), Value::Bool(true));
        assert_eq!(ev("{} < {}", &s), Value::Bool(false));
        assert_eq!(ev("null == null", &s), Value::Bool(true));
        assert_eq!(ev("null in {null}", &s), Value::Bool(true));
        assert_eq!(ev("false ==> x", &s), Value::Bool(true));
    }
}
