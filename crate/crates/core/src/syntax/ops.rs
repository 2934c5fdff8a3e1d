//! Syntactic helpers over expressions.

use std::collections::BTreeSet;

use super::ast::{BinOp, Expr, Lit};
use crate::name::Name;

/// No call construct occurs anywhere in `e`.
pub fn call_free(e: &Expr) -> bool {
    match e {
        Expr::Call { .. } => false,
        _ => e.children().into_iter().all(call_free),
    }
}

/// Call-free and free of field accesses.
pub fn pure(e: &Expr) -> bool {
    match e {
        Expr::Call { .. } | Expr::Field(..) => false,
        _ => e.children().into_iter().all(pure),
    }
}

pub fn fv(e: &Expr) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    fv_into(e, &mut out);
    out
}

fn fv_into(e: &Expr, out: &mut BTreeSet<Name>) {
    if let Expr::Var(x) = e {
        out.insert(x.clone());
    }
    for c in e.children() {
        fv_into(c, out);
    }
}

/// Free variables of a list of region expressions.
pub fn fv_effects_regions<'a>(rs: impl IntoIterator<Item = &'a Expr>) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    for r in rs {
        fv_into(r, &mut out);
    }
    out
}

/// Simultaneous substitution of variables.
pub fn subst(e: &Expr, map: &[(Name, Expr)]) -> Expr {
    match e {
        Expr::Var(x) => map
            .iter()
            .find(|(y, _)| y == x)
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| e.clone()),
        Expr::Lit(_) => e.clone(),
        Expr::Field(r, f) => Expr::Field(Box::new(subst(r, map)), f.clone()),
        Expr::Ite(b, t, f) => Expr::Ite(
            Box::new(subst(b, map)),
            Box::new(subst(t, map)),
            Box::new(subst(f, map)),
        ),
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(subst(a, map))),
        Expr::Binary(op, a, b) => {
            Expr::Binary(*op, Box::new(subst(a, map)), Box::new(subst(b, map)))
        }
        Expr::IsClass(a, c) => Expr::IsClass(Box::new(subst(a, map)), c.clone()),
        Expr::IsTrait(a, t) => Expr::IsTrait(Box::new(subst(a, map)), t.clone()),
        Expr::Call {
            recv,
            func,
            owner,
            arg,
        } => Expr::Call {
            recv: Box::new(subst(recv, map)),
            func: func.clone(),
            owner: owner.clone(),
            arg: arg.as_ref().map(|a| Box::new(subst(a, map))),
        },
    }
}

/// Flattens nested `&&` into its conjunct list.
pub fn conjuncts(e: &Expr) -> Vec<&Expr> {
    let mut out = Vec::new();
    fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
        match e {
            Expr::Binary(BinOp::And, a, b) => {
                go(a, out);
                go(b, out);
            }
            _ => out.push(e),
        }
    }
    go(e, &mut out);
    out
}

/// Right-nested conjunction; `true` when empty.
pub fn and_all(mut es: Vec<Expr>) -> Expr {
    let Some(mut acc) = es.pop() else {
        return Expr::Lit(Lit::Bool(true));
    };
    while let Some(e) = es.pop() {
        acc = Expr::and(e, acc);
    }
    acc
}

/// Equality modulo associativity of `&&`.
pub fn same_conjuncts(a: &Expr, b: &Expr) -> bool {
    conjuncts(a) == conjuncts(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_expr;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn call_free_examples() {
        assert!(call_free(&e("this.fp")));
        assert!(!call_free(&e("this.nt.valid@Pizza()")));
        assert!(!call_free(&e("if x is Crust then 1 else y.price@Pizza(0)")));
    }

    #[test]
    fn pure_excludes_fields() {
        assert!(pure(&e("f2 + {this}")));
        assert!(!pure(&e("r.fp")));
    }

    #[test]
    fn subst_is_simultaneous() {
        let r = subst(&e("x + y"), &[("x".into(), e("y")), ("y".into(), e("x"))]);
        assert_eq!(r, e("y + x"));
    }

    #[test]
    fn conjunct_flattening() {
        assert!(same_conjuncts(&e("(a && b) && c"), &e("a && (b && c)")));
        assert!(!same_conjuncts(&e("a && b"), &e("b && a")));
        assert_eq!(and_all(vec![]), e("true"));
    }
}
