//! Light type inference, used to pick value generators for variables.

use std::collections::BTreeMap;

use super::ast::*;
use crate::name::{reserved, Name};

pub type TypeEnv = BTreeMap<Name, Ty>;

pub fn infer_expr(p: &Program, env: &TypeEnv, e: &Expr) -> Option<Ty> {
    match e {
        Expr::Var(x) => env.get(x).cloned(),
        Expr::Lit(Lit::Nat(_)) => Some(Ty::Nat),
        Expr::Lit(Lit::Bool(_)) => Some(Ty::Bool),
        Expr::Lit(_) => None,
        Expr::Field(_, f) => p.field_ty(f).cloned(),
        Expr::Ite(_, a, b) => infer_expr(p, env, a).or_else(|| infer_expr(p, env, b)),
        Expr::Unary(UnOp::Not, _) => Some(Ty::Bool),
        Expr::Unary(UnOp::Singleton, a) => match infer_expr(p, env, a)? {
            Ty::Ref { target, .. } => Some(Ty::Set(target)),
            _ => None,
        },
        Expr::Binary(op, a, b) => match op {
            BinOp::Add | BinOp::Sub => {
                let ta = infer_expr(p, env, a);
                let tb = infer_expr(p, env, b);
                match (ta, tb) {
                    (Some(Ty::Set(t)), _) | (_, Some(Ty::Set(t))) => Some(Ty::Set(t)),
                    (Some(Ty::Nat), _) | (_, Some(Ty::Nat)) => Some(Ty::Nat),
                    _ => None,
                }
            }
            BinOp::Mul => Some(Ty::Nat),
            _ => Some(Ty::Bool),
        },
        Expr::IsClass(..) | Expr::IsTrait(..) => Some(Ty::Bool),
        Expr::Call { func, owner, .. } => p.func(owner, func).map(|f| f.ret_ty.clone()),
    }
}

fn this_ty(owner: &Owner) -> Ty {
    Ty::Ref {
        target: owner.name().clone(),
        nullable: true,
    }
}

/// Types of `this`, the parameter `x` and `ret` inside a function.
pub fn function_env(owner: &Owner, f: &FuncDecl) -> TypeEnv {
    let mut env = TypeEnv::new();
    env.insert(Name::from(reserved::THIS), this_ty(owner));
    if let Some((x, t)) = &f.param {
        env.insert(x.clone(), t.clone());
    }
    env.insert(Name::from(reserved::RET), f.ret_ty.clone());
    env
}

/// Types of `this`, parameters, `ret`, `mse` and body locals of a method.
pub fn method_env(p: &Program, owner: &Owner, m: &MethodDecl) -> TypeEnv {
    let mut env = TypeEnv::new();
    env.insert(Name::from(reserved::THIS), this_ty(owner));
    for (x, t) in &m.params {
        env.insert(x.clone(), t.clone());
    }
    env.insert(m.ret.0.clone(), m.ret.1.clone());
    if let Some(e) = m.measure() {
        if let Some(t) = infer_expr(p, &env, e) {
            env.insert(Name::from(reserved::MSE), t);
        }
    }
    if let Some(b) = &m.body {
        add_locals(p, &mut env, b);
    }
    env
}

pub fn add_locals(p: &Program, env: &mut TypeEnv, c: &Cmd) {
    match c {
        Cmd::Skip | Cmd::Write(..) => {}
        Cmd::Assign(x, e) => {
            if !env.contains_key(x) {
                if let Some(t) = infer_expr(p, env, e) {
                    env.insert(x.clone(), t);
                }
            }
        }
        Cmd::Alloc(x, cl) => {
            env.entry(x.clone()).or_insert(Ty::Ref {
                target: cl.clone(),
                nullable: false,
            });
        }
        Cmd::Call {
            lhs, method, owner, ..
        } => {
            if let Some(m) = p.method(owner, method) {
                env.entry(lhs.clone()).or_insert(m.ret.1.clone());
            }
        }
        Cmd::If(_, a, b) | Cmd::Seq(a, b) => {
            add_locals(p, env, a);
            add_locals(p, env, b);
        }
    }
}
