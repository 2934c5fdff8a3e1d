//! Plain big-step semantics with a shared fuel budget. It uses no
//! derivations, no contracts and no well-definedness checks.

use crate::callfree::{binop, lit_value, unop};
use crate::name::{reserved, Name};
use crate::state::{State, Value};
use crate::syntax::{BinOp, Cmd, Expr, Owner, Program};

#[derive(Clone, Debug, PartialEq)]
pub enum OracleOutcome {
    Ok(State),
    Timeout,
    Stuck(String),
}

impl OracleOutcome {
    pub fn ok(&self) -> Option<&State> {
        match self {
            OracleOutcome::Ok(s) => Some(s),
            _ => None,
        }
    }
}

enum Halt {
    Timeout,
    Stuck(String),
}

const RED_ZONE: usize = 256 * 1024;
const STACK_CHUNK: usize = 8 * 1024 * 1024;

/// Runs `c` from `s`. Every method or function call consumes one unit of
/// `fuel`, shared across the whole run.
pub fn oracle_run(c: &Cmd, fuel: u64, s: &State, p: &Program) -> OracleOutcome {
    let mut o = Oracle { p, fuel };
    match o.exec(c, s.clone()) {
        Ok(t) => OracleOutcome::Ok(t),
        Err(Halt::Timeout) => OracleOutcome::Timeout,
        Err(Halt::Stuck(m)) => OracleOutcome::Stuck(m),
    }
}

struct Oracle<'p> {
    p: &'p Program,
    fuel: u64,
}

impl Oracle<'_> {
    fn tick(&mut self) -> Result<(), Halt> {
        if self.fuel == 0 {
            return Err(Halt::Timeout);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn exec(&mut self, c: &Cmd, s: State) -> Result<State, Halt> {
        stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || self.exec_in(c, s))
    }

    fn exec_in(&mut self, c: &Cmd, s: State) -> Result<State, Halt> {
        match c {
            Cmd::Skip => Ok(s),
            Cmd::Assign(x, e) => {
                let v = self.eval(e, &s)?;
                Ok(s.update(x, v))
            }
            Cmd::Write(x, f, e) => {
                let v = self.eval(e, &s)?;
                let ptr = s.get(x).as_ptr();
                if ptr.is_null() {
                    return Err(Halt::Stuck(format!("write through null {x}")));
                }
                Ok(s.heap_update(&ptr, f, v))
            }
            Cmd::Alloc(x, class) => {
                let (ptr, t) = s.allocate(class, []);
                Ok(t.update(x, Value::Ptr(ptr)))
            }
            Cmd::If(g, a, b) => {
                if self.eval(g, &s)?.as_bool() {
                    self.exec(a, s)
                } else {
                    self.exec(b, s)
                }
            }
            Cmd::Seq(a, b) => {
                let t = self.exec(a, s)?;
                self.exec(b, t)
            }
            Cmd::Call {
                lhs,
                recv,
                method,
                args,
                ..
            } => {
                let y = s.get(recv);
                let ptr = y.as_ptr();
                if ptr.is_null() {
                    return Err(Halt::Stuck(format!("call of {method} on null {recv}")));
                }
                let owner = Owner::Class(ptr.class.clone());
                let Some(m) = self.p.method(&owner, method) else {
                    return Err(Halt::Stuck(format!("{} has no method {method}", ptr.class)));
                };
                let Some(body) = &m.body else {
                    return Err(Halt::Stuck(format!("{}.{method} has no body", ptr.class)));
                };
                self.tick()?;
                let mut callee = s.trunc_subst(&[]).map_err(Halt::Stuck)?;
                callee.update_mut(reserved::THIS, y);
                for ((a, _), z) in m.params.iter().zip(args) {
                    callee.update_mut(a, s.get(z));
                }
                let out = self.exec(body, callee)?;
                let ret = out.get(&m.ret.0);
                Ok(out.with_stack_of(&s).update(lhs, ret))
            }
        }
    }

    fn eval(&mut self, e: &Expr, s: &State) -> Result<Value, Halt> {
        stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || self.eval_in(e, s))
    }

    fn eval_in(&mut self, e: &Expr, s: &State) -> Result<Value, Halt> {
        Ok(match e {
            Expr::Var(x) => s.lookup(x),
            Expr::Lit(l) => lit_value(l),
            Expr::Field(r, f) => {
                let ptr = self.eval(r, s)?.as_ptr();
                s.heap_get(&ptr, f)
            }
            Expr::Ite(b, t, f) => {
                if self.eval(b, s)?.as_bool() {
                    self.eval(t, s)?
                } else {
                    self.eval(f, s)?
                }
            }
            Expr::Unary(op, a) => unop(*op, &self.eval(a, s)?),
            Expr::Binary(op @ (BinOp::And | BinOp::Or | BinOp::Implies), a, b) => {
                let va = self.eval(a, s)?.as_bool();
                let short = match op {
                    BinOp::And => (!va).then_some(false),
                    BinOp::Or => va.then_some(true),
                    _ => (!va).then_some(true),
                };
                match short {
                    Some(v) => Value::Bool(v),
                    None => Value::Bool(self.eval(b, s)?.as_bool()),
                }
            }
            Expr::Binary(op, a, b) => {
                let va = self.eval(a, s)?;
                let vb = self.eval(b, s)?;
                binop(*op, &va, &vb)
            }
            Expr::IsClass(a, c) => {
                let ptr = self.eval(a, s)?.as_ptr();
                Value::Bool(!ptr.is_null() && ptr.class == *c && self.p.is_class(c))
            }
            Expr::IsTrait(a, t) => {
                let ptr = self.eval(a, s)?.as_ptr();
                Value::Bool(self.p.is_t(&ptr.class, t))
            }
            Expr::Call {
                recv, func, arg, ..
            } => {
                let y = self.eval(recv, s)?;
                let ptr = y.as_ptr();
                if ptr.is_null() {
                    return Err(Halt::Stuck(format!("{func} applied to null")));
                }
                let owner = Owner::Class(ptr.class.clone());
                let Some(f) = self.p.func(&owner, func) else {
                    return Err(Halt::Stuck(format!("{} has no function {func}", ptr.class)));
                };
                let Some(body) = &f.body else {
                    return Err(Halt::Stuck(format!("{}.{func} has no body", ptr.class)));
                };
                let mut bind: Vec<(Name, Value)> = vec![(Name::from(reserved::THIS), y)];
                if let (Some((x, _)), Some(a)) = (&f.param, arg) {
                    bind.push((x.clone(), self.eval(a, s)?));
                }
                self.tick()?;
                let callee = s.trunc_subst(&bind).map_err(Halt::Stuck)?;
                self.eval(body, &callee)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Ptr;
    use crate::syntax::parser::ParseCtx;
    use crate::syntax::{parse_cmd, parse_program};

    fn pizza() -> Program {
        parse_program(include_str!("../../corpus/pizza.xrl")).unwrap()
    }

    #[test]
    fn straight_line() {
        let p = pizza();
        let c = parse_cmd("x := 1; y := x + 1", &ParseCtx::of_program(&p)).unwrap();
        let out = oracle_run(&c, 0, &State::new(), &p);
        assert_eq!(out.ok().unwrap().get("y"), Value::Nat(2));
    }

    #[test]
    fn null_dispatch_is_stuck() {
        let p = pizza();
        let c = parse_cmd("r := n.remA@Pizza(f, q)", &ParseCtx::of_program(&p)).unwrap();
        let s = State::new().update("n", Value::null());
        assert!(matches!(oracle_run(&c, 10, &s, &p), OracleOutcome::Stuck(_)));
    }

    #[test]
    fn crust_price_and_fuel() {
        let p = pizza();
        let c0 = Ptr::new(1, "Crust");
        let mut s = State::new().update("c", Value::Ptr(c0.clone()));
        s.add_alloc(c0);
        let c = parse_cmd("v := c.price@Pizza()", &ParseCtx::of_program(&p)).unwrap();
        assert_eq!(oracle_run(&c, 1, &s, &p).ok().unwrap().get("v"), Value::Nat(1));
        assert_eq!(oracle_run(&c, 0, &s, &p), OracleOutcome::Timeout);
    }
}
