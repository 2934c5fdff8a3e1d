//! Derivation-guided interpreters for simple programs. The total one carries
//! no fuel; each call checks that the callee measure is below `mse`.

use std::sync::Arc;

use super::check::{SimpleChecked, SimpleNode, SimpleRule};
use super::{SCmd, SimpleProgram};
use crate::callfree::{eval_alpha, holds_alpha};
use crate::name::reserved;
use crate::state::{State, Value};
use crate::syntax::{print_expr, Expr, Program};

#[derive(Clone, Debug, PartialEq)]
pub enum SimpleOutcome {
    Ok(State),
    Timeout,
    Violation { path: String, detail: String },
}

/// Outcome plus the procedure entries in order, each with its measure.
#[derive(Clone, Debug)]
pub struct SimpleRun {
    pub outcome: SimpleOutcome,
    pub entries: Vec<(String, u64)>,
}

enum Stop {
    Timeout,
    Violation(String, String),
}

struct Run<'a> {
    p: &'a SimpleProgram,
    c: &'a SimpleChecked,
    empty: Program,
    entries: Vec<(String, u64)>,
}

fn nat(v: Value) -> Option<u64> {
    match v {
        Value::Nat(n) => Some(n),
        _ => None,
    }
}

impl Run<'_> {
    fn eval(&self, e: &Expr, s: &State) -> Result<Value, Stop> {
        eval_alpha(&self.empty, e, s)
            .map_err(|c| Stop::Violation(String::new(), format!("call in expression: {}", c.0)))
    }

    fn measure(&self, e: &Expr, s: &State, path: &str) -> Result<u64, Stop> {
        nat(self.eval(e, s)?).ok_or_else(|| {
            Stop::Violation(path.into(), format!("measure `{}` is not a natural", print_expr(e)))
        })
    }

    /// Runs `k` on `s`; `fuel` is `None` for total derivations.
    fn node(&mut self, k: &SimpleNode, s: State, fuel: Option<u64>) -> Result<State, Stop> {
        if !holds_alpha(&self.empty, &k.pre, &s) {
            return Err(Stop::Violation(
                k.path.clone(),
                format!("precondition `{}` fails", print_expr(&k.pre)),
            ));
        }
        let t = self.exec(k, s, fuel)?;
        if !holds_alpha(&self.empty, &k.post, &t) {
            return Err(Stop::Violation(
                k.path.clone(),
                format!("postcondition `{}` fails", print_expr(&k.post)),
            ));
        }
        Ok(t)
    }

    fn exec(&mut self, k: &SimpleNode, mut s: State, fuel: Option<u64>) -> Result<State, Stop> {
        match k.rule {
            SimpleRule::Skip => Ok(s),
            SimpleRule::Asn => {
                let SCmd::Asn(a, e) = &k.cmd else { unreachable!() };
                let v = self.eval(e, &s)?;
                s.update_mut(a, v);
                Ok(s)
            }
            SimpleRule::Seq => {
                let t = self.node(&k.children[0], s, fuel)?;
                self.node(&k.children[1], t, fuel)
            }
            SimpleRule::If => {
                let SCmd::If(g, ..) = &k.cmd else { unreachable!() };
                let i = if holds_alpha(&self.empty, g, &s) { 0 } else { 1 };
                self.node(&k.children[i], s, fuel)
            }
            SimpleRule::Conseq => self.node(&k.children[0], s, fuel),
            SimpleRule::Cast => {
                let m = self.measure(&self.entry_measure(k)?, &s, &k.path)?;
                let saved = s.is_bound(reserved::MSE).then(|| s.get(reserved::MSE));
                s.update_mut(reserved::MSE, Value::Nat(m));
                let mut t = self.enter(&k.children[0], s, None)?;
                match saved {
                    Some(v) => t.update_mut(reserved::MSE, v),
                    None => t.remove_var(reserved::MSE),
                }
                Ok(t)
            }
            SimpleRule::Cal => {
                let SCmd::Call { lhs, proc, arg } = &k.cmd else { unreachable!() };
                let q = self.p.proc(proc).expect("checked call");
                let v = self.eval(arg, &s)?;
                let mut callee = State::new();
                callee.update_mut(&q.param, v);
                let root = match fuel {
                    None => {
                        let m = self.measure(&q.measure, &callee, &k.path)?;
                        let bound = s.is_bound(reserved::MSE).then(|| s.get(reserved::MSE)).and_then(nat);
                        if bound.is_none_or(|b| m >= b) {
                            return Err(Stop::Violation(
                                k.path.clone(),
                                format!("callee measure {m} is not below mse {bound:?}"),
                            ));
                        }
                        callee.update_mut(reserved::MSE, Value::Nat(m));
                        self.root(&self.c.total, proc)?
                    }
                    Some(0) => return Err(Stop::Timeout),
                    Some(_) => self.root(&self.c.partial, proc)?,
                };
                let out = self.enter(&root, callee, fuel.map(|f| f - 1))?;
                let r = out.get(reserved::RET);
                s.update_mut(lhs, r);
                Ok(s)
            }
        }
    }

    fn entry_measure(&self, k: &SimpleNode) -> Result<Expr, Stop> {
        self.p
            .proc(&k.entry)
            .map(|q| q.measure.clone())
            .ok_or_else(|| Stop::Violation(k.path.clone(), "unknown procedure".into()))
    }

    fn root(
        &self,
        m: &std::collections::BTreeMap<crate::name::Name, Arc<SimpleNode>>,
        proc: &str,
    ) -> Result<Arc<SimpleNode>, Stop> {
        m.get(proc).cloned().ok_or_else(|| {
            Stop::Violation(String::new(), format!("no derivation for {proc}"))
        })
    }

    fn enter(&mut self, root: &SimpleNode, s: State, fuel: Option<u64>) -> Result<State, Stop> {
        if root.total {
            let m = nat(s.get(reserved::MSE)).unwrap_or(0);
            self.entries.push((root.entry.to_string(), m));
        }
        self.node(root, s, fuel)
    }
}

fn finish(r: Result<State, Stop>, entries: Vec<(String, u64)>) -> SimpleRun {
    let outcome = match r {
        Ok(s) => SimpleOutcome::Ok(s),
        Err(Stop::Timeout) => SimpleOutcome::Timeout,
        Err(Stop::Violation(path, detail)) => SimpleOutcome::Violation { path, detail },
    };
    SimpleRun { outcome, entries }
}

fn start<'a>(p: &'a SimpleProgram, c: &'a SimpleChecked) -> Run<'a> {
    Run {
        p,
        c,
        empty: Program::default(),
        entries: Vec::new(),
    }
}

/// Runs the total derivation of `proc` on `s`, binding `mse` to the entry
/// measure when unbound.
pub fn simple_inter_t(p: &SimpleProgram, c: &SimpleChecked, proc: &str, mut s: State) -> SimpleRun {
    let mut run = start(p, c);
    let r = (|| {
        let root = run.root(&c.total, proc)?;
        if !s.is_bound(reserved::MSE) {
            let q = p.proc(proc).expect("derivation of a declared procedure");
            let m = run.measure(&q.measure, &s, &root.path)?;
            s.update_mut(reserved::MSE, Value::Nat(m));
        }
        run.enter(&root, s, None)
    })();
    finish(r, run.entries)
}

/// Runs the partial derivation of `proc` on `s` with call-depth fuel.
pub fn simple_inter_p(p: &SimpleProgram, c: &SimpleChecked, proc: &str, fuel: u64, s: State) -> SimpleRun {
    let mut run = start(p, c);
    let r = (|| {
        let root = run.root(&c.partial, proc)?;
        run.enter(&root, s, Some(fuel))
    })();
    finish(r, run.entries)
}
