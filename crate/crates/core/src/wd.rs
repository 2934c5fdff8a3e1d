//! Entry-indexed well-definedness `DF`/`DF₂`, semantics `⟦_⟧A`/`⟦_⟧𝐀`,
//! footprints and the reflected boolean semantics `⟦_⟧B`/`⟦_⟧𝐁`.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::callfree::{binop, eval_alpha, is_class, is_trait, lit_value, unop};
use crate::entry::{order_holds, reduce, EntryHead, MemberKind, ReducedEntry};
use crate::name::{reserved, Name};
use crate::state::{Loc, State, Value};
use crate::syntax::{call_free, Expr, FuncKind, Owner, Program};

/// `One` is the kind-1 layer (`DF`, `⟦_⟧A`); `Two` is the kind-2 layer
/// (`DF₂`, `⟦_⟧𝐀`), which assertions use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Layer {
    One,
    Two,
}

impl Layer {
    fn of_kind(k: FuncKind) -> Layer {
        match k {
            FuncKind::One => Layer::One,
            FuncKind::Two => Layer::Two,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WdMonitor {
    NonDecreasingCall,
    BodyNotWellDefined,
    MissingBody,
    DivergenceSuspected,
}

impl fmt::Display for WdMonitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WdMonitor::NonDecreasingCall => "NON_DECREASING_CALL",
            WdMonitor::BodyNotWellDefined => "BODY_NOT_WELL_DEFINED",
            WdMonitor::MissingBody => "MISSING_BODY",
            WdMonitor::DivergenceSuspected => "DIVERGENCE_SUSPECTED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WdError {
    #[error("expression is not well-defined in this state")]
    NotWellDefined,
    #[error("monitor {kind}: {detail}")]
    Monitor { kind: WdMonitor, detail: String },
}

#[derive(Clone, Copy, Debug)]
pub struct WdConfig {
    /// Maximum nesting of function calls before reporting divergence.
    pub depth_limit: usize,
    /// Re-run `DF` on every callee body before evaluating it.
    pub recheck_df: bool,
    pub trace: bool,
}

impl Default for WdConfig {
    fn default() -> Self {
        WdConfig {
            depth_limit: 100_000,
            recheck_df: true,
            trace: false,
        }
    }
}

/// One function entry reached during evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct EntryEvent {
    pub head: EntryHead,
    pub measure: serde_json::Value,
    pub depth: usize,
}

/// A single evaluation context. The depth counter and trace are local to it.
pub struct Wd<'p> {
    p: &'p Program,
    cfg: WdConfig,
    depth: Cell<usize>,
    trace: RefCell<Vec<EntryEvent>>,
    /// Call results for the heap of the evaluation in progress.
    memo: RefCell<HashMap<CallKey, Value>>,
    memo_heap: RefCell<Option<State>>,
}

type CallKey = (EntryHead, Value, Option<Value>);

const RED_ZONE: usize = 256 * 1024;
const STACK_CHUNK: usize = 8 * 1024 * 1024;

impl<'p> Wd<'p> {
    pub fn new(p: &'p Program) -> Self {
        Wd::with_config(p, WdConfig::default())
    }

    pub fn with_config(p: &'p Program, cfg: WdConfig) -> Self {
        Wd {
            p,
            cfg,
            depth: Cell::new(0),
            trace: RefCell::new(Vec::new()),
            memo: RefCell::new(HashMap::new()),
            memo_heap: RefCell::new(None),
        }
    }

    pub fn program(&self) -> &'p Program {
        self.p
    }

    pub fn take_trace(&self) -> Vec<EntryEvent> {
        std::mem::take(&mut self.trace.borrow_mut())
    }

    /// `DF E e s` at the given layer. Monitor failures inside DFC evaluation
    /// surface as errors.
    pub fn df(
        &self,
        layer: Layer,
        cur: &ReducedEntry,
        e: &Expr,
        s: &State,
    ) -> Result<bool, WdError> {
        Ok(match e {
            Expr::Var(_) | Expr::Lit(_) => true,
            Expr::Field(r, _) | Expr::Unary(_, r) | Expr::IsClass(r, _) | Expr::IsTrait(r, _) => {
                self.df(layer, cur, r, s)?
            }
            Expr::Binary(_, a, b) => self.df(layer, cur, a, s)? && self.df(layer, cur, b, s)?,
            Expr::Ite(b, t, f) => {
                let g = if call_free(b) {
                    eval_alpha(self.p, b, s)
                        .map(|v| v.as_bool())
                        .unwrap_or(false)
                } else {
                    if !self.df(layer, cur, b, s)? {
                        return Ok(false);
                    }
                    self.eval(layer, cur, b, s, &mut None)?.as_bool()
                };
                if g {
                    self.df(layer, cur, t, s)?
                } else {
                    self.df(layer, cur, f, s)?
                }
            }
            Expr::Call {
                recv,
                func,
                owner,
                arg,
            } => self.df_call(layer, cur, recv, func, owner, arg.as_deref(), s)?,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn df_call(
        &self,
        layer: Layer,
        cur: &ReducedEntry,
        recv: &Expr,
        func: &Name,
        owner: &Owner,
        arg: Option<&Expr>,
        s: &State,
    ) -> Result<bool, WdError> {
        if !call_free(recv) || arg.is_some_and(|a| !call_free(a)) {
            return Ok(false);
        }
        let Ok(v) = eval_alpha(self.p, recv, s) else {
            return Ok(false);
        };
        let class_ok = match owner {
            Owner::Trait(t) => is_trait(&v, t, self.p, s),
            Owner::Class(c) => is_class(&v, c, self.p, s),
        };
        if !class_ok {
            return Ok(false);
        }
        let Some(decl) = self.p.func(owner, func) else {
            return Ok(false);
        };
        if layer == Layer::One && decl.kind != FuncKind::One {
            return Ok(false);
        }
        let Some(ens) = self.entry_state(&v, decl.param.as_ref().map(|(x, _)| x), arg, s) else {
            return Ok(false);
        };
        let head = EntryHead {
            owner: owner.clone(),
            member: func.clone(),
        };
        let Ok(callee) = reduce(self.p, MemberKind::Function, &head, &ens) else {
            return Ok(false);
        };
        if !order_holds(&self.p.function_order(), &callee, cur) {
            return Ok(false);
        }
        let dfc = &decl.requires;
        if call_free(dfc) {
            return Ok(eval_alpha(self.p, dfc, &ens).is_ok_and(|v| v.as_bool()));
        }
        if layer == Layer::One {
            return Ok(false);
        }
        self.holds(Layer::One, &ReducedEntry::top(), dfc, &ens)
    }

    /// `s[!e1/this; e2/x!]`, or `None` when the argument shape does not fit.
    fn entry_state(
        &self,
        recv: &Value,
        param: Option<&Name>,
        arg: Option<&Expr>,
        s: &State,
    ) -> Option<State> {
        let mut bindings = vec![(Name::from(reserved::THIS), recv.clone())];
        match (param, arg) {
            (Some(x), Some(a)) => bindings.push((x.clone(), eval_alpha(self.p, a, s).ok()?)),
            (Some(_), None) | (None, None) => {}
            (None, Some(_)) => return None,
        }
        s.trunc_subst(&bindings).ok()
    }

    /// `⟦e⟧A E s`, accumulating `⦃e⦄A E s` into `fp` when given.
    /// Callers must have established `DF E e s`.
    pub fn eval(
        &self,
        layer: Layer,
        cur: &ReducedEntry,
        e: &Expr,
        s: &State,
        fp: &mut Option<&mut BTreeSet<Loc>>,
    ) -> Result<Value, WdError> {
        Ok(match e {
            Expr::Var(x) => s.lookup(x),
            Expr::Lit(l) => lit_value(l),
            Expr::Field(r, f) => {
                let ptr = self.eval(layer, cur, r, s, fp)?.as_ptr();
                let v = s.heap_get(&ptr, f);
                if let Some(out) = fp.as_deref_mut() {
                    out.insert((ptr, f.clone()));
                }
                v
            }
            Expr::Ite(b, t, f) => {
                if self.eval(layer, cur, b, s, fp)?.as_bool() {
                    self.eval(layer, cur, t, s, fp)?
                } else {
                    self.eval(layer, cur, f, s, fp)?
                }
            }
            Expr::Unary(op, a) => unop(*op, &self.eval(layer, cur, a, s, fp)?),
            Expr::Binary(op, a, b) => {
                let va = self.eval(layer, cur, a, s, fp)?;
                let vb = self.eval(layer, cur, b, s, fp)?;
                binop(*op, &va, &vb)
            }
            Expr::IsClass(a, c) => {
                Value::Bool(is_class(&self.eval(layer, cur, a, s, fp)?, c, self.p, s))
            }
            Expr::IsTrait(a, t) => {
                Value::Bool(is_trait(&self.eval(layer, cur, a, s, fp)?, t, self.p, s))
            }
            Expr::Call {
                recv, func, arg, ..
            } => {
                let v = self.eval(layer, cur, recv, s, fp)?;
                let av = match arg {
                    Some(a) => Some(self.eval(layer, cur, a, s, fp)?),
                    None => None,
                };
                self.eval_call(cur, &v, func, av, s, fp)?
            }
        })
    }

    fn eval_call(
        &self,
        cur: &ReducedEntry,
        recv: &Value,
        func: &Name,
        arg: Option<Value>,
        s: &State,
        fp: &mut Option<&mut BTreeSet<Loc>>,
    ) -> Result<Value, WdError> {
        let ptr = recv.as_ptr();
        let class = s.class_of(&ptr).clone();
        let owner = Owner::Class(class.clone());
        let head = EntryHead {
            owner: owner.clone(),
            member: func.clone(),
        };
        let decl = self.p.func(&owner, func);
        let Some((decl, body)) = decl.and_then(|d| d.body.as_ref().map(|b| (d, b))) else {
            return Err(monitor(
                WdMonitor::MissingBody,
                format!("no body for {head}"),
            ));
        };
        let arg_v = arg.clone();
        let mut bindings = vec![(Name::from(reserved::THIS), recv.clone())];
        if let (Some((x, _)), Some(v)) = (&decl.param, arg) {
            bindings.push((x.clone(), v));
        }
        let ens = s
            .trunc_subst(&bindings)
            .map_err(|m| monitor(WdMonitor::BodyNotWellDefined, m))?;
        let callee = reduce(self.p, MemberKind::Function, &head, &ens)
            .map_err(|m| monitor(WdMonitor::NonDecreasingCall, m.to_string()))?;
        if !order_holds(&self.p.function_order(), &callee, cur) {
            return Err(monitor(
                WdMonitor::NonDecreasingCall,
                format!(
                    "{head} at measure {:?} is not below {} at {:?}",
                    callee.value, cur.head, cur.value
                ),
            ));
        }
        let key = (fp.is_none() && !self.cfg.trace).then(|| (head.clone(), recv.clone(), arg_v.clone()));
        if let Some(k) = &key {
            let mut at = self.memo_heap.borrow_mut();
            if at.as_ref().is_some_and(|h| h.same_heap(s)) {
                if let Some(v) = self.memo.borrow().get(k) {
                    return Ok(v.clone());
                }
            } else {
                *at = Some(s.clone());
                self.memo.borrow_mut().clear();
            }
        }
        let depth = self.depth.get() + 1;
        if depth > self.cfg.depth_limit {
            return Err(monitor(
                WdMonitor::DivergenceSuspected,
                format!("call depth exceeded {}", self.cfg.depth_limit),
            ));
        }
        if self.cfg.trace {
            self.trace.borrow_mut().push(EntryEvent {
                head: head.clone(),
                measure: callee.value.to_json(),
                depth,
            });
        }
        let layer = Layer::of_kind(decl.kind);
        self.depth.set(depth);
        let out = stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || {
            if self.cfg.recheck_df && !self.df(layer, &callee, body, &ens)? {
                return Err(monitor(
                    WdMonitor::BodyNotWellDefined,
                    format!("body of {head} is not well-defined at its entry"),
                ));
            }
            self.eval(layer, &callee, body, &ens, fp)
        });
        self.depth.set(depth - 1);
        if let (Some(k), Ok(v), false) = (key, &out, s.probe_missed()) {
            self.memo.borrow_mut().insert(k, v.clone());
        }
        out
    }

    /// `DF E e s && ↓b ⟦e⟧A E s`
    pub fn holds(
        &self,
        layer: Layer,
        cur: &ReducedEntry,
        e: &Expr,
        s: &State,
    ) -> Result<bool, WdError> {
        if !self.df(layer, cur, e, s)? {
            return Ok(false);
        }
        Ok(self.eval(layer, cur, e, s, &mut None)?.as_bool())
    }

    /// Top-level `⟦e⟧A s`, checking `DF` first.
    pub fn value(&self, layer: Layer, e: &Expr, s: &State) -> Result<Value, WdError> {
        let top = ReducedEntry::top();
        if !self.df(layer, &top, e, s)? {
            return Err(WdError::NotWellDefined);
        }
        self.eval(layer, &top, e, s, &mut None)
    }

    /// Top-level value and footprint.
    pub fn value_fp(
        &self,
        layer: Layer,
        e: &Expr,
        s: &State,
    ) -> Result<(Value, BTreeSet<Loc>), WdError> {
        let top = ReducedEntry::top();
        if !self.df(layer, &top, e, s)? {
            return Err(WdError::NotWellDefined);
        }
        let mut out = BTreeSet::new();
        let v = self.eval(layer, &top, e, s, &mut Some(&mut out))?;
        Ok((v, out))
    }
}

fn monitor(kind: WdMonitor, detail: String) -> WdError {
    WdError::Monitor { kind, detail }
}

/// `DF (Object;main) e s`
pub fn df(p: &Program, e: &Expr, s: &State) -> bool {
    Wd::new(p)
        .df(Layer::One, &ReducedEntry::top(), e, s)
        .unwrap_or(false)
}

/// `DF₂ (Object;main) e s`
pub fn df2(p: &Program, e: &Expr, s: &State) -> bool {
    Wd::new(p)
        .df(Layer::Two, &ReducedEntry::top(), e, s)
        .unwrap_or(false)
}

/// `DF E e s` at an explicit entry.
pub fn df_at(p: &Program, layer: Layer, entry: (&EntryHead, &State), e: &Expr, s: &State) -> bool {
    let kind = MemberKind::Function;
    let Ok(cur) = reduce(p, kind, entry.0, entry.1) else {
        return false;
    };
    Wd::new(p).df(layer, &cur, e, s).unwrap_or(false)
}

/// `⟦e⟧A s`
pub fn eval_a(p: &Program, e: &Expr, s: &State) -> Result<Value, WdError> {
    Wd::new(p).value(Layer::One, e, s)
}

/// `⟦e⟧𝐀 s`
pub fn eval_a2(p: &Program, e: &Expr, s: &State) -> Result<Value, WdError> {
    Wd::new(p).value(Layer::Two, e, s)
}

/// `⦃e⦄A s`
pub fn fp_a(p: &Program, e: &Expr, s: &State) -> Result<BTreeSet<Loc>, WdError> {
    Wd::new(p).value_fp(Layer::One, e, s).map(|(_, f)| f)
}

/// `⦃e⦄𝐀 s`
pub fn fp_a2(p: &Program, e: &Expr, s: &State) -> Result<BTreeSet<Loc>, WdError> {
    Wd::new(p).value_fp(Layer::Two, e, s).map(|(_, f)| f)
}

/// `⟦e⟧B s`: well-defined and true.
pub fn eval_b(p: &Program, e: &Expr, s: &State) -> bool {
    Wd::new(p)
        .holds(Layer::One, &ReducedEntry::top(), e, s)
        .unwrap_or(false)
}

/// `⟦e⟧𝐁 s`
pub fn eval_b2(p: &Program, e: &Expr, s: &State) -> bool {
    Wd::new(p)
        .holds(Layer::Two, &ReducedEntry::top(), e, s)
        .unwrap_or(false)
}

/// `⟦e⟧𝐁 s`, surfacing monitor violations instead of folding them to false.
pub fn eval_b2_checked(p: &Program, e: &Expr, s: &State) -> Result<bool, WdError> {
    Wd::new(p).holds(Layer::Two, &ReducedEntry::top(), e, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Ptr;
    use crate::syntax::parser::{parse_expr_with, ParseCtx};
    use crate::syntax::{check_wellformed, parse_program};

    fn pizza() -> Program {
        parse_program(include_str!("../corpus/pizza.xrl")).unwrap()
    }

    fn ex(p: &Program, src: &str) -> Expr {
        parse_expr_with(src, &ParseCtx::of_program(p)).unwrap()
    }

    /// Head `a_k` over toppings down to a Crust at address 1.
    fn chain(k: u64, topping: &str) -> State {
        let mut s = State::new();
        let crust = Ptr::new(1, "Crust");
        s.add_alloc(crust.clone());
        let mut fp: crate::state::Region = [crust.clone()].into_iter().collect();
        s.heap_update_mut(&crust, "fp", Value::Region(fp.clone()));
        let mut below = crust;
        for i in 0..k {
            let t = Ptr::new(i + 2, topping);
            s.add_alloc(t.clone());
            fp.insert(t.clone());
            s.heap_update_mut(&t, "fp", Value::Region(fp.clone()));
            s.heap_update_mut(&t, "nt", Value::Ptr(below));
            below = t;
        }
        s.update("this", Value::Ptr(below))
    }

    #[test]
    fn corpus_is_wellformed() {
        assert_eq!(check_wellformed(&pizza()), vec![]);
    }

    #[test]
    fn price_counts_toppings() {
        let p = pizza();
        let e = ex(&p, "this.price@Pizza()");
        for k in 0..8 {
            assert_eq!(eval_a2(&p, &e, &chain(k, "Anchovy")), Ok(Value::Nat(k + 1)));
        }
        assert_eq!(
            eval_a(&p, &e, &chain(1, "Anchovy")),
            Err(WdError::NotWellDefined)
        );
    }

    #[test]
    fn valid_chain_and_null() {
        let p = pizza();
        let e = ex(&p, "this.valid@Pizza()");
        assert!(eval_b(&p, &e, &chain(3, "Cheese")));
        assert!(!eval_b(&p, &e, &State::new().update("this", Value::null())));
        assert!(eval_b(&p, &ex(&p, "true"), &State::new()));
    }

    #[test]
    fn ite_guard_selects_branch() {
        let p = pizza();
        let s = State::new().update("this", Value::null());
        assert!(df(
            &p,
            &ex(&p, "if false then this.valid@Pizza() else 1"),
            &s
        ));
        assert!(!df(
            &p,
            &ex(&p, "if true then this.valid@Pizza() else 1"),
            &s
        ));
    }

    #[test]
    fn recursive_call_df_at_entry() {
        let p = pizza();
        let s = chain(1, "Anchovy");
        let head = EntryHead::new(Owner::Class("Anchovy".into()), "valid");
        let call = ex(&p, "this.nt.valid@Pizza()");
        assert!(df_at(&p, Layer::One, (&head, &s), &call, &s));
        // Self call at equal measure does not decrease.
        assert!(!df_at(
            &p,
            Layer::One,
            (&head, &s),
            &ex(&p, "this.valid@Pizza()"),
            &s
        ));
    }

    #[test]
    fn footprints() {
        let p = pizza();
        let s = chain(0, "Anchovy");
        let c0 = Ptr::new(1, "Crust");
        assert_eq!(
            fp_a(&p, &ex(&p, "this.valid@Pizza()"), &s).unwrap(),
            [(c0, Name::from("fp"))].into_iter().collect()
        );
        assert!(fp_a(&p, &ex(&p, "x"), &s).unwrap().is_empty());
    }

    #[test]
    fn trace_records_decreasing_entries() {
        let p = pizza();
        let wd = Wd::with_config(
            &p,
            WdConfig {
                trace: true,
                ..Default::default()
            },
        );
        wd.value(
            Layer::Two,
            &ex(&p, "this.price@Pizza()"),
            &chain(4, "Cheese"),
        )
        .unwrap();
        let prices: Vec<usize> = wd
            .take_trace()
            .iter()
            .filter(|e| e.head.member == *"price")
            .map(|e| e.measure.as_array().unwrap().len())
            .collect();
        assert_eq!(prices, vec![5, 4, 3, 2, 1]);
    }

    #[test]
    fn depth_watchdog() {
        let p = pizza();
        let wd = Wd::with_config(
            &p,
            WdConfig {
                depth_limit: 3,
                ..Default::default()
            },
        );
        let r = wd.value(
            Layer::One,
            &ex(&p, "this.valid@Pizza()"),
            &chain(6, "Anchovy"),
        );
        assert!(matches!(
            r,
            Err(WdError::Monitor {
                kind: WdMonitor::DivergenceSuspected,
                ..
            })
        ));
    }
}
