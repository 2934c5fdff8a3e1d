//! Derivation-guided interpreters with runtime monitors, an independent
//! big-step oracle and differential testing between them.

pub mod diff;
pub mod gen;
pub mod oracle;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value as Json};

use crate::callfree::eval_alpha;
use crate::effects::{locs, mod_vars};
use crate::entry::{order_holds, reduce, EntryHead, MemberKind, ReducedEntry};
use crate::logic::check::method_pre;
use crate::logic::{CheckOutcome, Checked, Info, Rule};
use crate::name::{reserved, Name};
use crate::state::{eq_except, State, Value};
use crate::syntax::{Cmd, Expr, Owner, Program};
use crate::wd::{Layer, Wd, WdConfig};

pub use oracle::{oracle_run, OracleOutcome};

/// Which runtime checks are active. The default enables all of them.
#[derive(Clone, Copy, Debug)]
pub struct Monitors {
    pub pre_post: bool,
    pub frame: bool,
    pub mse: bool,
    pub measure: bool,
    pub lex: bool,
    /// Nesting of interpreted nodes before reporting divergence.
    pub depth_limit: usize,
}

impl Default for Monitors {
    fn default() -> Self {
        Monitors {
            pre_post: true,
            frame: true,
            mse: true,
            measure: true,
            lex: true,
            depth_limit: 100_000,
        }
    }
}

impl Monitors {
    /// Everything off except the depth watchdog.
    pub fn none() -> Self {
        Monitors {
            pre_post: false,
            frame: false,
            mse: false,
            measure: false,
            lex: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    Pre,
    Post,
    Frame,
    FrameR,
    Mse,
    Measure,
    Lex,
    CallPre,
    CallPost,
    NotWellDefined,
    NullDispatch,
    MissingCertificate,
    DivergenceSuspected,
}

impl ViolationKind {
    pub fn code(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// `Class;method/node-path`
    pub path: String,
    pub detail: String,
    pub snapshot: State,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Ok(State),
    Timeout,
    MonitorViolation(Violation),
}

impl RunOutcome {
    pub fn ok(&self) -> Option<&State> {
        match self {
            RunOutcome::Ok(s) => Some(s),
            _ => None,
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            RunOutcome::MonitorViolation(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            RunOutcome::Ok(s) => json!({"outcome": "ok", "state": s.to_json()}),
            RunOutcome::Timeout => json!({"outcome": "timeout"}),
            RunOutcome::MonitorViolation(v) => json!({
                "outcome": "monitor_violation",
                "kind": v.kind,
                "node": v.path,
                "detail": v.detail,
                "state": v.snapshot.to_json(),
            }),
        }
    }
}

/// One interpreted node.
#[derive(Clone, Debug)]
pub struct TraceEvent {
    pub node: String,
    pub rule: &'static str,
    pub entry_head: EntryHead,
    /// Measure of the current entry; absent in partial derivations.
    pub reduced_measure: Option<Value>,
    pub fuel: Option<u64>,
    pub monitors: Vec<(&'static str, bool)>,
}

impl TraceEvent {
    pub fn to_json(&self) -> Json {
        let mut m = Map::new();
        m.insert("node".into(), json!(self.node));
        m.insert("rule".into(), json!(self.rule));
        m.insert("entryHead".into(), json!(self.entry_head.to_string()));
        m.insert(
            "reducedMeasure".into(),
            self.reduced_measure
                .as_ref()
                .map_or(Json::Null, Value::to_json),
        );
        if let Some(f) = self.fuel {
            m.insert("fuel".into(), json!(f));
        }
        let mons: Map<String, Json> = self
            .monitors
            .iter()
            .map(|(k, ok)| (k.to_string(), json!(if *ok { "pass" } else { "fail" })))
            .collect();
        m.insert("monitors".into(), Json::Object(mons));
        Json::Object(m)
    }

    /// Whether this event starts a method body.
    pub fn is_entry(&self) -> bool {
        !self.node.contains('.')
    }
}

/// Deliberate interpreter defects for fault-injection tests.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Calls return the callee's stack instead of restoring the caller's.
    SkipStackRestore,
}

#[derive(Clone)]
enum Mode {
    Total(ReducedEntry),
    Partial(u64),
}

enum Stop {
    Timeout,
    Violation(Violation),
}

type Step = Result<State, Stop>;

const RED_ZONE: usize = 256 * 1024;
const STACK_CHUNK: usize = 8 * 1024 * 1024;

/// Interprets checked derivations. Calls dispatch through `certs` on the
/// dynamic class of the receiver.
pub struct Interp<'p> {
    p: &'p Program,
    certs: &'p CheckOutcome,
    mon: Monitors,
    wd: Wd<'p>,
    depth: usize,
    trace: Option<Vec<TraceEvent>>,
    fault: Option<Fault>,
}

impl<'p> Interp<'p> {
    pub fn new(p: &'p Program, certs: &'p CheckOutcome, mon: Monitors) -> Self {
        Interp {
            p,
            certs,
            mon,
            wd: Wd::with_config(p, WdConfig::default()),
            depth: 0,
            trace: None,
            fault: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, f: Fault) -> Self {
        self.fault = Some(f);
        self
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// `interT`: runs a total derivation from `s`. There is no fuel.
    pub fn inter_t(&mut self, d: &Arc<Checked>, s: State) -> RunOutcome {
        if !d.total {
            return self.reject(d, &s, ViolationKind::Pre, "derivation is not total");
        }
        let entry = match reduce(self.p, MemberKind::Method, &d.entry, &s) {
            Ok(e) => e,
            Err(e) => return self.reject(d, &s, ViolationKind::Mse, &e.to_string()),
        };
        self.depth = 0;
        finish(self.run(d, s, &Mode::Total(entry), None))
    }

    /// `interP`: runs a partial derivation; each partial call consumes one
    /// unit of fuel.
    pub fn inter_p(&mut self, d: &Arc<Checked>, fuel: u64, s: State) -> RunOutcome {
        if d.total {
            return self.reject(d, &s, ViolationKind::Pre, "derivation is not partial");
        }
        self.depth = 0;
        finish(self.run(d, s, &Mode::Partial(fuel), None))
    }

    fn reject(&self, d: &Checked, s: &State, kind: ViolationKind, detail: &str) -> RunOutcome {
        RunOutcome::MonitorViolation(violation(d, s, kind, detail.to_string()))
    }

    fn holds(&self, e: &Expr, s: &State) -> Result<bool, String> {
        self.wd
            .holds(Layer::Two, &ReducedEntry::top(), e, s)
            .map_err(|e| e.to_string())
    }

    fn run(
        &mut self,
        n: &Arc<Checked>,
        s: State,
        mode: &Mode,
        parent: Option<(&ReducedEntry, usize)>,
    ) -> Step {
        self.depth += 1;
        let out = if self.depth > self.mon.depth_limit {
            Err(Stop::Violation(violation(
                n,
                &s,
                ViolationKind::DivergenceSuspected,
                format!("interpretation depth exceeded {}", self.mon.depth_limit),
            )))
        } else {
            stacker::maybe_grow(RED_ZONE, STACK_CHUNK, || self.node(n, s, mode, parent))
        };
        self.depth -= 1;
        out
    }

    fn node(
        &mut self,
        n: &Arc<Checked>,
        s_in: State,
        mode: &Mode,
        parent: Option<(&ReducedEntry, usize)>,
    ) -> Step {
        let ev = self.trace.as_mut().map(|t| {
            t.push(TraceEvent {
                node: format!("{}/{}", n.entry, n.path),
                rule: n.rule.name(),
                entry_head: n.entry.clone(),
                reduced_measure: match mode {
                    Mode::Total(e) => Some(e.value.clone()),
                    Mode::Partial(_) => None,
                },
                fuel: match mode {
                    Mode::Total(_) => None,
                    Mode::Partial(f) => Some(*f),
                },
                monitors: Vec::new(),
            });
            t.len() - 1
        });
        let mut checks = Checks {
            n,
            ev,
            marks: Vec::new(),
        };
        let out = self.node_checked(n, s_in, mode, parent, &mut checks);
        if let (Some(i), Some(t)) = (checks.ev, self.trace.as_mut()) {
            t[i].monitors = checks.marks;
        }
        out
    }

    fn node_checked(
        &mut self,
        n: &Arc<Checked>,
        s_in: State,
        mode: &Mode,
        parent: Option<(&ReducedEntry, usize)>,
        ck: &mut Checks<'_>,
    ) -> Step {
        if let (Mode::Total(entry), Some((pe, psize)), true) = (mode, parent, self.mon.lex) {
            let spec = self.p.method_order();
            let down = order_holds(&spec, entry, pe) || (entry == pe && n.size < psize);
            ck.mark("lex", down, &s_in, ViolationKind::Lex, || {
                format!(
                    "({}, {:?}, size {}) is not below ({}, {:?}, size {psize})",
                    entry.head, entry.value, n.size, pe.head, pe.value
                )
            })?;
        }
        if let (Mode::Total(entry), true) = (mode, self.mon.mse) {
            let v = s_in.get(reserved::MSE);
            ck.mark("mse", v == entry.value, &s_in, ViolationKind::Mse, || {
                format!("mse is {v:?}, entry measure is {:?}", entry.value)
            })?;
        }
        // Allocation snapshots are ghost variables: bound on the way in.
        let ghost = match &n.info {
            Info::Seq { snap: Some(r) } if !s_in.is_bound(r) => Some(r.clone()),
            _ => None,
        };
        let s = match &ghost {
            Some(r) => s_in.update(r, s_in.lookup(reserved::ALLOC)),
            None => s_in.clone(),
        };
        if self.mon.pre_post {
            let r = self.holds(&n.j.pre, &s);
            ck.mark_res("pre", r, &s, ViolationKind::Pre)?;
        }
        let mut out = self.exec(n, s, mode, ck)?;
        if let Some(r) = &ghost {
            out.remove_var(r);
        }
        if let (Info::Frame { r }, true) = (&n.info, self.mon.pre_post) {
            let res = self.holds(r, &out);
            ck.mark_res("frameR", res, &out, ViolationKind::FrameR)?;
        }
        if self.mon.pre_post {
            let kind = if matches!(n.info, Info::Call { .. }) {
                ViolationKind::CallPost
            } else {
                ViolationKind::Post
            };
            let r = self.holds(&n.j.post, &out);
            ck.mark_res("post", r, &out, kind)?;
        }
        if self.mon.frame {
            let mv = mod_vars(&n.j.cmd);
            let grow = mv.contains(reserved::ALLOC);
            let vars: BTreeSet<Name> = mv.into_iter().filter(|x| x != reserved::ALLOC).collect();
            let ls = locs(self.p, &n.j.eps, &s_in);
            let res = eq_except(&s_in, &out, &vars, &ls, grow);
            ck.mark_res("frame", res.map(|_| true), &out, ViolationKind::Frame)?;
        }
        Ok(out)
    }

    fn exec(&mut self, n: &Arc<Checked>, s: State, mode: &Mode, ck: &mut Checks<'_>) -> Step {
        let child = |i: usize| n.children[i].clone();
        let here = match mode {
            Mode::Total(e) => Some((e.clone(), n.size)),
            Mode::Partial(_) => None,
        };
        match n.rule {
            Rule::Seq => {
                let t = self.run(&child(0), s, mode, down(&here))?;
                self.run(&child(1), t, mode, down(&here))
            }
            Rule::If => {
                let Cmd::If(g, ..) = &n.j.cmd else {
                    unreachable!("If node without a conditional")
                };
                let b = eval_alpha(self.p, g, &s).map(|v| v.as_bool());
                let b = ck.value(b.map_err(|e| e.to_string()), &s, ViolationKind::NotWellDefined)?;
                self.run(&child(if b { 0 } else { 1 }), s, mode, down(&here))
            }
            Rule::Frame | Rule::Conseq => self.run(&child(0), s, mode, down(&here)),
            Rule::Cast => {
                let Mode::Partial(_) = mode else {
                    unreachable!("Cast inside a total derivation")
                };
                let k = child(0);
                let entry = reduce(self.p, MemberKind::Method, &k.entry, &s)
                    .map_err(|e| e.to_string());
                let entry = ck.value(entry, &s, ViolationKind::Mse)?;
                let ins = s.update(reserved::MSE, entry.value.clone());
                let outs = self.run(&k, ins, &Mode::Total(entry), None)?;
                let mut out = outs;
                if s.is_bound(reserved::MSE) {
                    out.update_mut(reserved::MSE, s.get(reserved::MSE));
                } else {
                    out.remove_var(reserved::MSE);
                }
                Ok(out)
            }
            Rule::CallT | Rule::CallC | Rule::CallP => self.call(n, s, mode, ck),
            _ => self.atomic(&n.j.cmd, s, ck),
        }
    }

    fn atomic(&self, c: &Cmd, s: State, ck: &mut Checks<'_>) -> Step {
        match c {
            Cmd::Skip => Ok(s),
            Cmd::Assign(x, e) => {
                let v = self.wd.value(Layer::Two, e, &s).map_err(|e| e.to_string());
                let v = ck.value(v, &s, ViolationKind::NotWellDefined)?;
                Ok(s.update(x, v))
            }
            Cmd::Write(x, f, e) => {
                let ptr = s.get(x).as_ptr();
                let v = self.wd.value(Layer::Two, e, &s).map_err(|e| e.to_string());
                let v = ck.value(v, &s, ViolationKind::NotWellDefined)?;
                if ptr.is_null() {
                    return Err(ck.fail(&s, ViolationKind::NullDispatch, format!("{x} is null")));
                }
                Ok(s.heap_update(&ptr, f, v))
            }
            Cmd::Alloc(x, c) => {
                let (ptr, t) = s.allocate(c, []);
                Ok(t.update(x, Value::Ptr(ptr)))
            }
            other => unreachable!("compound command {other:?} at a leaf rule"),
        }
    }

    fn call(&mut self, n: &Arc<Checked>, s: State, mode: &Mode, ck: &mut Checks<'_>) -> Step {
        let Cmd::Call {
            lhs,
            recv,
            method,
            owner,
            args,
        } = &n.j.cmd
        else {
            unreachable!("call rule without a call command")
        };
        let y = s.get(recv);
        let ptr = y.as_ptr();
        if ptr.is_null() {
            return Err(ck.fail(&s, ViolationKind::NullDispatch, format!("{recv} is null")));
        }
        let class = ptr.class.clone();
        if !self.p.inhabits(&class, owner) {
            return Err(ck.fail(
                &s,
                ViolationKind::CallPre,
                format!("receiver class {class} does not inhabit {owner}"),
            ));
        }
        let p = self.p;
        let target = Owner::Class(class.clone());
        let decl = p.method(&target, method);
        let certs = self.certs.certs.get(&(class.clone(), method.clone()));
        let total = matches!(mode, Mode::Total(_));
        let root = certs.and_then(|c| if total { c.total.clone() } else { c.partial.clone() });
        let (Some(decl), Some(root)) = (decl, root) else {
            let which = if total { "total" } else { "partial" };
            return Err(ck.fail(
                &s,
                ViolationKind::MissingCertificate,
                format!("no {which} derivation for {class}.{method}"),
            ));
        };
        let mut bind = vec![(Name::from(reserved::THIS), y.clone())];
        for ((a, _), z) in decl.params.iter().zip(args) {
            bind.push((a.clone(), s.get(z)));
        }
        let ens = s.trunc_subst(&bind).map_err(|m| {
            ck.fail(&s, ViolationKind::CallPre, m)
        })?;
        let xs = match mode {
            Mode::Total(caller) => {
                let head = EntryHead::new(target, method);
                let callee = reduce(p, MemberKind::Method, &head, &ens).map_err(|e| e.to_string());
                let callee = ck.value(callee, &s, ViolationKind::Measure)?;
                let ens = ens.update(reserved::MSE, callee.value.clone());
                if self.mon.measure {
                    let ok = order_holds(&p.method_order(), &callee, caller);
                    ck.mark("measure", ok, &ens, ViolationKind::Measure, || {
                        format!(
                            "{} at {:?} is not below {} at {:?}",
                            callee.head, callee.value, caller.head, caller.value
                        )
                    })?;
                }
                if self.mon.pre_post {
                    let r = self.holds(&method_pre(&class, decl, true), &ens);
                    ck.mark_res("callPre", r, &ens, ViolationKind::CallPre)?;
                }
                self.run(&root, ens, &Mode::Total(callee), Some((caller, n.size)))?
            }
            Mode::Partial(fuel) => {
                if *fuel == 0 {
                    return Err(Stop::Timeout);
                }
                if self.mon.pre_post {
                    let r = self.holds(&method_pre(&class, decl, false), &ens);
                    ck.mark_res("callPre", r, &ens, ViolationKind::CallPre)?;
                }
                self.run(&root, ens, &Mode::Partial(fuel - 1), None)?
            }
        };
        let ret = xs.get(&decl.ret.0);
        let out = match self.fault {
            Some(Fault::SkipStackRestore) => xs,
            None => xs.with_stack_of(&s),
        };
        Ok(out.update(lhs, ret))
    }
}

fn violation(n: &Checked, s: &State, kind: ViolationKind, detail: String) -> Violation {
    Violation {
        kind,
        path: format!("{}/{}", n.entry, n.path),
        detail,
        snapshot: s.clone(),
    }
}

fn down(h: &Option<(ReducedEntry, usize)>) -> Option<(&ReducedEntry, usize)> {
    h.as_ref().map(|(e, z)| (e, *z))
}

fn finish(r: Step) -> RunOutcome {
    match r {
        Ok(s) => RunOutcome::Ok(s),
        Err(Stop::Timeout) => RunOutcome::Timeout,
        Err(Stop::Violation(v)) => RunOutcome::MonitorViolation(v),
    }
}

/// Monitor bookkeeping for one node.
struct Checks<'a> {
    n: &'a Checked,
    ev: Option<usize>,
    marks: Vec<(&'static str, bool)>,
}

impl Checks<'_> {
    fn fail(&self, s: &State, kind: ViolationKind, detail: String) -> Stop {
        Stop::Violation(violation(self.n, s, kind, detail))
    }

    fn mark(
        &mut self,
        name: &'static str,
        ok: bool,
        s: &State,
        kind: ViolationKind,
        detail: impl FnOnce() -> String,
    ) -> Result<(), Stop> {
        self.marks.push((name, ok));
        if ok {
            Ok(())
        } else {
            Err(self.fail(s, kind, detail()))
        }
    }

    fn mark_res(
        &mut self,
        name: &'static str,
        r: Result<bool, String>,
        s: &State,
        kind: ViolationKind,
    ) -> Result<(), Stop> {
        let expr = || match kind {
            ViolationKind::Pre => "precondition",
            ViolationKind::FrameR => "framed assertion",
            ViolationKind::CallPre => "callee precondition",
            _ => "postcondition",
        };
        match r {
            Ok(true) => self.mark(name, true, s, kind, String::new),
            Ok(false) => self.mark(name, false, s, kind, || format!("{} does not hold", expr())),
            Err(m) => self.mark(name, false, s, kind, || m),
        }
    }

    fn value<T>(&self, r: Result<T, String>, s: &State, kind: ViolationKind) -> Result<T, Stop> {
        r.map_err(|m| self.fail(s, kind, m))
    }
}

/// Binds `mse` to the measure of a total method entry when it is unbound.
pub fn with_entry_measure(p: &Program, head: &EntryHead, s: State) -> State {
    if s.is_bound(reserved::MSE) {
        return s;
    }
    match reduce(p, MemberKind::Method, head, &s) {
        Ok(e) => s.update(reserved::MSE, e.value),
        Err(_) => s,
    }
}
