//! Checking of simple-dialect certificates. Side conditions on syntax are
//! decided here; implications become obligations decided over small naturals.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use super::{parse_scmd, Proc, SCmd, SimpleProgram};
use crate::callfree::holds_alpha;
use crate::logic::cert::SCHEMA;
use crate::name::{reserved, Name};
use crate::obligation::{Mode, Status, Verdict};
use crate::state::{State, Value};
use crate::syntax::{
    and_all, call_free, conjuncts, fv, parse_expr, print_expr, same_conjuncts, subst, BinOp,
    Diagnostic, Expr, Program,
};

pub const DIALECT: &str = "simple";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimpleRule {
    Skip,
    Asn,
    Seq,
    If,
    Cal,
    Conseq,
    Cast,
}

impl SimpleRule {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Skip" => SimpleRule::Skip,
            "Asn" => SimpleRule::Asn,
            "Seq" => SimpleRule::Seq,
            "If" => SimpleRule::If,
            "Cal" => SimpleRule::Cal,
            "Conseq" => SimpleRule::Conseq,
            "Cast" => SimpleRule::Cast,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SimpleRule::Skip => "Skip",
            SimpleRule::Asn => "Asn",
            SimpleRule::Seq => "Seq",
            SimpleRule::If => "If",
            SimpleRule::Cal => "Cal",
            SimpleRule::Conseq => "Conseq",
            SimpleRule::Cast => "Cast",
        }
    }
}

/// A checked node: `q;t ▷ [P] c [Q]` when total, `{P} c {Q}` otherwise.
#[derive(Clone, Debug)]
pub struct SimpleNode {
    pub rule: SimpleRule,
    pub path: String,
    pub total: bool,
    /// The procedure whose entry indexes this node.
    pub entry: Name,
    pub pre: Expr,
    pub cmd: SCmd,
    pub post: Expr,
    pub children: Vec<Arc<SimpleNode>>,
    pub size: usize,
}

/// `P ⇒ Q` over every assignment of small values to the free variables.
#[derive(Clone, Debug)]
pub struct SimpleObligation {
    pub id: String,
    pub pre: Expr,
    pub post: Expr,
}

#[derive(Clone, Debug, Default)]
pub struct SimpleChecked {
    pub total: BTreeMap<Name, Arc<SimpleNode>>,
    pub partial: BTreeMap<Name, Arc<SimpleNode>>,
    pub obligations: Vec<SimpleObligation>,
    pub diags: Vec<Diagnostic>,
    pub verdicts: Vec<Verdict>,
}

impl SimpleChecked {
    pub fn ok(&self) -> bool {
        self.diags.is_empty() && self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn to_json(&self) -> Json {
        json!({
            "schema": "xrl-report/1",
            "dialect": DIALECT,
            "ok": self.ok(),
            "diagnostics": self.diags,
            "obligations": self.verdicts.iter().map(Verdict::to_json).collect::<Vec<_>>(),
        })
    }
}

fn mse() -> Expr {
    Expr::var(reserved::MSE)
}

fn mse_eq(m: &Expr) -> Expr {
    Expr::eq(mse(), m.clone())
}

/// `Pre ∧ mse = measure` for total roots, `Pre` for partial ones.
pub fn proc_pre(q: &Proc, total: bool) -> Expr {
    if total {
        and_all(vec![q.pre.clone(), mse_eq(&q.measure)])
    } else {
        q.pre.clone()
    }
}

#[derive(Clone, Debug)]
struct RawNode {
    rule: SimpleRule,
    pre: Option<Expr>,
    post: Option<Expr>,
    cmd: Option<SCmd>,
    guard: Option<Expr>,
    children: Vec<RawChild>,
}

#[derive(Clone, Debug)]
enum RawChild {
    Node(RawNode),
    TotalRef,
}

fn cert_err(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new("CERT_FORMAT", msg)
}

fn read_expr(j: &Json, what: &str) -> Result<Expr, Diagnostic> {
    let s = j
        .as_str()
        .ok_or_else(|| cert_err(format!("{what} must be a string")))?;
    parse_expr(s).map_err(|d| cert_err(format!("{what}: {}", d.message)))
}

fn read_node(p: &SimpleProgram, j: &Json) -> Result<RawNode, Diagnostic> {
    let o = j
        .as_object()
        .ok_or_else(|| cert_err("derivation node must be an object"))?;
    for k in o.keys() {
        if !matches!(k.as_str(), "rule" | "P" | "Q" | "cmd" | "children" | "meta") {
            return Err(cert_err(format!("unknown node key `{k}`")));
        }
    }
    let rule_s = o
        .get("rule")
        .and_then(Json::as_str)
        .ok_or_else(|| cert_err("node without rule"))?;
    let rule =
        SimpleRule::parse(rule_s).ok_or_else(|| cert_err(format!("unknown rule `{rule_s}`")))?;
    let opt = |k: &str| o.get(k).map(|v| read_expr(v, k)).transpose();
    let cmd = match o.get("cmd") {
        Some(c) => {
            let s = c.as_str().ok_or_else(|| cert_err("cmd must be a string"))?;
            Some(parse_scmd(p, s).map_err(|d| cert_err(format!("cmd: {}", d.message)))?)
        }
        None => None,
    };
    let guard = match o.get("meta") {
        Some(m) => {
            let m = m.as_object().ok_or_else(|| cert_err("meta must be an object"))?;
            for k in m.keys() {
                if k != "guard" {
                    return Err(cert_err(format!("unknown meta key `{k}`")));
                }
            }
            m.get("guard").map(|g| read_expr(g, "guard")).transpose()?
        }
        None => None,
    };
    let mut children = Vec::new();
    for c in o
        .get("children")
        .map(|c| c.as_array().ok_or_else(|| cert_err("children must be an array")))
        .transpose()?
        .into_iter()
        .flatten()
    {
        if c.get("ref").and_then(Json::as_str) == Some("total") {
            children.push(RawChild::TotalRef);
        } else {
            children.push(RawChild::Node(read_node(p, c)?));
        }
    }
    Ok(RawNode {
        rule,
        pre: opt("P")?,
        post: opt("Q")?,
        cmd,
        guard,
        children,
    })
}

struct Checker<'a> {
    p: &'a SimpleProgram,
    q: &'a Proc,
    obs: Vec<SimpleObligation>,
    diags: Vec<Diagnostic>,
    total_ref: Option<Arc<SimpleNode>>,
}

impl Checker<'_> {
    fn fail(&mut self, path: &str, code: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(
            code,
            format!("{}/{}: {}", self.q.name, path, msg.into()),
        ));
    }

    fn ob(&mut self, path: &str, tag: &str, pre: Expr, post: Expr) {
        self.obs.push(SimpleObligation {
            id: format!("{}/{}:{}", self.q.name, path, tag),
            pre,
            post,
        });
    }

    fn finish(
        &self,
        rule: SimpleRule,
        path: &str,
        total: bool,
        pre: Expr,
        cmd: SCmd,
        post: Expr,
        children: Vec<Arc<SimpleNode>>,
    ) -> Arc<SimpleNode> {
        let size = 1 + children.iter().map(|c| c.size).sum::<usize>();
        Arc::new(SimpleNode {
            rule,
            path: path.to_string(),
            total,
            entry: self.q.name.clone(),
            pre,
            cmd,
            post,
            children,
            size,
        })
    }

    fn arity(&mut self, n: &RawNode, k: usize, path: &str) -> bool {
        if n.children.len() != k {
            self.fail(
                path,
                "RULE_SHAPE",
                format!("{} takes {k} children, found {}", n.rule.name(), n.children.len()),
            );
            return false;
        }
        true
    }

    fn child<'n>(&mut self, n: &'n RawNode, i: usize, path: &str) -> Option<&'n RawNode> {
        match &n.children[i] {
            RawChild::Node(c) => Some(c),
            RawChild::TotalRef => {
                self.fail(path, "RULE_SHAPE", "only Cast may reference the total derivation");
                None
            }
        }
    }

    fn pre_of(&mut self, n: &RawNode, expected: Option<&Expr>, path: &str) -> Option<Expr> {
        let pre = n.pre.clone().or_else(|| expected.cloned());
        if pre.is_none() {
            self.fail(path, "RULE_SHAPE", "precondition is neither given nor inferable");
        }
        pre
    }

    fn node(
        &mut self,
        n: &RawNode,
        expected: Option<&Expr>,
        path: &str,
        total: bool,
    ) -> Option<Arc<SimpleNode>> {
        let sub = |i: usize| format!("{path}.{i}");
        let out = match n.rule {
            SimpleRule::Skip => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.pre_of(n, expected, path)?;
                self.finish(n.rule, path, total, pre.clone(), SCmd::Skip, pre, vec![])
            }
            SimpleRule::Asn => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let Some(SCmd::Asn(a, e)) = n.cmd.clone() else {
                    self.fail(path, "RULE_SHAPE", "Asn needs an assignment command");
                    return None;
                };
                if a == reserved::MSE {
                    self.fail(path, "SIDE_CONDITION", "mse cannot be assigned");
                    return None;
                }
                let Some(post) = n.post.clone() else {
                    self.fail(path, "RULE_SHAPE", "Asn needs its postcondition Q");
                    return None;
                };
                let pre = subst(&post, &[(a.clone(), e.clone())]);
                if let Some(given) = &n.pre {
                    if !same_conjuncts(given, &pre) {
                        self.fail(
                            path,
                            "DERIVED_MISMATCH",
                            format!("Asn precondition must be `{}`", print_expr(&pre)),
                        );
                        return None;
                    }
                }
                self.finish(n.rule, path, total, pre, SCmd::Asn(a, e), post, vec![])
            }
            SimpleRule::Seq => {
                if !self.arity(n, 2, path) {
                    return None;
                }
                let start = n.pre.as_ref().or(expected);
                let c1 = self.child(n, 0, path)?;
                let k1 = self.node(c1, start, &sub(0), total)?;
                let c2 = self.child(n, 1, path)?;
                let k2 = self.node(c2, Some(&k1.post), &sub(1), total)?;
                if !same_conjuncts(&k2.pre, &k1.post) {
                    self.fail(
                        path,
                        "DERIVED_MISMATCH",
                        "second precondition differs from first postcondition",
                    );
                    return None;
                }
                let cmd = SCmd::Seq(Box::new(k1.cmd.clone()), Box::new(k2.cmd.clone()));
                let (pre, post) = (k1.pre.clone(), k2.post.clone());
                self.finish(n.rule, path, total, pre, cmd, post, vec![k1, k2])
            }
            SimpleRule::If => {
                if !self.arity(n, 2, path) {
                    return None;
                }
                let pre = self.pre_of(n, expected, path)?;
                let guard = match (&n.guard, &n.cmd) {
                    (Some(g), _) => g.clone(),
                    (None, Some(SCmd::If(g, ..))) => g.clone(),
                    _ => {
                        self.fail(path, "RULE_SHAPE", "If needs a guard");
                        return None;
                    }
                };
                let p1 = Expr::and(pre.clone(), guard.clone());
                let p2 = Expr::and(pre.clone(), Expr::not(guard.clone()));
                let c1 = self.child(n, 0, path)?;
                let k1 = self.node(c1, Some(&p1), &sub(0), total)?;
                let c2 = self.child(n, 1, path)?;
                let k2 = self.node(c2, Some(&p2), &sub(1), total)?;
                if !same_conjuncts(&k1.pre, &p1) || !same_conjuncts(&k2.pre, &p2) {
                    self.fail(path, "DERIVED_MISMATCH", "branch preconditions must be P && b and P && !b");
                    return None;
                }
                if !same_conjuncts(&k1.post, &k2.post) {
                    self.fail(path, "DERIVED_MISMATCH", "branches must agree on Q");
                    return None;
                }
                let cmd = SCmd::If(guard, Box::new(k1.cmd.clone()), Box::new(k2.cmd.clone()));
                let post = k1.post.clone();
                self.finish(n.rule, path, total, pre, cmd, post, vec![k1, k2])
            }
            SimpleRule::Cal => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.pre_of(n, expected, path)?;
                let Some(SCmd::Call { lhs, proc, arg }) = n.cmd.clone() else {
                    self.fail(path, "RULE_SHAPE", "Cal needs a call command");
                    return None;
                };
                let callee = self.p.proc(&proc)?;
                if fv(&arg).contains(&lhs) || lhs == reserved::MSE {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("{lhs} may not occur in the argument or be mse"),
                    );
                    return None;
                }
                let at = [(callee.param.clone(), arg.clone())];
                self.ob(path, "callpre", pre.clone(), subst(&callee.pre, &at));
                if total {
                    let down = Expr::bin(BinOp::Lt, subst(&callee.measure, &at), mse());
                    self.ob(path, "measure", pre.clone(), down);
                }
                let mut post = vec![subst(
                    &callee.post,
                    &[
                        (callee.param.clone(), arg.clone()),
                        (Name::from(reserved::RET), Expr::Var(lhs.clone())),
                    ],
                )];
                post.extend(
                    conjuncts(&pre)
                        .into_iter()
                        .filter(|c| !fv(c).contains(&lhs))
                        .cloned(),
                );
                let cmd = SCmd::Call { lhs, proc, arg };
                let post = and_all(post);
                if let Some(q) = &n.post {
                    if !same_conjuncts(q, &post) {
                        self.fail(
                            path,
                            "DERIVED_MISMATCH",
                            format!("Cal postcondition must be `{}`", print_expr(&post)),
                        );
                        return None;
                    }
                }
                self.finish(n.rule, path, total, pre, cmd, post, vec![])
            }
            SimpleRule::Conseq => {
                if !self.arity(n, 1, path) {
                    return None;
                }
                let outer = n.pre.as_ref().or(expected).cloned();
                let c = self.child(n, 0, path)?;
                let k = self.node(c, outer.as_ref(), &sub(0), total)?;
                let pre = outer.unwrap_or_else(|| k.pre.clone());
                let post = n.post.clone().unwrap_or_else(|| k.post.clone());
                self.ob(path, "pre", pre.clone(), k.pre.clone());
                self.ob(path, "post", k.post.clone(), post.clone());
                let cmd = k.cmd.clone();
                return Some(self.finish(n.rule, path, total, pre, cmd, post, vec![k]));
            }
            SimpleRule::Cast => {
                if total {
                    self.fail(path, "RULE_CONTEXT", "Cast is not allowed in a total derivation");
                    return None;
                }
                if !self.arity(n, 1, path) {
                    return None;
                }
                let k = match &n.children[0] {
                    RawChild::TotalRef => match self.total_ref.clone() {
                        Some(k) => k,
                        None => {
                            self.fail(path, "RULE_SHAPE", "no total derivation to reference");
                            return None;
                        }
                    },
                    RawChild::Node(c) => self.node(c, None, &sub(0), true)?,
                };
                let mut cs: Vec<Expr> = conjuncts(&k.pre).into_iter().cloned().collect();
                if cs.last() != Some(&mse_eq(&self.q.measure)) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!(
                            "premise precondition must end with `{}`",
                            print_expr(&mse_eq(&self.q.measure))
                        ),
                    );
                    return None;
                }
                cs.pop();
                let pre = and_all(cs);
                if fv(&pre).contains(reserved::MSE) || fv(&k.post).contains(reserved::MSE) {
                    self.fail(path, "SIDE_CONDITION", "mse occurs free outside the measure conjunct");
                    return None;
                }
                if let Some(given) = &n.pre {
                    if !same_conjuncts(given, &pre) {
                        self.fail(
                            path,
                            "DERIVED_MISMATCH",
                            "Cast precondition must drop only the measure conjunct",
                        );
                        return None;
                    }
                }
                let (cmd, post) = (k.cmd.clone(), k.post.clone());
                return Some(self.finish(n.rule, path, false, pre, cmd, post, vec![k]));
            }
        };
        if let Some(q) = &n.post {
            if !same_conjuncts(q, &out.post) {
                self.fail(path, "DERIVED_MISMATCH", "stated Q differs from the derived one");
                return None;
            }
        }
        if let Some(pre) = &n.pre {
            if !same_conjuncts(pre, &out.pre) {
                self.fail(path, "DERIVED_MISMATCH", "stated P differs from the derived one");
                return None;
            }
        }
        if let Some(c) = &n.cmd {
            if *c != out.cmd {
                self.fail(path, "DERIVED_MISMATCH", "stated command differs from the derived one");
                return None;
            }
        }
        Some(out)
    }

    fn shape(&mut self, k: &SimpleNode, total: bool) -> bool {
        let which = if total { "total" } else { "partial" };
        let want = proc_pre(self.q, total);
        let mut ok = true;
        if !same_conjuncts(&k.pre, &want) {
            self.fail(&k.path, "PROC_SHAPE", format!("{which} derivation must start from `{}`", print_expr(&want)));
            ok = false;
        }
        if !same_conjuncts(&k.post, &self.q.post) {
            self.fail(&k.path, "PROC_SHAPE", format!("{which} derivation must end in `{}`", print_expr(&self.q.post)));
            ok = false;
        }
        if k.cmd != self.q.body {
            self.fail(&k.path, "PROC_SHAPE", format!("{which} derivation is not about the body"));
            ok = false;
        }
        ok
    }
}

/// Checks a simple-dialect certificate and decides its obligations over
/// naturals up to `bound`.
pub fn simple_check(p: &SimpleProgram, cert: &Json, bound: u64) -> SimpleChecked {
    let mut out = SimpleChecked::default();
    if let Err(d) = check_into(p, cert, &mut out) {
        out.diags.push(d);
        return out;
    }
    out.verdicts = out.obligations.iter().map(|o| decide(o, bound)).collect();
    out
}

fn check_into(p: &SimpleProgram, cert: &Json, out: &mut SimpleChecked) -> Result<(), Diagnostic> {
    let o = cert
        .as_object()
        .ok_or_else(|| cert_err("certificate must be an object"))?;
    if o.get("schema").and_then(Json::as_str) != Some(SCHEMA) {
        return Err(cert_err(format!("certificate schema must be {SCHEMA}")));
    }
    if o.get("dialect").and_then(Json::as_str) != Some(DIALECT) {
        return Err(cert_err("certificate dialect must be `simple`"));
    }
    let entries = o
        .get("procs")
        .and_then(Json::as_array)
        .ok_or_else(|| cert_err("certificate needs a procs array"))?;
    for e in entries {
        let name = e
            .get("proc")
            .and_then(Json::as_str)
            .ok_or_else(|| cert_err("proc entry without proc"))?;
        let Some(q) = p.proc(name) else {
            out.diags.push(Diagnostic::new("CERT_TARGET", format!("{name}: no such procedure")));
            continue;
        };
        let mut ck = Checker {
            p,
            q,
            obs: Vec::new(),
            diags: Vec::new(),
            total_ref: None,
        };
        if let Some(t) = e.get("total") {
            let raw = read_node(p, t)?;
            if let Some(k) = ck.node(&raw, None, "T", true) {
                if ck.shape(&k, true) {
                    ck.total_ref = Some(k.clone());
                    out.total.insert(q.name.clone(), k);
                }
            }
        }
        let raw = match e.get("partial") {
            Some(pn) => Some(read_node(p, pn)?),
            None if e.get("total").is_some() => Some(RawNode {
                rule: SimpleRule::Cast,
                pre: None,
                post: None,
                cmd: None,
                guard: None,
                children: vec![RawChild::TotalRef],
            }),
            None => None,
        };
        if let Some(raw) = raw {
            if let Some(k) = ck.node(&raw, None, "P", false) {
                if ck.shape(&k, false) {
                    out.partial.insert(q.name.clone(), k);
                }
            }
        }
        out.obligations.append(&mut ck.obs);
        out.diags.append(&mut ck.diags);
    }
    for q in &p.procs {
        if !out.total.contains_key(&q.name) && !out.partial.contains_key(&q.name) {
            out.diags.push(Diagnostic::new(
                "MISSING_CERT",
                format!("{}: no valid derivation", q.name),
            ));
        }
    }
    Ok(())
}

const SAMPLE_CAP: u64 = 200_000;

/// Decides `P ⇒ Q` over naturals `0..=bound` for every free variable, since
/// simple programs compute only with naturals. Samples when the space
/// exceeds the cap.
pub fn decide(o: &SimpleObligation, bound: u64) -> Verdict {
    let mut vars: BTreeSet<Name> = fv(&o.pre);
    vars.extend(fv(&o.post));
    let vars: Vec<Name> = vars.into_iter().collect();
    let domain: Vec<Value> = (0..=bound).map(Value::Nat).collect();
    let k = domain.len() as u64;
    let space = (0..vars.len()).try_fold(1u64, |acc, _| acc.checked_mul(k));
    let prog = Program::default();
    let mut v = Verdict {
        id: o.id.clone(),
        kind: "implies",
        mode: Mode::Bounded,
        status: Status::Pass,
        origin: o.id.split(':').next().unwrap_or_default().to_string(),
        statement: format!("{} ==> {}", print_expr(&o.pre), print_expr(&o.post)),
        explored: 0,
        witness: None,
        detail: None,
    };
    if !call_free(&o.pre) || !call_free(&o.post) {
        v.status = Status::Fail;
        v.detail = Some("assertions must be call-free".into());
        return v;
    }
    let state = |idx: &mut dyn FnMut(usize) -> usize| {
        let mut s = State::new();
        for (i, x) in vars.iter().enumerate() {
            s.update_mut(x, domain[idx(i)].clone());
        }
        s
    };
    let check = |s: State, v: &mut Verdict| {
        v.explored += 1;
        if holds_alpha(&prog, &o.pre, &s) && !holds_alpha(&prog, &o.post, &s) {
            v.status = Status::Fail;
            v.witness = Some(s.to_json());
            return false;
        }
        true
    };
    match space {
        Some(n) if n <= SAMPLE_CAP => {
            for code in 0..n {
                let s = state(&mut |i| ((code / k.pow(i as u32)) % k) as usize);
                if !check(s, &mut v) {
                    break;
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..SAMPLE_CAP {
                let s = state(&mut |_| rng.gen_range(0..domain.len()));
                if !check(s, &mut v) {
                    break;
                }
            }
            if v.status == Status::Pass {
                v.status = Status::Sampled;
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simple::parse_simple;

    #[test]
    fn asn_precondition_is_substitution() {
        let p = parse_simple("proc p(x) decreases x { a := 3 }").unwrap();
        let mut ck = Checker {
            p: &p,
            q: &p.procs[0],
            obs: Vec::new(),
            diags: Vec::new(),
            total_ref: None,
        };
        let raw = RawNode {
            rule: SimpleRule::Asn,
            pre: None,
            post: Some(parse_expr("a == 3").unwrap()),
            cmd: Some(parse_scmd(&p, "a := 3").unwrap()),
            guard: None,
            children: vec![],
        };
        let k = ck.node(&raw, None, "T", true).unwrap();
        assert_eq!(k.pre, parse_expr("3 == 3").unwrap());
    }

    #[test]
    fn decide_finds_witness() {
        let o = SimpleObligation {
            id: "p/T:measure".into(),
            pre: parse_expr("mse == x").unwrap(),
            post: parse_expr("x < mse").unwrap(),
        };
        let v = decide(&o, 4);
        assert_eq!(v.status, Status::Fail);
        assert!(v.witness.is_some());
    }
}
