//! Derivation checking: decidable premises are checked here, semantic
//! premises become obligations.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::effects::{
    mod_vars, reff, reff_with_reads, region_to_effects, subst_effects, EffectList,
};
use crate::entry::{measure_of, EntryHead, MemberKind};
use crate::name::{reserved, Name};
use crate::obligation::{ObKind, Obligation};
use crate::syntax::types::{method_env, TypeEnv};
use crate::syntax::{
    and_all, call_free, conjuncts, fv, print_cmd, print_expr, pure, same_conjuncts, subst, BinOp,
    Cmd, Diagnostic, Expr, Lit, MethodDecl, Owner, Program,
};

use super::cert::{CertFile, Child, MethodEntry, Node, Rule};

/// `[P] c [Q] [ε̄]` or `{P} c {Q} [ε̄]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Judgment {
    pub pre: Expr,
    pub cmd: Cmd,
    pub post: Expr,
    pub eps: EffectList,
}

#[derive(Clone, Debug)]
pub enum Info {
    Plain,
    Frame { r: Expr },
    Seq { snap: Option<Name> },
    Call { callee: EntryHead },
}

/// A checked derivation node.
#[derive(Clone, Debug)]
pub struct Checked {
    pub rule: Rule,
    pub path: String,
    pub total: bool,
    /// `D;n` of the enclosing total derivation.
    pub entry: EntryHead,
    pub j: Judgment,
    pub info: Info,
    pub children: Vec<Arc<Checked>>,
    pub size: usize,
}

#[derive(Clone, Debug, Default)]
pub struct MethodCerts {
    pub total: Option<Arc<Checked>>,
    pub partial: Option<Arc<Checked>>,
}

#[derive(Clone, Debug, Default)]
pub struct CheckOutcome {
    /// Keyed by `(class, method)`.
    pub certs: BTreeMap<(Name, Name), MethodCerts>,
    pub obligations: Vec<Obligation>,
    pub diags: Vec<Diagnostic>,
}

impl CheckOutcome {
    pub fn size(&self) -> usize {
        self.certs
            .values()
            .map(|m| {
                m.total.as_ref().map_or(0, |c| c.size) + m.partial.as_ref().map_or(0, |c| c.size)
            })
            .sum()
    }
}

fn var(x: &str) -> Expr {
    Expr::var(x)
}

fn is_owner(e: Expr, owner: &Owner) -> Expr {
    match owner {
        Owner::Class(c) => Expr::IsClass(Box::new(e), c.clone()),
        Owner::Trait(t) => Expr::IsTrait(Box::new(e), t.clone()),
    }
}

fn mse_eq(m: &Expr) -> Expr {
    Expr::eq(var(reserved::MSE), m.clone())
}

fn show_eps(e: &EffectList) -> String {
    format!("{e:?}")
}

struct Checker<'p> {
    p: &'p Program,
    head: EntryHead,
    env: TypeEnv,
    prefix: String,
    obs: Vec<Obligation>,
    diags: Vec<Diagnostic>,
    total_ref: Option<Arc<Checked>>,
}

impl<'p> Checker<'p> {
    fn fail(&mut self, path: &str, code: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(
            code,
            format!("{}/{}: {}", self.prefix, path, msg.into()),
        ));
    }

    fn ob(&mut self, path: &str, tag: &str, kind: ObKind) {
        let id = format!("{}/{}:{}", self.prefix, path, tag);
        self.obs.push(Obligation::new(
            id,
            kind,
            format!("{}/{}", self.prefix, path),
            self.env.clone(),
        ));
    }

    fn child<'n>(&mut self, n: &'n Node, i: usize, path: &str) -> Option<&'n Node> {
        match n.children.get(i) {
            Some(Child::Node(c)) => Some(c),
            Some(Child::TotalRef) => {
                self.fail(
                    path,
                    "RULE_SHAPE",
                    "a total reference is only allowed under Cast",
                );
                None
            }
            None => {
                self.fail(
                    path,
                    "RULE_SHAPE",
                    format!("{} needs {} children", n.rule.name(), i + 1),
                );
                None
            }
        }
    }

    fn arity(&mut self, n: &Node, k: usize, path: &str) -> bool {
        if n.children.len() != k {
            self.fail(
                path,
                "RULE_SHAPE",
                format!(
                    "{} takes {k} children, found {}",
                    n.rule.name(),
                    n.children.len()
                ),
            );
            return false;
        }
        true
    }

    fn require_pre(&mut self, n: &Node, expected: Option<&Expr>, path: &str) -> Option<Expr> {
        let pre = n.pre.clone().or_else(|| expected.cloned());
        if pre.is_none() {
            self.fail(
                path,
                "RULE_SHAPE",
                "precondition is neither given nor inferable",
            );
        }
        pre
    }

    /// Checks a given post and effect list against the derived ones.
    fn agree(&mut self, n: &Node, j: &Judgment, path: &str) -> bool {
        let mut ok = true;
        if let Some(q) = &n.post {
            if !same_conjuncts(q, &j.post) {
                self.fail(
                    path,
                    "DERIVED_MISMATCH",
                    format!(
                        "stated Q `{}` differs from derived `{}`",
                        print_expr(q),
                        print_expr(&j.post)
                    ),
                );
                ok = false;
            }
        }
        if let Some(e) = &n.eps {
            if *e != j.eps {
                self.fail(
                    path,
                    "DERIVED_MISMATCH",
                    format!(
                        "stated effects {} differ from derived {}",
                        show_eps(e),
                        show_eps(&j.eps)
                    ),
                );
                ok = false;
            }
        }
        if let Some(c) = &n.cmd {
            if *c != j.cmd {
                self.fail(
                    path,
                    "DERIVED_MISMATCH",
                    format!(
                        "stated command `{}` differs from derived `{}`",
                        print_cmd(c),
                        print_cmd(&j.cmd)
                    ),
                );
                ok = false;
            }
        }
        ok
    }

    fn cmd<'n>(&mut self, n: &'n Node, path: &str) -> Option<&'n Cmd> {
        if n.cmd.is_none() {
            self.fail(path, "RULE_SHAPE", format!("{} needs a cmd", n.rule.name()));
        }
        n.cmd.as_ref()
    }

    fn finish(
        &mut self,
        rule: Rule,
        path: &str,
        total: bool,
        entry: &EntryHead,
        j: Judgment,
        info: Info,
        children: Vec<Arc<Checked>>,
    ) -> Arc<Checked> {
        let size = 1 + children.iter().map(|c| c.size).sum::<usize>();
        Arc::new(Checked {
            rule,
            path: path.to_string(),
            total,
            entry: entry.clone(),
            j,
            info,
            children,
            size,
        })
    }

    fn node(
        &mut self,
        n: &Node,
        expected: Option<&Expr>,
        path: &str,
        total: bool,
        entry: &EntryHead,
    ) -> Option<Arc<Checked>> {
        let p = self.p;
        match n.rule {
            Rule::CallT | Rule::CallC if !total => {
                self.fail(
                    path,
                    "RULE_CONTEXT",
                    "total call rules are not allowed in a partial derivation",
                );
                return None;
            }
            Rule::CallP | Rule::Cast if total => {
                self.fail(
                    path,
                    "RULE_CONTEXT",
                    format!("{} is not allowed in a total derivation", n.rule.name()),
                );
                return None;
            }
            _ => {}
        }
        let (j, info, children) = match n.rule {
            Rule::Skip => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.require_pre(n, expected, path)?;
                let j = Judgment {
                    pre: pre.clone(),
                    cmd: Cmd::Skip,
                    post: pre,
                    eps: vec![],
                };
                (j, Info::Plain, vec![])
            }
            Rule::Assign => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.require_pre(n, expected, path)?;
                let Some(Cmd::Assign(x, e)) = self.cmd(n, path).cloned() else {
                    self.fail(path, "RULE_SHAPE", "Assign needs an assignment command");
                    return None;
                };
                if fv(&e).contains(&x) || fv(&pre).contains(&x) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("{x} occurs free in the right-hand side or precondition"),
                    );
                    return None;
                }
                if matches!(x.as_str(), reserved::THIS | reserved::ALLOC | reserved::MSE) {
                    self.fail(path, "SIDE_CONDITION", format!("{x} cannot be assigned"));
                    return None;
                }
                self.ob(
                    path,
                    "df",
                    ObKind::DfHolds {
                        pre: pre.clone(),
                        e: e.clone(),
                    },
                );
                let j = Judgment {
                    post: Expr::and(Expr::eq(Expr::Var(x.clone()), e.clone()), pre.clone()),
                    pre,
                    cmd: Cmd::Assign(x, e),
                    eps: vec![],
                };
                (j, Info::Plain, vec![])
            }
            Rule::Write => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let Some(Cmd::Write(x, f, e)) = self.cmd(n, path).cloned() else {
                    self.fail(path, "RULE_SHAPE", "Write needs a field update command");
                    return None;
                };
                if !pure(&e) {
                    self.fail(path, "SIDE_CONDITION", "written value must be pure");
                    return None;
                }
                let want = Expr::bin(BinOp::Ne, Expr::Var(x.clone()), Expr::Lit(Lit::Null));
                let pre = n.pre.clone().unwrap_or_else(|| want.clone());
                if !same_conjuncts(&pre, &want) {
                    self.fail(
                        path,
                        "DERIVED_MISMATCH",
                        format!("Write precondition must be `{}`", print_expr(&want)),
                    );
                    return None;
                }
                let j = Judgment {
                    pre,
                    post: Expr::eq(Expr::field(Expr::Var(x.clone()), &f), e.clone()),
                    eps: vec![crate::effects::Effect::new(
                        Expr::singleton(Expr::Var(x.clone())),
                        &f,
                    )],
                    cmd: Cmd::Write(x, f, e),
                };
                (j, Info::Plain, vec![])
            }
            Rule::Alloc => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.require_pre(n, expected, path)?;
                let Some(Cmd::Alloc(x, c)) = self.cmd(n, path).cloned() else {
                    self.fail(path, "RULE_SHAPE", "Alloc needs an allocation command");
                    return None;
                };
                if !p.is_class(&c) {
                    self.fail(path, "SIDE_CONDITION", format!("{c} is not a class"));
                    return None;
                }
                let mut cs: Vec<Expr> = conjuncts(&pre).into_iter().cloned().collect();
                let mut post = vec![Expr::IsClass(Box::new(Expr::Var(x.clone())), c.clone())];
                if let Some(r) = &n.meta.snap {
                    let snap = Expr::eq(Expr::Var(r.clone()), var(reserved::ALLOC));
                    if cs.last() != Some(&snap) {
                        self.fail(
                            path,
                            "SIDE_CONDITION",
                            format!("precondition must end with `{}`", print_expr(&snap)),
                        );
                        return None;
                    }
                    cs.pop();
                    post.push(Expr::not(Expr::bin(
                        BinOp::In,
                        Expr::Var(x.clone()),
                        Expr::Var(r.clone()),
                    )));
                }
                let rest = and_all(cs.clone());
                if fv(&pre).contains(&x) || fv(&rest).contains(reserved::ALLOC) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("{x} or alloc occurs free in the framed precondition"),
                    );
                    return None;
                }
                post.extend(cs);
                let j = Judgment {
                    pre,
                    cmd: Cmd::Alloc(x, c),
                    post: and_all(post),
                    eps: vec![],
                };
                (j, Info::Plain, vec![])
            }
            Rule::If => {
                if !self.arity(n, 2, path) {
                    return None;
                }
                let pre = self.require_pre(n, expected, path)?;
                let guard = match (&n.meta.guard, &n.cmd) {
                    (Some(g), _) => g.clone(),
                    (None, Some(Cmd::If(g, ..))) => g.clone(),
                    _ => {
                        self.fail(path, "RULE_SHAPE", "If needs a guard");
                        return None;
                    }
                };
                if !call_free(&guard) {
                    self.fail(path, "SIDE_CONDITION", "guard must be call-free");
                    return None;
                }
                let p1 = Expr::and(pre.clone(), guard.clone());
                let p2 = Expr::and(pre.clone(), Expr::not(guard.clone()));
                let c1 = self.child(n, 0, path)?;
                let c2 = self.child(n, 1, path)?;
                let k1 = self.node(c1, Some(&p1), &format!("{path}.0"), total, entry)?;
                let k2 = self.node(c2, Some(&p2), &format!("{path}.1"), total, entry)?;
                if !same_conjuncts(&k1.j.pre, &p1) || !same_conjuncts(&k2.j.pre, &p2) {
                    self.fail(
                        path,
                        "DERIVED_MISMATCH",
                        "branch preconditions must be P && b and P && !b",
                    );
                    return None;
                }
                if !same_conjuncts(&k1.j.post, &k2.j.post) || k1.j.eps != k2.j.eps {
                    self.fail(
                        path,
                        "DERIVED_MISMATCH",
                        "branches must agree on Q and effects",
                    );
                    return None;
                }
                let j = Judgment {
                    pre,
                    cmd: Cmd::If(
                        guard,
                        Box::new(k1.j.cmd.clone()),
                        Box::new(k2.j.cmd.clone()),
                    ),
                    post: k1.j.post.clone(),
                    eps: k1.j.eps.clone(),
                };
                (j, Info::Plain, vec![k1, k2])
            }
            Rule::Seq => {
                if !self.arity(n, 2, path) {
                    return None;
                }
                let c1 = self.child(n, 0, path)?;
                let c2 = self.child(n, 1, path)?;
                let start = n.pre.as_ref().or(expected);
                let k1 = self.node(c1, start, &format!("{path}.0"), total, entry)?;
                let k2 = self.node(c2, Some(&k1.j.post), &format!("{path}.1"), total, entry)?;
                if !same_conjuncts(&k2.j.pre, &k1.j.post) {
                    self.fail(
                        path,
                        "DERIVED_MISMATCH",
                        format!(
                            "second precondition `{}` differs from first postcondition `{}`",
                            print_expr(&k2.j.pre),
                            print_expr(&k1.j.post)
                        ),
                    );
                    return None;
                }
                let mut base: Vec<Expr> = conjuncts(&k1.j.pre).into_iter().cloned().collect();
                let split = n.meta.split.unwrap_or(k2.j.eps.len());
                if split > k2.j.eps.len() {
                    self.fail(path, "RULE_SHAPE", "split exceeds the second effect list");
                    return None;
                }
                let (eps2, eps2x) = k2.j.eps.split_at(split);
                let c12 = Cmd::seq(k1.j.cmd.clone(), k2.j.cmd.clone());
                if let Some(r) = &n.meta.snap {
                    let snap = Expr::eq(Expr::Var(r.clone()), var(reserved::ALLOC));
                    if base.last() != Some(&snap) {
                        self.fail(
                            path,
                            "SIDE_CONDITION",
                            format!("first precondition must end with `{}`", print_expr(&snap)),
                        );
                        return None;
                    }
                    base.pop();
                    if mod_vars(&c12).contains(r) || fv(&and_all(base.clone())).contains(r) {
                        self.fail(
                            path,
                            "SIDE_CONDITION",
                            format!("snapshot {r} must be fresh"),
                        );
                        return None;
                    }
                    self.ob(
                        path,
                        "disjoint",
                        ObKind::Disjoint {
                            pre: k1.j.post.clone(),
                            eps: eps2x.to_vec(),
                            region: Expr::Var(r.clone()),
                        },
                    );
                } else if !eps2x.is_empty() {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        "dropping effects needs an allocation snapshot",
                    );
                    return None;
                }
                if total && mod_vars(&k1.j.cmd).contains(reserved::MSE) {
                    self.fail(path, "SIDE_CONDITION", "mse is modified");
                    return None;
                }
                self.ob(
                    path,
                    "immune",
                    ObKind::Immune {
                        pre: and_all(base),
                        eps2: eps2.to_vec(),
                        eps1: k1.j.eps.clone(),
                    },
                );
                let mut eps = k1.j.eps.clone();
                eps.extend(eps2.iter().cloned());
                let j = Judgment {
                    pre: k1.j.pre.clone(),
                    cmd: c12,
                    post: k2.j.post.clone(),
                    eps,
                };
                (
                    j,
                    Info::Seq {
                        snap: n.meta.snap.clone(),
                    },
                    vec![k1, k2],
                )
            }
            Rule::Frame => {
                if !self.arity(n, 1, path) {
                    return None;
                }
                let Some(r) = n.meta.frame.clone() else {
                    self.fail(path, "RULE_SHAPE", "Frame needs meta.R");
                    return None;
                };
                let c = self.child(n, 0, path)?;
                let k = self.node(c, None, &format!("{path}.0"), total, entry)?;
                let clash: Vec<Name> = mod_vars(&k.j.cmd).intersection(&fv(&r)).cloned().collect();
                if !clash.is_empty() {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("frame mentions modified variables {clash:?}"),
                    );
                    return None;
                }
                let eta = if call_free(&r) {
                    reff(&r).unwrap_or_default()
                } else {
                    reff_with_reads(p, &r)
                };
                let pre = Expr::and(k.j.pre.clone(), r.clone());
                self.ob(
                    path,
                    "sep",
                    ObKind::Separates {
                        pre: pre.clone(),
                        eps: k.j.eps.clone(),
                        eta,
                    },
                );
                if let Some(given) = &n.pre {
                    if !same_conjuncts(given, &pre) {
                        self.fail(
                            path,
                            "DERIVED_MISMATCH",
                            "Frame precondition must be P && R",
                        );
                        return None;
                    }
                }
                let j = Judgment {
                    pre,
                    cmd: k.j.cmd.clone(),
                    post: Expr::and(k.j.post.clone(), r.clone()),
                    eps: k.j.eps.clone(),
                };
                (j, Info::Frame { r }, vec![k])
            }
            Rule::Conseq => {
                if !self.arity(n, 1, path) {
                    return None;
                }
                let c = self.child(n, 0, path)?;
                let outer = n.pre.as_ref().or(expected).cloned();
                let k = self.node(c, outer.as_ref(), &format!("{path}.0"), total, entry)?;
                let pre = outer.unwrap_or_else(|| k.j.pre.clone());
                let post = n.post.clone().unwrap_or_else(|| k.j.post.clone());
                let eps = n.eps.clone().unwrap_or_else(|| k.j.eps.clone());
                self.ob(
                    path,
                    "pre",
                    ObKind::Implies {
                        pre: pre.clone(),
                        post: k.j.pre.clone(),
                    },
                );
                self.ob(
                    path,
                    "post",
                    ObKind::Implies {
                        pre: k.j.post.clone(),
                        post: post.clone(),
                    },
                );
                self.ob(
                    path,
                    "sub",
                    ObKind::Subeffect {
                        pre: pre.clone(),
                        sub: k.j.eps.clone(),
                        sup: eps.clone(),
                    },
                );
                let j = Judgment {
                    pre,
                    cmd: k.j.cmd.clone(),
                    post,
                    eps,
                };
                if let Some(c) = &n.cmd {
                    if *c != j.cmd {
                        self.fail(
                            path,
                            "DERIVED_MISMATCH",
                            "stated command differs from the premise's",
                        );
                        return None;
                    }
                }
                return Some(self.finish(n.rule, path, total, entry, j, Info::Plain, vec![k]));
            }
            Rule::CallT | Rule::CallC | Rule::CallP => {
                if !self.arity(n, 0, path) {
                    return None;
                }
                let pre = self.require_pre(n, expected, path)?;
                let Some(Cmd::Call {
                    lhs,
                    recv,
                    method,
                    owner,
                    args,
                }) = self.cmd(n, path).cloned()
                else {
                    self.fail(path, "RULE_SHAPE", "call rule needs a method call command");
                    return None;
                };
                match (n.rule, &owner) {
                    (Rule::CallT, Owner::Class(_)) => {
                        self.fail(path, "RULE_SHAPE", "CallT needs a trait owner; use CallC");
                        return None;
                    }
                    (Rule::CallC, Owner::Trait(_)) => {
                        self.fail(path, "RULE_SHAPE", "CallC needs a class owner; use CallT");
                        return None;
                    }
                    _ => {}
                }
                let Some(decl) = p.method(&owner, &method) else {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("HasM {owner} {method} fails"),
                    );
                    return None;
                };
                if decl.params.len() != args.len() {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        "argument count differs from the parameter list",
                    );
                    return None;
                }
                if total && !decl.is_total() {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("Total {owner} {method} fails"),
                    );
                    return None;
                }
                if lhs == recv || args.contains(&lhs) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        "result variable must differ from receiver and arguments",
                    );
                    return None;
                }
                let mut bind = vec![(Name::from(reserved::THIS), Expr::Var(recv.clone()))];
                for ((a, _), z) in decl.params.iter().zip(&args) {
                    bind.push((a.clone(), Expr::Var(z.clone())));
                }
                let call_pre = Expr::and(
                    is_owner(Expr::Var(recv.clone()), &owner),
                    subst(&decl.requires, &bind),
                );
                self.ob(
                    path,
                    "callpre",
                    ObKind::Implies {
                        pre: pre.clone(),
                        post: call_pre,
                    },
                );
                let callee = EntryHead::new(owner.clone(), &method);
                if total {
                    self.ob(
                        path,
                        "measure",
                        ObKind::MeasureDecrease {
                            pre: pre.clone(),
                            callee: callee.clone(),
                            bindings: bind.clone(),
                            caller: entry.clone(),
                        },
                    );
                }
                let mut pbind = bind.clone();
                pbind.push((decl.ret.0.clone(), Expr::Var(lhs.clone())));
                let post = subst(&decl.ensures, &pbind);
                self.ob(
                    path,
                    "callpost",
                    ObKind::CallPost {
                        callee: callee.clone(),
                        post: post.clone(),
                    },
                );
                let eps = subst_effects(&region_to_effects(p, &decl.modifies), &bind);
                let j = Judgment {
                    pre,
                    cmd: Cmd::Call {
                        lhs,
                        recv,
                        method,
                        owner,
                        args,
                    },
                    post,
                    eps,
                };
                (j, Info::Call { callee }, vec![])
            }
            Rule::Cast => {
                if !self.arity(n, 1, path) {
                    return None;
                }
                let (k, cast_entry) = match &n.children[0] {
                    Child::TotalRef => match self.total_ref.clone() {
                        Some(k) => {
                            let e = k.entry.clone();
                            (k, e)
                        }
                        None => {
                            self.fail(path, "RULE_SHAPE", "no total derivation to reference");
                            return None;
                        }
                    },
                    Child::Node(c) => {
                        let e = n.meta.entry.clone().unwrap_or_else(|| self.head.clone());
                        (self.node(c, None, &format!("{path}.0"), true, &e)?, e)
                    }
                };
                let Ok(m) = measure_of(p, MemberKind::Method, &cast_entry) else {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!("{cast_entry} has no measure"),
                    );
                    return None;
                };
                let mut cs: Vec<Expr> = conjuncts(&k.j.pre).into_iter().cloned().collect();
                if cs.last() != Some(&mse_eq(m)) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        format!(
                            "premise precondition must end with `{}`",
                            print_expr(&mse_eq(m))
                        ),
                    );
                    return None;
                }
                cs.pop();
                let pre = and_all(cs);
                let mut used: BTreeSet<Name> = fv(&pre);
                used.extend(fv(&k.j.post));
                for e in &k.j.eps {
                    used.extend(fv(&e.region));
                }
                if used.contains(reserved::MSE) {
                    self.fail(
                        path,
                        "SIDE_CONDITION",
                        "mse occurs free outside the measure conjunct",
                    );
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
                let j = Judgment {
                    pre,
                    cmd: k.j.cmd.clone(),
                    post: k.j.post.clone(),
                    eps: k.j.eps.clone(),
                };
                (j, Info::Plain, vec![k])
            }
        };
        if !self.agree(n, &j, path) {
            return None;
        }
        if let (Some(given), false) = (
            &n.pre,
            matches!(n.rule, Rule::Frame | Rule::Cast | Rule::Write),
        ) {
            if !same_conjuncts(given, &j.pre) {
                self.fail(
                    path,
                    "DERIVED_MISMATCH",
                    "stated precondition differs from the derived one",
                );
                return None;
            }
        }
        Some(self.finish(n.rule, path, total, entry, j, info, children))
    }
}

/// `Pre C m && this is C [&& mse == Mse C m]`
pub fn method_pre(class: &Name, m: &MethodDecl, total: bool) -> Expr {
    let mut cs: Vec<Expr> = conjuncts(&m.requires).into_iter().cloned().collect();
    cs.push(Expr::IsClass(Box::new(var(reserved::THIS)), class.clone()));
    if total {
        if let Some(me) = m.measure() {
            cs.push(mse_eq(me));
        }
    }
    and_all(cs)
}

fn check_shape(
    ck: &mut Checker<'_>,
    k: &Checked,
    class: &Name,
    m: &MethodDecl,
    total: bool,
) -> bool {
    let which = if total { "total" } else { "partial" };
    let mut ok = true;
    let want_pre = method_pre(class, m, total);
    if !same_conjuncts(&k.j.pre, &want_pre) {
        ck.fail(
            &k.path,
            "METHOD_SHAPE",
            format!(
                "{which} derivation must start from `{}`",
                print_expr(&want_pre)
            ),
        );
        ok = false;
    }
    if !same_conjuncts(&k.j.post, &m.ensures) {
        ck.fail(
            &k.path,
            "METHOD_SHAPE",
            format!(
                "{which} derivation must end in `{}`",
                print_expr(&m.ensures)
            ),
        );
        ok = false;
    }
    let want_eps = region_to_effects(ck.p, &m.modifies);
    if k.j.eps != want_eps {
        ck.fail(
            &k.path,
            "METHOD_SHAPE",
            format!("{which} derivation effects must be {}", show_eps(&want_eps)),
        );
        ok = false;
    }
    if Some(&k.j.cmd) != m.body.as_ref() {
        ck.fail(
            &k.path,
            "METHOD_SHAPE",
            format!("{which} derivation is not about the method body"),
        );
        ok = false;
    }
    ok
}

fn check_method(p: &Program, e: &MethodEntry, out: &mut CheckOutcome) {
    let owner = Owner::Class(e.class.clone());
    let prefix = format!("{}.{}", e.class, e.method);
    let Some(m) = p.method(&owner, &e.method) else {
        out.diags.push(Diagnostic::new(
            "CERT_TARGET",
            format!("{prefix}: no such class method"),
        ));
        return;
    };
    let head = EntryHead::new(owner.clone(), &e.method);
    let mut ck = Checker {
        p,
        head: head.clone(),
        env: method_env(p, &owner, m),
        prefix: prefix.clone(),
        obs: Vec::new(),
        diags: Vec::new(),
        total_ref: None,
    };
    let mut certs = MethodCerts::default();
    if let Some(t) = &e.total {
        if !m.is_total() {
            ck.fail(
                "T",
                "CERT_TARGET",
                "total derivation for a method without a measure",
            );
        } else if let Some(k) = ck.node(t, None, "T", true, &head) {
            if check_shape(&mut ck, &k, &e.class, m, true) {
                certs.total = Some(k);
            }
        }
    }
    ck.total_ref = certs.total.clone();
    let synth;
    let partial = match (&e.partial, &e.total) {
        (Some(pn), _) => Some(pn),
        (None, Some(_)) => {
            synth = Node {
                rule: Rule::Cast,
                pre: None,
                post: None,
                eps: None,
                cmd: None,
                children: vec![Child::TotalRef],
                meta: Default::default(),
            };
            Some(&synth)
        }
        (None, None) => None,
    };
    if let Some(pn) = partial {
        if let Some(k) = ck.node(pn, None, "P", false, &head) {
            if check_shape(&mut ck, &k, &e.class, m, false) {
                certs.partial = Some(k);
            }
        }
    }
    out.obligations.append(&mut ck.obs);
    out.diags.append(&mut ck.diags);
    out.certs.insert((e.class.clone(), e.method.clone()), certs);
}

/// Checks every method entry of a certificate and reports missing ones.
pub fn check_certificates(p: &Program, cert: &CertFile) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let mut seen = BTreeSet::new();
    for e in &cert.methods {
        if !seen.insert((e.class.clone(), e.method.clone())) {
            out.diags.push(Diagnostic::new(
                "CERT_TARGET",
                format!("{}.{}: duplicate method entry", e.class, e.method),
            ));
            continue;
        }
        check_method(p, e, &mut out);
    }
    for c in &p.classes {
        for m in &c.methods {
            if m.body.is_none() {
                continue;
            }
            let key = (c.name.clone(), m.name.clone());
            let have = out.certs.get(&key);
            if m.is_total() && have.is_none_or(|h| h.total.is_none()) {
                out.diags.push(Diagnostic::new(
                    "MISSING_CERT",
                    format!("{}.{}: no valid total derivation", c.name, m.name),
                ));
            }
            if have.is_none_or(|h| h.partial.is_none()) {
                out.diags.push(Diagnostic::new(
                    "MISSING_CERT",
                    format!("{}.{}: no valid partial derivation", c.name, m.name),
                ));
            }
        }
    }
    out.diags.sort();
    out.diags.dedup();
    out
}
