//! Program well-formedness: name resolution, arity, stratification and
//! call-freeness requirements.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::ops::call_free;
use super::printer::print_ty;
use super::Diagnostic;
use crate::name::{reserved, Name};

/// Returns every violated constraint, sorted. Empty iff the program is well formed.
pub fn check_wellformed(p: &Program) -> Vec<Diagnostic> {
    let mut w = Wf { p, out: Vec::new() };
    w.run();
    let mut out = w.out;
    out.sort();
    out.dedup();
    out
}

struct Wf<'a> {
    p: &'a Program,
    out: Vec<Diagnostic>,
}

/// Where an expression occurs; controls which checks apply.
struct Site<'s> {
    label: String,
    /// `None` allows any variable (method bodies).
    vars: Option<&'s BTreeSet<Name>>,
    in_function_body: bool,
}

impl<'a> Wf<'a> {
    fn diag(&mut self, code: &str, msg: String) {
        self.out.push(Diagnostic::new(code, msg));
    }

    fn run(&mut self) {
        let p = self.p;
        self.check_fields();
        self.check_orders();
        for t in &p.traits {
            let owner = Owner::Trait(t.name.clone());
            for f in &t.functions {
                self.check_function(&owner, f, false);
            }
            for m in &t.methods {
                self.check_method(&owner, m, false);
            }
        }
        for c in &p.classes {
            let owner = Owner::Class(c.name.clone());
            match p.trait_decl(&c.extends) {
                None => self.diag(
                    "resolve",
                    format!("class {} extends undeclared trait {}", c.name, c.extends),
                ),
                Some(t) => {
                    for f in &t.functions {
                        match c.functions.iter().find(|g| g.name == f.name) {
                            None => self.diag(
                                "implements",
                                format!("class {} does not implement function {}", c.name, f.name),
                            ),
                            Some(g) => {
                                if g.kind != f.kind {
                                    self.diag(
                                        "kind",
                                        format!(
                                            "{}.{}: kind differs from trait {}",
                                            c.name, g.name, t.name
                                        ),
                                    );
                                }
                                if g.param.is_some() != f.param.is_some() {
                                    self.diag(
                                        "arity",
                                        format!(
                                            "{}.{}: parameter list differs from trait {}",
                                            c.name, g.name, t.name
                                        ),
                                    );
                                }
                            }
                        }
                    }
                    for m in &t.methods {
                        match c.methods.iter().find(|g| g.name == m.name) {
                            None => self.diag(
                                "implements",
                                format!("class {} does not implement method {}", c.name, m.name),
                            ),
                            Some(g) => {
                                let a: Vec<&Name> = g.params.iter().map(|x| &x.0).collect();
                                let b: Vec<&Name> = m.params.iter().map(|x| &x.0).collect();
                                if a != b {
                                    self.diag(
                                        "arity",
                                        format!(
                                            "{}.{}: parameters differ from trait {}",
                                            c.name, g.name, t.name
                                        ),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            for f in &c.functions {
                self.check_function(&owner, f, true);
            }
            for m in &c.methods {
                self.check_method(&owner, m, true);
            }
        }
    }

    fn check_fields(&mut self) {
        let mut seen: BTreeMap<Name, Ty> = BTreeMap::new();
        let p = self.p;
        let all = p
            .traits
            .iter()
            .map(|t| (&t.name, &t.fields))
            .chain(p.classes.iter().map(|c| (&c.name, &c.fields)));
        for (owner, fields) in all {
            for f in fields {
                if reserved::is_reserved(&f.name) {
                    self.diag("reserved", format!("{owner}.{}: reserved name", f.name));
                }
                self.check_ty(&format!("{owner}.{}", f.name), &f.ty);
                if let Some(t) = seen.get(&f.name) {
                    if t != &f.ty {
                        self.diag(
                            "field",
                            format!(
                                "field {} declared with types {} and {}",
                                f.name,
                                print_ty(t),
                                print_ty(&f.ty)
                            ),
                        );
                    }
                } else {
                    seen.insert(f.name.clone(), f.ty.clone());
                }
            }
        }
    }

    fn check_ty(&mut self, label: &str, t: &Ty) {
        let target = match t {
            Ty::Ref { target, .. } | Ty::Set(target) => target,
            _ => return,
        };
        if !self.p.is_class(target) && !self.p.is_trait(target) {
            self.diag("resolve", format!("{label}: unknown type {target}"));
        }
    }

    fn check_orders(&mut self) {
        let fnames = self.p.function_names();
        let mnames = self.p.method_names();
        for (which, o, names) in [
            ("functions", &self.p.orders.functions, &fnames),
            ("methods", &self.p.orders.methods, &mnames),
        ] {
            let mut cur = o.as_ref();
            while let Some(OrderSpec::Lex { ranks, then }) = cur {
                for r in ranks {
                    if !names.contains(r) {
                        self.diag(
                            "resolve",
                            format!("order {which}: unknown member {r} in lex ranks"),
                        );
                    }
                }
                cur = Some(then);
            }
        }
    }

    fn check_function(&mut self, owner: &Owner, f: &FuncDecl, is_class: bool) {
        let label = format!("{owner}.{}", f.name);
        let mut vars: BTreeSet<Name> = BTreeSet::new();
        vars.insert(reserved::THIS.into());
        if let Some((x, t)) = &f.param {
            if x != reserved::PARAM {
                self.diag(
                    "param",
                    format!("{label}: function parameter must be named x"),
                );
            }
            self.check_ty(&label, t);
            vars.insert(x.clone());
        }
        self.check_ty(&label, &f.ret_ty);
        match (is_class, &f.body) {
            (true, None) => self.diag("body", format!("{label}: missing body")),
            (false, Some(_)) => self.diag("body", format!("{label}: trait members have no body")),
            _ => {}
        }
        let mut with_ret = vars.clone();
        with_ret.insert(reserved::RET.into());

        let site = |l: &str, v| Site {
            label: format!("{label} {l}"),
            vars: Some(v),
            in_function_body: false,
        };
        self.check_expr(&site("requires", &vars), &f.requires);
        self.check_expr(&site("assumes", &vars), &f.assumes);
        self.check_expr(&site("reads", &vars), &f.reads);
        self.check_expr(&site("ensures", &with_ret), &f.ensures);
        if !call_free(&f.reads) {
            self.diag("callfree", format!("{label}: reads region not call-free"));
        }
        match &f.decreases {
            None => self.diag("measure", format!("{label}: missing decreases clause")),
            Some(d) => {
                self.check_expr(&site("decreases", &vars), d);
                if !call_free(d) {
                    self.diag("callfree", format!("{label}: measure not call-free"));
                }
            }
        }
        match f.kind {
            FuncKind::One => {
                if !call_free(&f.requires) {
                    self.diag(
                        "kind",
                        format!("{label}: kind-1 well-definedness condition not call-free"),
                    );
                }
            }
            FuncKind::Two => {
                let mut calls = Vec::new();
                collect_calls(&f.requires, &mut calls);
                for (o, g) in calls {
                    if let Some(callee) = self.p.func(&o, &g) {
                        if callee.kind != FuncKind::One {
                            self.diag(
                                "kind",
                                format!(
                                    "{label}: kind-2 well-definedness condition calls kind-2 function {o}.{g}"
                                ),
                            );
                        }
                    }
                }
            }
        }
        if let Some(b) = &f.body {
            let s = Site {
                label: format!("{label} body"),
                vars: Some(&vars),
                in_function_body: true,
            };
            self.check_expr(&s, b);
        }
    }

    fn check_method(&mut self, owner: &Owner, m: &MethodDecl, is_class: bool) {
        let label = format!("{owner}.{}", m.name);
        let mut params: BTreeSet<Name> = BTreeSet::new();
        params.insert(reserved::THIS.into());
        for (x, t) in &m.params {
            if reserved::is_reserved(x) {
                self.diag("reserved", format!("{label}: parameter {x} is reserved"));
            }
            if !params.insert(x.clone()) {
                self.diag("duplicate", format!("{label}: duplicate parameter {x}"));
            }
            self.check_ty(&label, t);
        }
        if m.ret.0 != reserved::RET {
            self.diag("ret", format!("{label}: result must be named ret"));
        }
        self.check_ty(&label, &m.ret.1);
        match (is_class, &m.body) {
            (true, None) => self.diag("body", format!("{label}: missing body")),
            (false, Some(_)) => self.diag("body", format!("{label}: trait members have no body")),
            _ => {}
        }
        let mut pre_vars = params.clone();
        pre_vars.insert(reserved::ALLOC.into());
        let mut post_vars = pre_vars.clone();
        post_vars.insert(reserved::RET.into());

        let site = |l: &str, v| Site {
            label: format!("{label} {l}"),
            vars: Some(v),
            in_function_body: false,
        };
        self.check_expr(&site("requires", &pre_vars), &m.requires);
        self.check_expr(&site("ensures", &post_vars), &m.ensures);
        self.check_expr(&site("modifies", &params), &m.modifies);
        if !call_free(&m.modifies) {
            self.diag(
                "callfree",
                format!("{label}: modifies region not call-free"),
            );
        }
        match &m.decreases {
            None => self.diag("measure", format!("{label}: missing decreases clause")),
            Some(Measure::Star) => {}
            Some(Measure::Expr(d)) => {
                self.check_expr(&site("decreases", &params), d);
                if !call_free(d) {
                    self.diag("callfree", format!("{label}: measure not call-free"));
                }
            }
        }
        if let Some(b) = &m.body {
            self.check_cmd(&label, &params, b);
        }
    }

    fn check_cmd(&mut self, label: &str, params: &BTreeSet<Name>, c: &Cmd) {
        let site = Site {
            label: format!("{label} body"),
            vars: None,
            in_function_body: false,
        };
        let assigned = |w: &mut Self, x: &Name| {
            if params.contains(x) {
                w.diag("assign", format!("{label}: body assigns parameter {x}"));
            } else if reserved::is_reserved(x) && x != reserved::RET {
                w.diag("assign", format!("{label}: body assigns reserved {x}"));
            }
        };
        match c {
            Cmd::Skip => {}
            Cmd::Assign(x, e) => {
                assigned(self, x);
                self.check_expr(&site, e);
            }
            Cmd::Write(x, f, e) => {
                if x == reserved::MSE || x == reserved::ALLOC {
                    self.diag("assign", format!("{label}: write through reserved {x}"));
                }
                if self.p.field_ty(f).is_none() {
                    self.diag("resolve", format!("{label}: unknown field {f}"));
                }
                self.check_expr(&site, e);
            }
            Cmd::Alloc(x, cl) => {
                assigned(self, x);
                if !self.p.is_class(cl) {
                    self.diag("resolve", format!("{label}: unknown class {cl}"));
                }
            }
            Cmd::If(b, t, f) => {
                self.check_expr(&site, b);
                if !call_free(b) {
                    self.diag("callfree", format!("{label}: if guard not call-free"));
                }
                self.check_cmd(label, params, t);
                self.check_cmd(label, params, f);
            }
            Cmd::Seq(a, b) => {
                self.check_cmd(label, params, a);
                self.check_cmd(label, params, b);
            }
            Cmd::Call {
                lhs,
                recv,
                method,
                owner,
                args,
            } => {
                assigned(self, lhs);
                self.check_owner(&site, owner);
                match self.p.method(owner, method) {
                    None => {
                        if self.p.is_class(owner.name()) || self.p.is_trait(owner.name()) {
                            self.diag(
                                "resolve",
                                format!("{label}: {owner} has no method {method}"),
                            );
                        }
                    }
                    Some(m) => {
                        if m.params.len() != args.len() {
                            self.diag(
                                "arity",
                                format!(
                                    "{label}: {owner}.{method} expects {} arguments, got {}",
                                    m.params.len(),
                                    args.len()
                                ),
                            );
                        }
                    }
                }
                for v in std::iter::once(recv).chain(args.iter()) {
                    if v == reserved::MSE {
                        self.diag("mse", format!("{label}: mse passed to a call"));
                    }
                }
            }
        }
    }

    fn check_owner(&mut self, site: &Site, owner: &Owner) {
        let ok = match owner {
            Owner::Class(c) => self.p.is_class(c),
            Owner::Trait(t) => self.p.is_trait(t),
        };
        if !ok {
            self.diag(
                "resolve",
                format!("{}: unknown class or trait {owner}", site.label),
            );
        }
    }

    fn check_expr(&mut self, site: &Site, e: &Expr) {
        match e {
            Expr::Var(x) => {
                if x == reserved::MSE {
                    self.diag("mse", format!("{}: mse may not occur here", site.label));
                } else if let Some(vars) = site.vars {
                    if !vars.contains(x) {
                        self.diag("resolve", format!("{}: unbound variable {x}", site.label));
                    }
                }
            }
            Expr::Lit(_) => {}
            Expr::Field(r, f) => {
                if self.p.field_ty(f).is_none() {
                    self.diag("resolve", format!("{}: unknown field {f}", site.label));
                }
                self.check_expr(site, r);
            }
            Expr::Ite(b, t, f) => {
                if site.in_function_body && !call_free(b) {
                    self.diag(
                        "callfree",
                        format!("{}: conditional guard not call-free", site.label),
                    );
                }
                self.check_expr(site, b);
                self.check_expr(site, t);
                self.check_expr(site, f);
            }
            Expr::Unary(_, a) => self.check_expr(site, a),
            Expr::Binary(_, a, b) => {
                self.check_expr(site, a);
                self.check_expr(site, b);
            }
            Expr::IsClass(a, c) => {
                if !self.p.is_class(c) {
                    self.diag("resolve", format!("{}: unknown class {c}", site.label));
                }
                self.check_expr(site, a);
            }
            Expr::IsTrait(a, t) => {
                if !self.p.is_trait(t) {
                    self.diag(
                        "resolve",
                        format!("{}: unknown class or trait {t}", site.label),
                    );
                }
                self.check_expr(site, a);
            }
            Expr::Call {
                recv,
                func,
                owner,
                arg,
            } => {
                self.check_owner(site, owner);
                if let Some(g) = self.p.func(owner, func) {
                    if g.param.is_some() != arg.is_some() {
                        self.diag(
                            "arity",
                            format!(
                                "{}: {owner}.{func} expects {} argument(s)",
                                site.label,
                                usize::from(g.param.is_some())
                            ),
                        );
                    }
                } else if self.p.is_class(owner.name()) || self.p.is_trait(owner.name()) {
                    self.diag(
                        "resolve",
                        format!("{}: {owner} has no function {func}", site.label),
                    );
                }
                if !call_free(recv) || arg.as_deref().is_some_and(|a| !call_free(a)) {
                    self.diag(
                        "callfree",
                        format!("{}: call receiver or argument not call-free", site.label),
                    );
                }
                self.check_expr(site, recv);
                if let Some(a) = arg {
                    self.check_expr(site, a);
                }
            }
        }
    }
}

pub fn collect_calls(e: &Expr, out: &mut Vec<(Owner, Name)>) {
    if let Expr::Call { func, owner, .. } = e {
        out.push((owner.clone(), func.clone()));
    }
    for c in e.children() {
        collect_calls(c, out);
    }
}
