//! Program-level obligations: entry soundness of virtual members, function
//! well-definedness, reads soundness, behavioural subtyping and
//! well-foundedness of the chosen orders.

use crate::entry::{EntryHead, MemberKind};
use crate::name::{reserved, Name};
use crate::obligation::{ObKind, Obligation};
use crate::syntax::types::{function_env, method_env, TypeEnv};
use crate::syntax::{and_all, conjuncts, Expr, FuncKind, Owner, Program};
use crate::wd::Layer;

fn layer(k: FuncKind) -> Layer {
    match k {
        FuncKind::One => Layer::One,
        FuncKind::Two => Layer::Two,
    }
}

fn with_this_is(e: &Expr, class: &Name) -> Expr {
    let mut cs: Vec<Expr> = conjuncts(e).into_iter().cloned().collect();
    cs.push(Expr::IsClass(
        Box::new(Expr::var(reserved::THIS)),
        class.clone(),
    ));
    and_all(cs)
}

fn push(out: &mut Vec<Obligation>, tag: String, kind: ObKind, env: TypeEnv) {
    let id = format!("entry/{}/{tag}", kind.name());
    out.push(Obligation::new(id, kind, tag, env));
}

pub fn entry_obligations(p: &Program) -> Vec<Obligation> {
    let mut out = Vec::new();
    for c in &p.classes {
        let cname = c.name.clone();
        let cown = Owner::Class(cname.clone());
        let Some(t) = p.trait_decl(&c.extends) else {
            continue;
        };
        let town = Owner::Trait(t.name.clone());
        for tf in &t.functions {
            let Some(cf) = p.func(&cown, &tf.name) else {
                continue;
            };
            let env = function_env(&cown, cf);
            let tag = format!("{}.{}", cname, tf.name);
            if tf.decreases.is_some() && cf.decreases.is_some() {
                let mut venv = env.clone();
                venv.remove(reserved::MSE);
                push(
                    &mut out,
                    tag.clone(),
                    ObKind::VirtualEntrySound {
                        kind: MemberKind::Function,
                        class: cname.clone(),
                        tr: t.name.clone(),
                        member: tf.name.clone(),
                    },
                    venv,
                );
            }
            push(
                &mut out,
                tag.clone(),
                ObKind::DfcRefine {
                    layer: layer(tf.kind),
                    tr: t.name.clone(),
                    class: cname.clone(),
                    func: tf.name.clone(),
                },
                env.clone(),
            );
            push(
                &mut out,
                format!("{tag}@{}", t.name),
                ObKind::ReadsSound {
                    reads_of: EntryHead::new(town.clone(), &tf.name),
                    class: cname.clone(),
                    func: tf.name.clone(),
                },
                env.clone(),
            );
        }
        for cf in &c.functions {
            if cf.body.is_none() {
                continue;
            }
            let env = function_env(&cown, cf);
            let tag = format!("{}.{}", cname, cf.name);
            push(
                &mut out,
                tag.clone(),
                ObKind::Fdf {
                    layer: layer(cf.kind),
                    class: cname.clone(),
                    func: cf.name.clone(),
                },
                env.clone(),
            );
            push(
                &mut out,
                format!("{tag}@{cname}"),
                ObKind::ReadsSound {
                    reads_of: EntryHead::new(cown.clone(), &cf.name),
                    class: cname.clone(),
                    func: cf.name.clone(),
                },
                env,
            );
        }
        for tm in &t.methods {
            let Some(cm) = p.method(&cown, &tm.name) else {
                continue;
            };
            let tag = format!("{}.{}", cname, tm.name);
            let env = method_env(p, &cown, cm);
            push(
                &mut out,
                tag.clone(),
                ObKind::TotalAbstraction {
                    class: cname.clone(),
                    tr: t.name.clone(),
                    method: tm.name.clone(),
                },
                TypeEnv::new(),
            );
            if tm.is_total() && cm.is_total() {
                push(
                    &mut out,
                    tag.clone(),
                    ObKind::VirtualEntrySound {
                        kind: MemberKind::Method,
                        class: cname.clone(),
                        tr: t.name.clone(),
                        member: tm.name.clone(),
                    },
                    env.clone(),
                );
            }
            out.push(Obligation::new(
                format!("entry/SUBTYPE_PRE/{tag}"),
                ObKind::Implies {
                    pre: with_this_is(&tm.requires, &cname),
                    post: cm.requires.clone(),
                },
                tag.clone(),
                env.clone(),
            ));
            out.push(Obligation::new(
                format!("entry/SUBTYPE_POST/{tag}"),
                ObKind::Implies {
                    pre: with_this_is(&cm.ensures, &cname),
                    post: tm.ensures.clone(),
                },
                tag,
                env,
            ));
        }
    }
    for kind in [MemberKind::Function, MemberKind::Method] {
        let k = ObKind::WellFounded { kind };
        out.push(Obligation::new(
            format!("entry/{}", k.name()),
            k,
            "orders".into(),
            TypeEnv::new(),
        ));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}
