//! Canonical pretty-printer. `parse(print(p)) == p` for every AST.

use std::fmt::Write as _;

use super::ast::*;

const P_ITE: u8 = 0;
const P_IMPLIES: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_UNARY: u8 = 7;
const P_POSTFIX: u8 = 8;
const P_ATOM: u8 = 9;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Ite(..) => P_ITE,
        Expr::Binary(op, ..) => match op {
            BinOp::Implies => P_IMPLIES,
            BinOp::Or => P_OR,
            BinOp::And => P_AND,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::In | BinOp::NotIn => P_CMP,
            BinOp::Add | BinOp::Sub => P_ADD,
            BinOp::Mul => P_MUL,
        },
        Expr::Unary(UnOp::Not, _) => P_UNARY,
        Expr::Field(..) | Expr::Call { .. } | Expr::IsClass(..) | Expr::IsTrait(..) => P_POSTFIX,
        Expr::Var(_) | Expr::Lit(_) | Expr::Unary(UnOp::Singleton, _) => P_ATOM,
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let p = prec(e);
    let paren = p < min;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Var(x) => out.push_str(x),
        Expr::Lit(l) => match l {
            Lit::Nat(n) => {
                let _ = write!(out, "{n}");
            }
            Lit::Bool(b) => {
                let _ = write!(out, "{b}");
            }
            Lit::Null => out.push_str("null"),
            Lit::EmptySet => out.push_str("{}"),
        },
        Expr::Field(r, f) => {
            write_expr(out, r, P_POSTFIX);
            out.push('.');
            out.push_str(f);
        }
        Expr::Call {
            recv,
            func,
            owner,
            arg,
        } => {
            write_expr(out, recv, P_POSTFIX);
            let _ = write!(out, ".{func}@{owner}(");
            if let Some(a) = arg {
                write_expr(out, a, 0);
            }
            out.push(')');
        }
        Expr::IsClass(r, n) | Expr::IsTrait(r, n) => {
            write_expr(out, r, P_POSTFIX);
            let _ = write!(out, " is {n}");
        }
        Expr::Ite(b, t, f) => {
            out.push_str("if ");
            write_expr(out, b, P_IMPLIES);
            out.push_str(" then ");
            write_expr(out, t, 0);
            out.push_str(" else ");
            write_expr(out, f, 0);
        }
        Expr::Unary(UnOp::Not, a) => {
            out.push('!');
            write_expr(out, a, P_UNARY);
        }
        Expr::Unary(UnOp::Singleton, a) => {
            out.push('{');
            write_expr(out, a, 0);
            out.push('}');
        }
        Expr::Binary(op, a, b) => {
            let (lm, rm) = match op {
                BinOp::Implies => (P_IMPLIES + 1, P_IMPLIES),
                _ if p == P_CMP => (P_CMP + 1, P_CMP + 1),
                _ => (p, p + 1),
            };
            write_expr(out, a, lm);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, b, rm);
        }
    }
    if paren {
        out.push(')');
    }
}

pub fn print_ty(t: &Ty) -> String {
    match t {
        Ty::Nat => "nat".into(),
        Ty::Bool => "bool".into(),
        Ty::Ref { target, nullable } => {
            format!("{target}{}", if *nullable { "?" } else { "" })
        }
        Ty::Set(n) => format!("set<{n}>"),
    }
}

pub fn print_cmd(c: &Cmd) -> String {
    let mut s = String::new();
    write_cmd(&mut s, c, 0);
    s
}

fn indent(out: &mut String, n: usize) {
    for _ in 0..n {
        out.push_str("  ");
    }
}

fn write_cmd(out: &mut String, c: &Cmd, ind: usize) {
    match c {
        Cmd::Skip => out.push_str("skip"),
        Cmd::Assign(x, e) => {
            let _ = write!(out, "{x} := {}", print_expr(e));
        }
        Cmd::Write(x, f, e) => {
            let _ = write!(out, "{x}.{f} := {}", print_expr(e));
        }
        Cmd::Alloc(x, cl) => {
            let _ = write!(out, "{x} := new {cl}");
        }
        Cmd::Call {
            lhs,
            recv,
            method,
            owner,
            args,
        } => {
            let args: Vec<&str> = args.iter().map(|a| a.as_str()).collect();
            let _ = write!(out, "{lhs} := {recv}.{method}@{owner}({})", args.join(", "));
        }
        Cmd::If(b, t, f) => {
            let _ = writeln!(out, "if {} {{", print_expr(b));
            indent(out, ind + 1);
            write_cmd(out, t, ind + 1);
            out.push('\n');
            indent(out, ind);
            out.push_str("} else {\n");
            indent(out, ind + 1);
            write_cmd(out, f, ind + 1);
            out.push('\n');
            indent(out, ind);
            out.push('}');
        }
        Cmd::Seq(a, b) => {
            if matches!(**a, Cmd::Seq(..)) {
                out.push_str("{\n");
                indent(out, ind + 1);
                write_cmd(out, a, ind + 1);
                out.push('\n');
                indent(out, ind);
                out.push('}');
            } else {
                write_cmd(out, a, ind);
            }
            out.push_str(";\n");
            indent(out, ind);
            write_cmd(out, b, ind);
        }
    }
}

pub fn print_order(o: &OrderSpec) -> String {
    match o {
        OrderSpec::NatLt => "nat_lt".into(),
        OrderSpec::ProperSubset => "subset".into(),
        OrderSpec::Lex { ranks, then } => {
            let r: Vec<&str> = ranks.iter().map(|n| n.as_str()).collect();
            format!("lex({}) {}", r.join(", "), print_order(then))
        }
    }
}

fn write_func(out: &mut String, f: &FuncDecl) {
    let param = match &f.param {
        Some((x, t)) => format!("{x}: {}", print_ty(t)),
        None => String::new(),
    };
    let _ = writeln!(
        out,
        "  function {}({param}): (ret: {})",
        f.name,
        print_ty(&f.ret_ty)
    );
    let _ = writeln!(out, "    requires {}", print_expr(&f.requires));
    let _ = writeln!(out, "    assumes {}", print_expr(&f.assumes));
    let _ = writeln!(out, "    reads {}", print_expr(&f.reads));
    if let Some(d) = &f.decreases {
        let _ = writeln!(out, "    decreases {}", print_expr(d));
    }
    let _ = writeln!(out, "    ensures {}", print_expr(&f.ensures));
    let k = match f.kind {
        FuncKind::One => 1,
        FuncKind::Two => 2,
    };
    match &f.body {
        Some(b) => {
            let _ = writeln!(out, "    kind {k}");
            let _ = writeln!(out, "  {{\n    {}\n  }}", print_expr(b));
        }
        None => {
            let _ = writeln!(out, "    kind {k};");
        }
    }
}

fn write_method(out: &mut String, m: &MethodDecl) {
    let params: Vec<String> = m
        .params
        .iter()
        .map(|(x, t)| format!("{x}: {}", print_ty(t)))
        .collect();
    let _ = writeln!(
        out,
        "  method {}({}) returns ({}: {})",
        m.name,
        params.join(", "),
        m.ret.0,
        print_ty(&m.ret.1)
    );
    let _ = writeln!(out, "    requires {}", print_expr(&m.requires));
    let _ = writeln!(out, "    modifies {}", print_expr(&m.modifies));
    match &m.decreases {
        Some(Measure::Expr(e)) => {
            let _ = writeln!(out, "    decreases {}", print_expr(e));
        }
        Some(Measure::Star) => {
            let _ = writeln!(out, "    decreases *");
        }
        None => {}
    }
    match &m.body {
        Some(b) => {
            let _ = writeln!(out, "    ensures {}", print_expr(&m.ensures));
            out.push_str("  {\n    ");
            write_cmd(out, b, 2);
            out.push_str("\n  }\n");
        }
        None => {
            let _ = writeln!(out, "    ensures {};", print_expr(&m.ensures));
        }
    }
}

fn write_members(out: &mut String, fields: &[FieldDecl], fs: &[FuncDecl], ms: &[MethodDecl]) {
    for f in fields {
        let _ = writeln!(out, "  var {}: {};", f.name, print_ty(&f.ty));
    }
    for f in fs {
        write_func(out, f);
    }
    for m in ms {
        write_method(out, m);
    }
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if let Some(o) = &p.orders.functions {
        let _ = writeln!(out, "order functions {};", print_order(o));
    }
    if let Some(o) = &p.orders.methods {
        let _ = writeln!(out, "order methods {};", print_order(o));
    }
    for t in &p.traits {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "trait {} {{", t.name);
        write_members(&mut out, &t.fields, &t.functions, &t.methods);
        out.push_str("}\n");
    }
    for c in &p.classes {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "class {} extends {} {{", c.name, c.extends);
        write_members(&mut out, &c.fields, &c.functions, &c.methods);
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_expr;

    fn rt(s: &str) {
        let e = parse_expr(s).unwrap();
        let printed = print_expr(&e);
        assert_eq!(parse_expr(&printed).unwrap(), e, "{s} printed as {printed}");
    }

    #[test]
    fn expr_round_trips() {
        for s in [
            "a - (b - c)",
            "(a - b) - c",
            "(a ==> b) ==> c",
            "!(a && b)",
            "(if a then b else c) + 1",
            "if (if a then b else c) then d else e",
            "(x + y).f",
            "(a == b) == c",
            "{a} + {b} - {}",
            "this.nt.valid@Pizza() && !(this in this.nt.fp)",
            "(a + b) is C",
            "!a is C",
        ] {
            rt(s);
        }
    }

    #[test]
    fn canonical_spacing() {
        let e = parse_expr("a+b*c<=d").unwrap();
        assert_eq!(print_expr(&e), "a + b * c <= d");
    }
}
