//! Entry-indexed total correctness for a procedures-only language: programs,
//! derivation checking and the fuel-free interpreter with its Cast bridge.
//!
//! A procedure `p(x)` has a call-free precondition, postcondition and
//! measure over its parameter. Calls `a := p(e)` start the callee on a stack
//! holding only `x`; the callee's final `ret` is assigned to `a`.

pub mod check;
pub mod interp;

use std::collections::BTreeSet;

use crate::name::{reserved, Name};
use crate::syntax::{call_free, fv, parse_expr, Diagnostic, Expr};

pub use check::{simple_check, SimpleChecked, SimpleNode, SimpleRule};
pub use interp::{simple_inter_p, simple_inter_t, SimpleOutcome, SimpleRun};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SCmd {
    Skip,
    Asn(Name, Expr),
    Seq(Box<SCmd>, Box<SCmd>),
    If(Expr, Box<SCmd>, Box<SCmd>),
    Call { lhs: Name, proc: Name, arg: Expr },
}

impl SCmd {
    /// Variables the command may assign.
    pub fn mod_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.mods_into(&mut out);
        out
    }

    fn mods_into(&self, out: &mut BTreeSet<Name>) {
        match self {
            SCmd::Skip => {}
            SCmd::Asn(a, _) | SCmd::Call { lhs: a, .. } => {
                out.insert(a.clone());
            }
            SCmd::Seq(a, b) | SCmd::If(_, a, b) => {
                a.mods_into(out);
                b.mods_into(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proc {
    pub name: Name,
    pub param: Name,
    pub pre: Expr,
    pub post: Expr,
    pub measure: Expr,
    pub body: SCmd,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimpleProgram {
    pub procs: Vec<Proc>,
}

impl SimpleProgram {
    pub fn proc(&self, name: &str) -> Option<&Proc> {
        self.procs.iter().find(|p| p.name == *name)
    }
}

fn err(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new("SIMPLE_SYNTAX", msg)
}

fn strip_comments(src: &str) -> String {
    src.lines()
        .map(|l| l.split("//").next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn ident_at(s: &str) -> Option<(&str, &str)> {
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
        .map_or(s.len(), |(i, _)| i);
    (end > 0 && !s.as_bytes()[0].is_ascii_digit()).then(|| (&s[..end], &s[end..]))
}

fn keyword<'a>(s: &'a str, kw: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(kw)?;
    match rest.chars().next() {
        Some(c) if c.is_alphanumeric() || c == '_' => None,
        _ => Some(rest.trim_start()),
    }
}

/// Splits `s` at the first `{` outside parentheses, returning text before it.
fn until_brace(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '{' if depth == 0 => return Some((&s[..i], &s[i..])),
            _ => {}
        }
    }
    None
}

/// Given text starting with `{`, returns the block contents and the rest.
fn block(s: &str) -> Result<(&str, &str), Diagnostic> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((&s[1..i], s[i + 1..].trim_start()));
                }
            }
            _ => {}
        }
    }
    Err(err("unbalanced braces"))
}

fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '{' | '(' => depth += 1,
            '}' | ')' => depth -= 1,
            ';' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn expr(src: &str) -> Result<Expr, Diagnostic> {
    let e = parse_expr(src.trim()).map_err(|d| err(format!("`{}`: {}", src.trim(), d.message)))?;
    if !call_free(&e) {
        return Err(err(format!("`{}` must be call-free", src.trim())));
    }
    Ok(e)
}

struct Reader {
    procs: BTreeSet<String>,
}

impl Reader {
    fn cmds(&self, s: &str) -> Result<SCmd, Diagnostic> {
        let mut cmds = Vec::new();
        for st in split_top(s) {
            let st = st.trim();
            if !st.is_empty() {
                cmds.push(self.cmd(st)?);
            }
        }
        let mut acc = cmds.pop().unwrap_or(SCmd::Skip);
        while let Some(c) = cmds.pop() {
            acc = SCmd::Seq(Box::new(c), Box::new(acc));
        }
        Ok(acc)
    }

    fn cmd(&self, s: &str) -> Result<SCmd, Diagnostic> {
        if s == "skip" {
            return Ok(SCmd::Skip);
        }
        if let Some(rest) = keyword(s, "if") {
            let (g, rest) = until_brace(rest).ok_or_else(|| err("if without a block"))?;
            let (t, rest) = block(rest)?;
            let e = match keyword(rest, "else") {
                Some(r) if r.starts_with('{') => {
                    let (e, tail) = block(r)?;
                    if !tail.is_empty() {
                        return Err(err(format!("unexpected `{tail}` after else block")));
                    }
                    self.cmds(e)?
                }
                Some(r) => self.cmd(r)?,
                None if rest.is_empty() => SCmd::Skip,
                None => return Err(err(format!("unexpected `{rest}` after if block"))),
            };
            return Ok(SCmd::If(
                expr(g)?,
                Box::new(self.cmds(t)?),
                Box::new(e),
            ));
        }
        let (lhs, rest) = s
            .split_once(":=")
            .ok_or_else(|| err(format!("expected an assignment, found `{s}`")))?;
        let lhs = Name::from(lhs.trim());
        if ident_at(&lhs).map(|(i, r)| i.len() != lhs.len() || !r.is_empty()) != Some(false) {
            return Err(err(format!("`{lhs}` is not a variable")));
        }
        let rhs = rest.trim();
        if let Some((f, tail)) = ident_at(rhs) {
            let tail = tail.trim_start();
            if self.procs.contains(f) && tail.starts_with('(') && tail.ends_with(')') {
                return Ok(SCmd::Call {
                    lhs,
                    proc: Name::from(f),
                    arg: expr(&tail[1..tail.len() - 1])?,
                });
            }
        }
        Ok(SCmd::Asn(lhs, expr(rhs)?))
    }
}

/// Parses `proc p(x) requires P ensures Q decreases m { body }` declarations.
pub fn parse_simple(src: &str) -> Result<SimpleProgram, Diagnostic> {
    let src = strip_comments(src);
    let mut names = BTreeSet::new();
    let mut scan = src.as_str();
    while let Some(i) = scan.find("proc") {
        if let Some((n, _)) = ident_at(scan[i + 4..].trim_start()) {
            names.insert(n.to_string());
        }
        scan = &scan[i + 4..];
    }
    let rd = Reader { procs: names };
    let mut out = SimpleProgram::default();
    let mut rest = src.trim_start();
    while !rest.is_empty() {
        let r = keyword(rest, "proc").ok_or_else(|| err("expected `proc`"))?;
        let (name, r) = ident_at(r).ok_or_else(|| err("expected a procedure name"))?;
        let r = r.trim_start().strip_prefix('(').ok_or_else(|| err("expected `(`"))?;
        let (param, r) = ident_at(r.trim_start()).ok_or_else(|| err("expected a parameter"))?;
        let r = r.trim_start().strip_prefix(')').ok_or_else(|| err("expected `)`"))?;
        let (head, r) = until_brace(r).ok_or_else(|| err("procedure without a body"))?;
        let (body, r) = block(r)?;
        let mut clauses = [None, None, None];
        let mut h = head.trim();
        while !h.is_empty() {
            let (i, tail) = ["requires", "ensures", "decreases"]
                .iter()
                .enumerate()
                .find_map(|(i, kw)| keyword(h, kw).map(|t| (i, t)))
                .ok_or_else(|| err(format!("unexpected `{h}` in procedure header")))?;
            let end = ["requires", "ensures", "decreases"]
                .iter()
                .filter_map(|kw| tail.find(kw))
                .min()
                .unwrap_or(tail.len());
            clauses[i] = Some(expr(&tail[..end])?);
            h = tail[end..].trim();
        }
        let [pre, post, measure] = clauses;
        let p = Proc {
            name: Name::from(name),
            param: Name::from(param),
            pre: pre.unwrap_or_else(|| Expr::bool(true)),
            post: post.unwrap_or_else(|| Expr::bool(true)),
            measure: measure.ok_or_else(|| err(format!("{name} needs a decreases clause")))?,
            body: rd.cmds(body)?,
        };
        out.procs.push(p);
        rest = r.trim_start();
    }
    wellformed(&out)?;
    Ok(out)
}

fn wellformed(p: &SimpleProgram) -> Result<(), Diagnostic> {
    let mut seen = BTreeSet::new();
    for q in &p.procs {
        if !seen.insert(q.name.clone()) {
            return Err(err(format!("procedure {} declared twice", q.name)));
        }
        let only_x = |e: &Expr| fv(e).iter().all(|v| *v == q.param);
        if !only_x(&q.measure) || !only_x(&q.pre) {
            return Err(err(format!(
                "{}: precondition and measure may mention only {}",
                q.name, q.param
            )));
        }
        if fv(&q.post)
            .iter()
            .any(|v| *v != q.param && v != reserved::RET)
        {
            return Err(err(format!(
                "{}: postcondition may mention only {} and ret",
                q.name, q.param
            )));
        }
        let mods = q.body.mod_vars();
        if mods.contains(&q.param) || mods.contains(reserved::MSE) {
            return Err(err(format!(
                "{}: the body may not assign {} or mse",
                q.name, q.param
            )));
        }
        check_calls(p, &q.body)?;
    }
    Ok(())
}

fn check_calls(p: &SimpleProgram, c: &SCmd) -> Result<(), Diagnostic> {
    match c {
        SCmd::Call { proc, .. } if p.proc(proc).is_none() => {
            Err(err(format!("call of undeclared procedure {proc}")))
        }
        SCmd::Seq(a, b) | SCmd::If(_, a, b) => {
            check_calls(p, a)?;
            check_calls(p, b)
        }
        _ => Ok(()),
    }
}

/// Parses a command against the procedure names of `p`.
pub fn parse_scmd(p: &SimpleProgram, src: &str) -> Result<SCmd, Diagnostic> {
    let rd = Reader {
        procs: p.procs.iter().map(|q| q.name.to_string()).collect(),
    };
    rd.cmds(&strip_comments(src))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn countdown_parses() {
        let p = parse_simple(include_str!("../../corpus/countdown.simple")).unwrap();
        let q = p.proc("p").unwrap();
        assert_eq!(q.param.as_str(), "x");
        assert_eq!(q.measure, Expr::var("x"));
        let SCmd::If(_, t, e) = &q.body else {
            panic!("expected a conditional body")
        };
        assert_eq!(**t, SCmd::Skip);
        assert!(matches!(&**e, SCmd::Call { lhs, .. } if lhs.as_str() == "y"));
    }

    #[test]
    fn rejects_assigning_the_parameter() {
        let src = "proc p(x) decreases x { x := 1 }";
        assert!(parse_simple(src).is_err());
    }

    #[test]
    fn sequences_and_nested_ifs() {
        let p = parse_simple("proc p(x) decreases x { a := 1; if a == 1 { b := 2 } else if a == 2 { b := 3 }; c := p(0) }")
            .unwrap();
        assert_eq!(p.procs[0].body.mod_vars().len(), 3);
    }
}
