//! Recursive-descent parser for `.xrl` sources.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{lex, Tok};
use super::Diagnostic;
use crate::name::Name;

const KEYWORDS: &[&str] = &[
    "trait",
    "class",
    "extends",
    "var",
    "function",
    "method",
    "returns",
    "requires",
    "assumes",
    "reads",
    "modifies",
    "decreases",
    "ensures",
    "kind",
    "if",
    "then",
    "else",
    "true",
    "false",
    "null",
    "in",
    "is",
    "new",
    "return",
    "skip",
    "order",
];

/// Names that disambiguate surface forms: `@X` resolves to a class owner when
/// `X` is a class, and `y.m@X(..)` is a method call when `m` is a method.
#[derive(Clone, Debug, Default)]
pub struct ParseCtx {
    pub classes: BTreeSet<String>,
    pub methods: BTreeSet<String>,
}

impl ParseCtx {
    pub fn of_program(p: &Program) -> Self {
        ParseCtx {
            classes: p.classes.iter().map(|c| c.name.to_string()).collect(),
            methods: p.method_names().iter().map(|m| m.to_string()).collect(),
        }
    }
}

pub fn parse_program(src: &str) -> Result<Program, Vec<Diagnostic>> {
    let toks = lex(src).map_err(|d| vec![d])?;
    let ctx = prescan(&toks);
    let mut p = Parser { toks, i: 0, ctx };
    p.program()
}

pub fn parse_expr(src: &str) -> Result<Expr, Diagnostic> {
    parse_expr_with(src, &ParseCtx::default())
}

pub fn parse_expr_with(src: &str, ctx: &ParseCtx) -> Result<Expr, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        i: 0,
        ctx: ctx.clone(),
    };
    let e = p.expr()?;
    p.expect(&Tok::Eof)?;
    Ok(e)
}

pub fn parse_cmd(src: &str, ctx: &ParseCtx) -> Result<Cmd, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        i: 0,
        ctx: ctx.clone(),
    };
    let c = p.cmd_seq(&Tok::Eof)?;
    p.expect(&Tok::Eof)?;
    Ok(c)
}

fn prescan(toks: &[(Tok, Pos)]) -> ParseCtx {
    let mut ctx = ParseCtx::default();
    for w in toks.windows(2) {
        if let (Tok::Ident(kw), Tok::Ident(name)) = (&w[0].0, &w[1].0) {
            match kw.as_str() {
                "class" => {
                    ctx.classes.insert(name.clone());
                }
                "method" => {
                    ctx.methods.insert(name.clone());
                }
                _ => {}
            }
        }
    }
    ctx
}

#[derive(Default)]
struct FuncParts {
    requires: Option<Expr>,
    assumes: Option<Expr>,
    reads: Option<Expr>,
    decreases: Option<Expr>,
    ensures: Option<Expr>,
    kind: Option<FuncKind>,
}

#[derive(Default)]
struct MethParts {
    requires: Option<Expr>,
    modifies: Option<Expr>,
    decreases: Option<Measure>,
    ensures: Option<Expr>,
}

struct RawFunc {
    decl: FuncDecl,
    parts: FuncParts,
}

struct RawMethod {
    decl: MethodDecl,
    parts: MethParts,
}

struct RawBody {
    fields: Vec<FieldDecl>,
    funcs: Vec<RawFunc>,
    methods: Vec<RawMethod>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    ctx: ParseCtx,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::at("syntax", msg, self.pos()))
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.peek() == t {
            self.advance();
            Ok(())
        } else {
            let found = self.peek().describe();
            self.err(format!("expected {}, found {found}", t.describe()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            let found = self.peek().describe();
            self.err(format!("expected `{kw}`, found {found}"))
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(Name::from(s))
            }
            t => self.err(format!("expected identifier, found {}", t.describe())),
        }
    }

    fn owner(&self, n: Name) -> Owner {
        if self.ctx.classes.contains(n.as_str()) {
            Owner::Class(n)
        } else {
            Owner::Trait(n)
        }
    }

    // ---- declarations ----

    fn program(&mut self) -> Result<Program, Vec<Diagnostic>> {
        let mut prog = Program::default();
        let mut raw_traits: Vec<(Name, Pos, RawBody)> = Vec::new();
        let mut raw_classes: Vec<(Name, Name, Pos, RawBody)> = Vec::new();
        let mut diags = Vec::new();
        while self.peek() != &Tok::Eof {
            let pos = self.pos();
            let r: PResult<()> = (|| {
                if self.eat_kw("order") {
                    let which = self.ident()?;
                    let spec = self.order_spec()?;
                    self.expect(&Tok::Semi)?;
                    let slot = match which.as_str() {
                        "functions" => &mut prog.orders.functions,
                        "methods" => &mut prog.orders.methods,
                        _ => {
                            return Err(Diagnostic::at(
                                "syntax",
                                "expected `functions` or `methods` after `order`",
                                pos,
                            ))
                        }
                    };
                    if slot.is_some() {
                        return Err(Diagnostic::at(
                            "duplicate",
                            format!("duplicate order declaration for {which}"),
                            pos,
                        ));
                    }
                    *slot = Some(spec);
                } else if self.eat_kw("trait") {
                    let name = self.ident()?;
                    let body = self.decl_body()?;
                    raw_traits.push((name, pos, body));
                } else if self.eat_kw("class") {
                    let name = self.ident()?;
                    self.expect_kw("extends")?;
                    let ext = self.ident()?;
                    let body = self.decl_body()?;
                    raw_classes.push((name, ext, pos, body));
                } else {
                    let found = self.peek().describe();
                    return self.err(format!(
                        "expected `trait`, `class` or `order`, found {found}"
                    ));
                }
                Ok(())
            })();
            if let Err(d) = r {
                diags.push(d);
                return Err(diags);
            }
        }
        if raw_traits.is_empty() && raw_classes.is_empty() {
            return Err(vec![Diagnostic::new("empty", "no declarations")]);
        }

        let mut seen: BTreeSet<Name> = BTreeSet::new();
        for (n, pos) in raw_traits
            .iter()
            .map(|t| (&t.0, t.1))
            .chain(raw_classes.iter().map(|c| (&c.0, c.2)))
        {
            if !seen.insert(n.clone()) {
                diags.push(Diagnostic::at(
                    "duplicate",
                    format!("duplicate declaration `{n}`"),
                    pos,
                ));
            }
        }
        for (_, _, body) in &raw_traits {
            check_member_dups(body, &mut diags);
        }
        for (_, _, _, body) in &raw_classes {
            check_member_dups(body, &mut diags);
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        for (name, pos, body) in raw_traits {
            prog.traits.push(TraitDecl {
                name,
                fields: body.fields,
                functions: body
                    .funcs
                    .into_iter()
                    .map(|f| finish_func(f, None))
                    .collect(),
                methods: body
                    .methods
                    .into_iter()
                    .map(|m| finish_method(m, None))
                    .collect(),
                pos,
            });
        }
        for (name, ext, pos, body) in raw_classes {
            let tr = prog.traits.iter().find(|t| t.name == ext).cloned();
            let functions = body
                .funcs
                .into_iter()
                .map(|f| {
                    let inh = tr
                        .as_ref()
                        .and_then(|t| t.functions.iter().find(|g| g.name == f.decl.name));
                    finish_func(f, inh)
                })
                .collect();
            let methods = body
                .methods
                .into_iter()
                .map(|m| {
                    let inh = tr
                        .as_ref()
                        .and_then(|t| t.methods.iter().find(|g| g.name == m.decl.name));
                    finish_method(m, inh)
                })
                .collect();
            prog.classes.push(ClassDecl {
                name,
                extends: ext,
                fields: body.fields,
                functions,
                methods,
                pos,
            });
        }
        Ok(prog)
    }

    fn order_spec(&mut self) -> PResult<OrderSpec> {
        let name = self.ident()?;
        match name.as_str() {
            "nat_lt" => Ok(OrderSpec::NatLt),
            "subset" => Ok(OrderSpec::ProperSubset),
            "lex" => {
                self.expect(&Tok::LParen)?;
                let mut ranks = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        ranks.push(self.ident()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(&Tok::Comma)?;
                    }
                }
                let then = self.order_spec()?;
                Ok(OrderSpec::Lex {
                    ranks,
                    then: Box::new(then),
                })
            }
            other => self.err(format!("unknown order `{other}`")),
        }
    }

    fn decl_body(&mut self) -> PResult<RawBody> {
        self.expect(&Tok::LBrace)?;
        let mut body = RawBody {
            fields: vec![],
            funcs: vec![],
            methods: vec![],
        };
        while !self.eat(&Tok::RBrace) {
            let pos = self.pos();
            if self.eat_kw("var") {
                let name = self.ident()?;
                self.expect(&Tok::Colon)?;
                let ty = self.ty()?;
                self.eat(&Tok::Semi);
                body.fields.push(FieldDecl { name, ty, pos });
            } else if self.eat_kw("function") {
                body.funcs.push(self.function(pos)?);
            } else if self.eat_kw("method") {
                body.methods.push(self.method(pos)?);
            } else {
                let found = self.peek().describe();
                return self.err(format!(
                    "expected `var`, `function`, `method` or `}}`, found {found}"
                ));
            }
        }
        Ok(body)
    }

    fn ty(&mut self) -> PResult<Ty> {
        let name = self.ident()?;
        match name.as_str() {
            "nat" | "int" => Ok(Ty::Nat),
            "bool" => Ok(Ty::Bool),
            "set" => {
                self.expect(&Tok::Lt)?;
                let t = self.ident()?;
                self.expect(&Tok::Gt)?;
                Ok(Ty::Set(t))
            }
            _ => {
                let nullable = self.eat(&Tok::Question);
                Ok(Ty::Ref {
                    target: name,
                    nullable,
                })
            }
        }
    }

    fn function(&mut self, pos: Pos) -> PResult<RawFunc> {
        let name = self.ident()?;
        self.expect(&Tok::LParen)?;
        let param = if self.eat(&Tok::RParen) {
            None
        } else {
            let x = self.ident()?;
            self.expect(&Tok::Colon)?;
            let t = self.ty()?;
            self.expect(&Tok::RParen)?;
            Some((x, t))
        };
        self.expect(&Tok::Colon)?;
        let ret_ty = if self.eat(&Tok::LParen) {
            self.ident()?;
            self.expect(&Tok::Colon)?;
            let t = self.ty()?;
            self.expect(&Tok::RParen)?;
            t
        } else {
            self.ty()?
        };
        let mut parts = FuncParts::default();
        loop {
            let cpos = self.pos();
            let slot_name = match self.peek() {
                Tok::Ident(s) => s.clone(),
                _ => break,
            };
            let dup = |set: bool| -> PResult<()> {
                if set {
                    Err(Diagnostic::at(
                        "duplicate",
                        format!("duplicate `{slot_name}` clause"),
                        cpos,
                    ))
                } else {
                    Ok(())
                }
            };
            match slot_name.as_str() {
                "requires" => {
                    self.advance();
                    dup(parts.requires.is_some())?;
                    parts.requires = Some(self.expr()?);
                }
                "assumes" => {
                    self.advance();
                    dup(parts.assumes.is_some())?;
                    parts.assumes = Some(self.expr()?);
                }
                "reads" => {
                    self.advance();
                    dup(parts.reads.is_some())?;
                    parts.reads = Some(self.expr()?);
                }
                "decreases" => {
                    self.advance();
                    dup(parts.decreases.is_some())?;
                    parts.decreases = Some(self.expr()?);
                }
                "ensures" => {
                    self.advance();
                    dup(parts.ensures.is_some())?;
                    parts.ensures = Some(self.expr()?);
                }
                "kind" => {
                    self.advance();
                    dup(parts.kind.is_some())?;
                    parts.kind = Some(match self.advance() {
                        Tok::Nat(1) => FuncKind::One,
                        Tok::Nat(2) => FuncKind::Two,
                        _ => return Err(Diagnostic::at("syntax", "kind must be 1 or 2", cpos)),
                    });
                }
                _ => break,
            }
            self.eat(&Tok::Semi);
        }
        let body = if self.eat(&Tok::LBrace) {
            let e = self.expr()?;
            self.expect(&Tok::RBrace)?;
            Some(e)
        } else {
            self.eat(&Tok::Semi);
            None
        };
        Ok(RawFunc {
            decl: FuncDecl {
                name,
                param,
                ret_ty,
                requires: Expr::bool(true),
                assumes: Expr::bool(true),
                reads: Expr::Lit(Lit::EmptySet),
                decreases: None,
                ensures: Expr::bool(true),
                kind: FuncKind::One,
                body,
                pos,
            },
            parts,
        })
    }

    fn method(&mut self, pos: Pos) -> PResult<RawMethod> {
        let name = self.ident()?;
        self.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let x = self.ident()?;
                self.expect(&Tok::Colon)?;
                let t = self.ty()?;
                params.push((x, t));
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma)?;
            }
        }
        self.expect_kw("returns")?;
        self.expect(&Tok::LParen)?;
        let rn = self.ident_or_reserved()?;
        self.expect(&Tok::Colon)?;
        let rt = self.ty()?;
        self.expect(&Tok::RParen)?;
        let mut parts = MethParts::default();
        loop {
            let cpos = self.pos();
            let slot_name = match self.peek() {
                Tok::Ident(s) => s.clone(),
                _ => break,
            };
            let dup = |set: bool| -> PResult<()> {
                if set {
                    Err(Diagnostic::at(
                        "duplicate",
                        format!("duplicate `{slot_name}` clause"),
                        cpos,
                    ))
                } else {
                    Ok(())
                }
            };
            match slot_name.as_str() {
                "requires" => {
                    self.advance();
                    dup(parts.requires.is_some())?;
                    parts.requires = Some(self.expr()?);
                }
                "modifies" => {
                    self.advance();
                    dup(parts.modifies.is_some())?;
                    parts.modifies = Some(self.expr()?);
                }
                "decreases" => {
                    self.advance();
                    dup(parts.decreases.is_some())?;
                    parts.decreases = Some(if self.eat(&Tok::Star) {
                        Measure::Star
                    } else {
                        Measure::Expr(self.expr()?)
                    });
                }
                "ensures" => {
                    self.advance();
                    dup(parts.ensures.is_some())?;
                    parts.ensures = Some(self.expr()?);
                }
                _ => break,
            }
            self.eat(&Tok::Semi);
        }
        let body = if self.eat(&Tok::LBrace) {
            let c = self.cmd_seq(&Tok::RBrace)?;
            self.expect(&Tok::RBrace)?;
            Some(c)
        } else {
            self.eat(&Tok::Semi);
            None
        };
        Ok(RawMethod {
            decl: MethodDecl {
                name,
                params,
                ret: (rn, rt),
                requires: Expr::bool(true),
                modifies: Expr::Lit(Lit::EmptySet),
                decreases: None,
                ensures: Expr::bool(true),
                body,
                pos,
            },
            parts,
        })
    }

    /// Identifiers including the reserved variable names (`ret` is not a keyword,
    /// so this only differs from `ident` in intent).
    fn ident_or_reserved(&mut self) -> PResult<Name> {
        self.ident()
    }

    // ---- commands ----

    fn cmd_seq(&mut self, end: &Tok) -> PResult<Cmd> {
        let mut cmds = Vec::new();
        if self.peek() == end {
            return Ok(Cmd::Skip);
        }
        loop {
            cmds.push(self.cmd()?);
            if !self.eat(&Tok::Semi) {
                break;
            }
            if self.peek() == end {
                break;
            }
        }
        Ok(Cmd::seq_all(cmds))
    }

    fn cmd(&mut self) -> PResult<Cmd> {
        if self.eat_kw("skip") {
            return Ok(Cmd::Skip);
        }
        if self.eat_kw("return") {
            let e = self.expr()?;
            return Ok(Cmd::Assign(Name::from(crate::name::reserved::RET), e));
        }
        if self.eat_kw("if") {
            let b = self.expr()?;
            let c1 = self.block()?;
            let c2 = if self.eat_kw("else") {
                if self.is_kw("if") {
                    self.cmd()?
                } else {
                    self.block()?
                }
            } else {
                Cmd::Skip
            };
            return Ok(Cmd::If(b, Box::new(c1), Box::new(c2)));
        }
        if self.peek() == &Tok::LBrace {
            return self.block();
        }
        self.eat_kw("var");
        let x = self.ident()?;
        if self.eat(&Tok::Dot) {
            let f = self.ident()?;
            self.expect(&Tok::Assign)?;
            let e = self.expr()?;
            return Ok(Cmd::Write(x, f, e));
        }
        self.expect(&Tok::Assign)?;
        if self.eat_kw("new") {
            let c = self.ident()?;
            return Ok(Cmd::Alloc(x, c));
        }
        // y.m@X(z, ..) with m a method name
        if let (Tok::Ident(_), Tok::Dot, Tok::Ident(m), Tok::At) = (
            self.peek(),
            self.peek_at(1),
            self.peek_at(2),
            self.peek_at(3),
        ) {
            if self.ctx.methods.contains(m) {
                let recv = self.ident()?;
                self.expect(&Tok::Dot)?;
                let method = self.ident()?;
                self.expect(&Tok::At)?;
                let on = self.ident()?;
                let owner = self.owner(on);
                self.expect(&Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.ident()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(&Tok::Comma)?;
                    }
                }
                return Ok(Cmd::Call {
                    lhs: x,
                    recv,
                    method,
                    owner,
                    args,
                });
            }
        }
        let e = self.expr()?;
        Ok(Cmd::Assign(x, e))
    }

    fn block(&mut self) -> PResult<Cmd> {
        self.expect(&Tok::LBrace)?;
        let c = self.cmd_seq(&Tok::RBrace)?;
        self.expect(&Tok::RBrace)?;
        Ok(c)
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.expr()?;
            return Ok(Expr::bin(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut e = self.and_expr()?;
        while self.eat(&Tok::OrOr) {
            let r = self.and_expr()?;
            e = Expr::bin(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut e = self.cmp_expr()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.cmp_expr()?;
            e = Expr::bin(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn cmp_op(&self) -> Option<(BinOp, usize)> {
        match self.peek() {
            Tok::EqEq => Some((BinOp::Eq, 1)),
            Tok::Ne => Some((BinOp::Ne, 1)),
            Tok::Lt => Some((BinOp::Lt, 1)),
            Tok::Le => Some((BinOp::Le, 1)),
            Tok::Ident(s) if s == "in" => Some((BinOp::In, 1)),
            Tok::Bang if matches!(self.peek_at(1), Tok::Ident(s) if s == "in") => {
                Some((BinOp::NotIn, 2))
            }
            _ => None,
        }
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let e = self.add_expr()?;
        if let Some((op, n)) = self.cmp_op() {
            for _ in 0..n {
                self.advance();
            }
            let r = self.add_expr()?;
            if self.cmp_op().is_some() {
                return self.err("comparison operators do not associate; add parentheses");
            }
            return Ok(Expr::bin(op, e, r));
        }
        Ok(e)
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let r = self.mul_expr()?;
            e = Expr::bin(op, e, r);
        }
        Ok(e)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut e = self.unary_expr()?;
        while self.eat(&Tok::Star) {
            let r = self.unary_expr()?;
            e = Expr::bin(BinOp::Mul, e, r);
        }
        Ok(e)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Bang) {
            let e = self.unary_expr()?;
            return Ok(Expr::not(e));
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat(&Tok::Dot) {
                let name = self.ident()?;
                if self.eat(&Tok::At) {
                    let on = self.ident()?;
                    let owner = self.owner(on);
                    self.expect(&Tok::LParen)?;
                    let arg = if self.eat(&Tok::RParen) {
                        None
                    } else {
                        let a = self.expr()?;
                        self.expect(&Tok::RParen)?;
                        Some(Box::new(a))
                    };
                    e = Expr::Call {
                        recv: Box::new(e),
                        func: name,
                        owner,
                        arg,
                    };
                } else {
                    e = Expr::Field(Box::new(e), name);
                }
            } else if self.eat_kw("is") {
                let t = self.ident()?;
                e = if self.ctx.classes.contains(t.as_str()) {
                    Expr::IsClass(Box::new(e), t)
                } else {
                    Expr::IsTrait(Box::new(e), t)
                };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Nat(n) => {
                self.advance();
                Ok(Expr::nat(n))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::LBrace => {
                self.advance();
                if self.eat(&Tok::RBrace) {
                    return Ok(Expr::Lit(Lit::EmptySet));
                }
                let mut items = vec![Expr::singleton(self.expr()?)];
                while self.eat(&Tok::Comma) {
                    items.push(Expr::singleton(self.expr()?));
                }
                self.expect(&Tok::RBrace)?;
                let mut it = items.into_iter();
                let mut e = it.next().unwrap();
                for r in it {
                    e = Expr::bin(BinOp::Add, e, r);
                }
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" => {
                    self.advance();
                    Ok(Expr::bool(true))
                }
                "false" => {
                    self.advance();
                    Ok(Expr::bool(false))
                }
                "null" => {
                    self.advance();
                    Ok(Expr::Lit(Lit::Null))
                }
                "if" => {
                    self.advance();
                    let b = self.expr()?;
                    self.expect_kw("then")?;
                    let t = self.expr()?;
                    self.expect_kw("else")?;
                    let f = self.expr()?;
                    Ok(Expr::Ite(Box::new(b), Box::new(t), Box::new(f)))
                }
                _ => Ok(Expr::Var(self.ident()?)),
            },
            t => self.err(format!("expected expression, found {}", t.describe())),
        }
    }
}

fn check_member_dups(body: &RawBody, diags: &mut Vec<Diagnostic>) {
    let mut seen: BTreeSet<Name> = BTreeSet::new();
    let names = body
        .fields
        .iter()
        .map(|f| (&f.name, f.pos))
        .chain(body.funcs.iter().map(|f| (&f.decl.name, f.decl.pos)))
        .chain(body.methods.iter().map(|m| (&m.decl.name, m.decl.pos)));
    for (n, pos) in names {
        if !seen.insert(n.clone()) {
            diags.push(Diagnostic::at(
                "duplicate",
                format!("duplicate member `{n}`"),
                pos,
            ));
        }
    }
}

fn finish_func(raw: RawFunc, inh: Option<&FuncDecl>) -> FuncDecl {
    let RawFunc { mut decl, parts } = raw;
    macro_rules! fill {
        ($slot:ident) => {
            if let Some(v) = parts.$slot {
                decl.$slot = v;
            } else if let Some(t) = inh {
                decl.$slot = t.$slot.clone();
            }
        };
    }
    fill!(requires);
    fill!(assumes);
    fill!(reads);
    fill!(ensures);
    fill!(kind);
    decl.decreases = parts
        .decreases
        .or_else(|| inh.and_then(|t| t.decreases.clone()));
    decl
}

fn finish_method(raw: RawMethod, inh: Option<&MethodDecl>) -> MethodDecl {
    let RawMethod { mut decl, parts } = raw;
    macro_rules! fill {
        ($slot:ident) => {
            if let Some(v) = parts.$slot {
                decl.$slot = v;
            } else if let Some(t) = inh {
                decl.$slot = t.$slot.clone();
            }
        };
    }
    fill!(requires);
    fill!(modifies);
    fill!(ensures);
    decl.decreases = parts
        .decreases
        .or_else(|| inh.and_then(|t| t.decreases.clone()));
    decl
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("a + b * c == d && !e || f ==> g ==> h").unwrap();
        let expect = Expr::bin(
            BinOp::Implies,
            Expr::bin(
                BinOp::Or,
                Expr::and(
                    Expr::eq(
                        Expr::bin(
                            BinOp::Add,
                            Expr::var("a"),
                            Expr::bin(BinOp::Mul, Expr::var("b"), Expr::var("c")),
                        ),
                        Expr::var("d"),
                    ),
                    Expr::not(Expr::var("e")),
                ),
                Expr::var("f"),
            ),
            Expr::bin(BinOp::Implies, Expr::var("g"), Expr::var("h")),
        );
        assert_eq!(e, expect);
    }

    #[test]
    fn not_in_and_set_literals() {
        let e = parse_expr("this !in {a, b}").unwrap();
        assert_eq!(
            e,
            Expr::bin(
                BinOp::NotIn,
                Expr::var("this"),
                Expr::bin(
                    BinOp::Add,
                    Expr::singleton(Expr::var("a")),
                    Expr::singleton(Expr::var("b"))
                )
            )
        );
    }

    #[test]
    fn comparison_chain_rejected() {
        assert!(parse_expr("a < b < c").is_err());
    }

    #[test]
    fn empty_file() {
        let d = parse_program("  // nothing\n").unwrap_err();
        assert_eq!(d[0].message, "no declarations");
    }

    #[test]
    fn syntax_error_has_position() {
        let d = parse_program("trait T {\n  var f: ;\n}").unwrap_err();
        assert_eq!((d[0].line, d[0].col), (Some(2), Some(10)));
    }

    #[test]
    fn duplicate_names() {
        let d = parse_program("trait T { } class T extends T { }").unwrap_err();
        assert!(d[0].message.contains("duplicate declaration"));
        let d = parse_program("trait T { var f: nat; var f: nat; }").unwrap_err();
        assert!(d[0].message.contains("duplicate member"));
    }

    #[test]
    fn method_call_vs_function_call() {
        let src = "trait T { method m(a: nat) returns (ret: nat) decreases * }
                   class C extends T { function g(): nat decreases 0 { 1 }
                     method m(a: nat) returns (ret: nat) { var y := this.g@C(); ret := this.m@T(a) } }";
        let p = parse_program(src).unwrap();
        let body = p.classes[0].methods[0].body.clone().unwrap();
        let Cmd::Seq(a, b) = body else { panic!() };
        assert!(matches!(
            *a,
            Cmd::Assign(
                _,
                Expr::Call {
                    owner: Owner::Class(_),
                    ..
                }
            )
        ));
        assert!(matches!(*b, Cmd::Call { .. }));
    }

    #[test]
    fn class_inherits_trait_clauses() {
        let src =
            "trait T { function g(): nat requires this.h@T() reads {this} decreases 3 kind 2 }
                   class C extends T { function g(): nat { 0 } }";
        let p = parse_program(src).unwrap();
        let g = &p.classes[0].functions[0];
        assert_eq!(g.kind, FuncKind::Two);
        assert_eq!(g.decreases, Some(Expr::nat(3)));
        assert!(!crate::syntax::call_free(&g.requires));
    }
}
