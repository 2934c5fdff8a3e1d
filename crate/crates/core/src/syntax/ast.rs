//! Abstract syntax of the object language.

use std::fmt;

use crate::name::Name;

/// Source position (1-based). Positions never participate in AST equality.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

impl Eq for Pos {}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Lit {
    Nat(u64),
    Bool(bool),
    Null,
    EmptySet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    /// `{e}`: the region holding the pointer `e`.
    Singleton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Eq,
    Ne,
    In,
    NotIn,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::In => "in",
            BinOp::NotIn => "!in",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
        }
    }
}

/// Static owner of a member reference: a class or a trait.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    Class(Name),
    Trait(Name),
}

impl Owner {
    pub fn name(&self) -> &Name {
        match self {
            Owner::Class(n) | Owner::Trait(n) => n,
        }
    }

    pub fn is_trait(&self) -> bool {
        matches!(self, Owner::Trait(_))
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Name),
    Lit(Lit),
    Field(Box<Expr>, Name),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    IsClass(Box<Expr>, Name),
    IsTrait(Box<Expr>, Name),
    Call {
        recv: Box<Expr>,
        func: Name,
        owner: Owner,
        arg: Option<Box<Expr>>,
    },
}

impl Expr {
    pub fn var(n: &str) -> Expr {
        Expr::Var(Name::from(n))
    }

    pub fn nat(n: u64) -> Expr {
        Expr::Lit(Lit::Nat(n))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Lit::Bool(b))
    }

    pub fn field(e: Expr, f: &str) -> Expr {
        Expr::Field(Box::new(e), Name::from(f))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::And, a, b)
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Eq, a, b)
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn singleton(e: Expr) -> Expr {
        Expr::Unary(UnOp::Singleton, Box::new(e))
    }

    pub fn is_true_lit(&self) -> bool {
        matches!(self, Expr::Lit(Lit::Bool(true)))
    }

    /// Direct subexpressions, left to right.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Lit(_) => vec![],
            Expr::Field(e, _) | Expr::Unary(_, e) | Expr::IsClass(e, _) | Expr::IsTrait(e, _) => {
                vec![e]
            }
            Expr::Ite(b, t, f) => vec![b, t, f],
            Expr::Binary(_, a, b) => vec![a, b],
            Expr::Call { recv, arg, .. } => {
                let mut v = vec![&**recv];
                if let Some(a) = arg {
                    v.push(a);
                }
                v
            }
        }
    }

    pub fn height(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Expr::height)
            .max()
            .unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cmd {
    Skip,
    Assign(Name, Expr),
    /// `x.f := e`
    Write(Name, Name, Expr),
    /// `x := new C`
    Alloc(Name, Name),
    If(Expr, Box<Cmd>, Box<Cmd>),
    Seq(Box<Cmd>, Box<Cmd>),
    Call {
        lhs: Name,
        recv: Name,
        method: Name,
        owner: Owner,
        args: Vec<Name>,
    },
}

impl Cmd {
    pub fn seq(a: Cmd, b: Cmd) -> Cmd {
        Cmd::Seq(Box::new(a), Box::new(b))
    }

    /// Folds a non-empty list into a right-nested sequence.
    pub fn seq_all(mut cmds: Vec<Cmd>) -> Cmd {
        let mut acc = cmds.pop().unwrap_or(Cmd::Skip);
        while let Some(c) = cmds.pop() {
            acc = Cmd::seq(c, acc);
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Nat,
    Bool,
    /// Pointer to an instance of the named class or trait.
    Ref {
        target: Name,
        nullable: bool,
    },
    Set(Name),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FuncKind {
    One,
    Two,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Measure {
    Expr(Expr),
    /// `decreases *`: the method may diverge.
    Star,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: Name,
    pub ty: Ty,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: Name,
    pub param: Option<(Name, Ty)>,
    pub ret_ty: Ty,
    /// Well-definedness precondition (DFC).
    pub requires: Expr,
    /// Semantic precondition.
    pub assumes: Expr,
    pub reads: Expr,
    pub decreases: Option<Expr>,
    pub ensures: Expr,
    pub kind: FuncKind,
    pub body: Option<Expr>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: Name,
    pub params: Vec<(Name, Ty)>,
    pub ret: (Name, Ty),
    pub requires: Expr,
    pub modifies: Expr,
    pub decreases: Option<Measure>,
    pub ensures: Expr,
    pub body: Option<Cmd>,
    pub pos: Pos,
}

impl MethodDecl {
    pub fn is_total(&self) -> bool {
        matches!(self.decreases, Some(Measure::Expr(_)))
    }

    pub fn measure(&self) -> Option<&Expr> {
        match &self.decreases {
            Some(Measure::Expr(e)) => Some(e),
            _ => None,
        }
    }

    pub fn param_names(&self) -> Vec<Name> {
        self.params.iter().map(|(n, _)| n.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraitDecl {
    pub name: Name,
    pub fields: Vec<FieldDecl>,
    pub functions: Vec<FuncDecl>,
    pub methods: Vec<MethodDecl>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: Name,
    pub extends: Name,
    pub fields: Vec<FieldDecl>,
    pub functions: Vec<FuncDecl>,
    pub methods: Vec<MethodDecl>,
    pub pos: Pos,
}

/// Catalogue of well-founded orders on reduced entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OrderSpec {
    /// `nat_lt`: `<` on the natural cast of the measures.
    NatLt,
    /// `subset`: proper inclusion on the region cast of the measures.
    ProperSubset,
    /// `lex(m1, .., mk) base`: member rank first (earlier names are smaller),
    /// then `base` between entries of equal rank.
    Lex {
        ranks: Vec<Name>,
        then: Box<OrderSpec>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Orders {
    pub functions: Option<OrderSpec>,
    pub methods: Option<OrderSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub orders: Orders,
    pub traits: Vec<TraitDecl>,
    pub classes: Vec<ClassDecl>,
}

impl Program {
    pub fn trait_decl(&self, name: &str) -> Option<&TraitDecl> {
        self.traits.iter().find(|t| t.name == *name)
    }

    pub fn class_decl(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == *name)
    }

    pub fn is_class(&self, name: &str) -> bool {
        self.class_decl(name).is_some()
    }

    pub fn is_trait(&self, name: &str) -> bool {
        self.trait_decl(name).is_some()
    }

    /// `IsT C T`: class `C` is declared and extends trait `T`.
    pub fn is_t(&self, class: &str, tr: &str) -> bool {
        self.class_decl(class).is_some_and(|c| c.extends == *tr)
    }

    /// Whether a pointer of dynamic class `class` inhabits `owner`.
    pub fn inhabits(&self, class: &str, owner: &Owner) -> bool {
        match owner {
            Owner::Class(c) => self.is_class(class) && *c == *class,
            Owner::Trait(t) => self.is_t(class, t),
        }
    }

    pub fn implementers(&self, tr: &str) -> impl Iterator<Item = &ClassDecl> + '_ {
        let tr = tr.to_string();
        self.classes
            .iter()
            .filter(move |c| c.extends == *tr.as_str())
    }

    /// Every declared field name, first declaration order, deduplicated.
    pub fn field_names(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        let decls = self
            .traits
            .iter()
            .flat_map(|t| t.fields.iter())
            .chain(self.classes.iter().flat_map(|c| c.fields.iter()));
        for f in decls {
            if !out.contains(&f.name) {
                out.push(f.name.clone());
            }
        }
        out
    }

    pub fn field_ty(&self, field: &str) -> Option<&Ty> {
        self.traits
            .iter()
            .flat_map(|t| t.fields.iter())
            .chain(self.classes.iter().flat_map(|c| c.fields.iter()))
            .find(|f| f.name == *field)
            .map(|f| &f.ty)
    }

    pub fn class_names(&self) -> Vec<Name> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn func(&self, owner: &Owner, name: &str) -> Option<&FuncDecl> {
        let fs = match owner {
            Owner::Class(c) => &self.class_decl(c)?.functions,
            Owner::Trait(t) => &self.trait_decl(t)?.functions,
        };
        fs.iter().find(|f| f.name == *name)
    }

    pub fn method(&self, owner: &Owner, name: &str) -> Option<&MethodDecl> {
        let ms = match owner {
            Owner::Class(c) => &self.class_decl(c)?.methods,
            Owner::Trait(t) => &self.trait_decl(t)?.methods,
        };
        ms.iter().find(|m| m.name == *name)
    }

    /// `HasF`
    pub fn has_f(&self, owner: &Owner, name: &str) -> bool {
        self.func(owner, name).is_some()
    }

    /// `HasM`
    pub fn has_m(&self, owner: &Owner, name: &str) -> bool {
        self.method(owner, name).is_some()
    }

    /// `Total D m`: the method exists and carries a measure.
    pub fn total(&self, owner: &Owner, name: &str) -> bool {
        self.method(owner, name).is_some_and(MethodDecl::is_total)
    }

    pub fn function_names(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        for f in self
            .traits
            .iter()
            .flat_map(|t| t.functions.iter())
            .chain(self.classes.iter().flat_map(|c| c.functions.iter()))
        {
            if !out.contains(&f.name) {
                out.push(f.name.clone());
            }
        }
        out
    }

    pub fn method_names(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        for m in self
            .traits
            .iter()
            .flat_map(|t| t.methods.iter())
            .chain(self.classes.iter().flat_map(|c| c.methods.iter()))
        {
            if !out.contains(&m.name) {
                out.push(m.name.clone());
            }
        }
        out
    }

    pub fn function_order(&self) -> OrderSpec {
        self.orders.functions.clone().unwrap_or(OrderSpec::NatLt)
    }

    pub fn method_order(&self) -> OrderSpec {
        self.orders.methods.clone().unwrap_or(OrderSpec::NatLt)
    }

    /// All `(owner, function)` pairs, traits first.
    pub fn function_heads(&self) -> Vec<(Owner, Name)> {
        let mut out = Vec::new();
        for t in &self.traits {
            for f in &t.functions {
                out.push((Owner::Trait(t.name.clone()), f.name.clone()));
            }
        }
        for c in &self.classes {
            for f in &c.functions {
                out.push((Owner::Class(c.name.clone()), f.name.clone()));
            }
        }
        out
    }

    pub fn method_heads(&self) -> Vec<(Owner, Name)> {
        let mut out = Vec::new();
        for t in &self.traits {
            for m in &t.methods {
                out.push((Owner::Trait(t.name.clone()), m.name.clone()));
            }
        }
        for c in &self.classes {
            for m in &c.methods {
                out.push((Owner::Class(c.name.clone()), m.name.clone()));
            }
        }
        out
    }
}
