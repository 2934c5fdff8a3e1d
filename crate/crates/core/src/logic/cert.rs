//! Certificate files: JSON derivation trees, one total and one partial
//! derivation per class method.

use serde_json::{Map, Value as Json};

use crate::effects::{region_to_effects, Effect, EffectList};
use crate::entry::EntryHead;
use crate::name::Name;
use crate::syntax::parser::{parse_cmd, parse_expr_with, ParseCtx};
use crate::syntax::{print_cmd, print_expr, Cmd, Diagnostic, Expr, Owner, Program};

pub const SCHEMA: &str = "xrl-proof/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Skip,
    Assign,
    Write,
    Alloc,
    If,
    Seq,
    Frame,
    Conseq,
    CallT,
    CallC,
    CallP,
    Cast,
}

impl Rule {
    pub fn parse(s: &str) -> Option<Rule> {
        Some(match s {
            "Skip" => Rule::Skip,
            "Assign" => Rule::Assign,
            "Write" => Rule::Write,
            "Alloc" => Rule::Alloc,
            "If" => Rule::If,
            "Seq" => Rule::Seq,
            "Frame" => Rule::Frame,
            "Conseq" => Rule::Conseq,
            "CallT" => Rule::CallT,
            "CallC" => Rule::CallC,
            "CallP" => Rule::CallP,
            "Cast" => Rule::Cast,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Skip => "Skip",
            Rule::Assign => "Assign",
            Rule::Write => "Write",
            Rule::Alloc => "Alloc",
            Rule::If => "If",
            Rule::Seq => "Seq",
            Rule::Frame => "Frame",
            Rule::Conseq => "Conseq",
            Rule::CallT => "CallT",
            Rule::CallC => "CallC",
            Rule::CallP => "CallP",
            Rule::Cast => "Cast",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Meta {
    /// Frame invariant.
    pub frame: Option<Expr>,
    /// Allocation snapshot variable.
    pub snap: Option<Name>,
    /// Length of the leading part of the second effect list of a sequence.
    pub split: Option<usize>,
    /// Entry head of a total derivation.
    pub entry: Option<EntryHead>,
    /// Guard of a conditional.
    pub guard: Option<Expr>,
}

#[derive(Clone, Debug)]
pub enum Child {
    Node(Box<Node>),
    /// The total derivation of the same method.
    TotalRef,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub rule: Rule,
    pub pre: Option<Expr>,
    pub post: Option<Expr>,
    pub eps: Option<EffectList>,
    pub cmd: Option<Cmd>,
    pub children: Vec<Child>,
    pub meta: Meta,
}

#[derive(Clone, Debug)]
pub struct MethodEntry {
    pub class: Name,
    pub method: Name,
    pub total: Option<Node>,
    pub partial: Option<Node>,
}

#[derive(Clone, Debug, Default)]
pub struct CertFile {
    pub methods: Vec<MethodEntry>,
}

fn err(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new("CERT_FORMAT", msg)
}

struct Reader<'p> {
    p: &'p Program,
    ctx: ParseCtx,
}

impl Reader<'_> {
    fn expr(&self, j: &Json, what: &str) -> Result<Expr, Diagnostic> {
        let s = j
            .as_str()
            .ok_or_else(|| err(format!("{what} must be a string")))?;
        parse_expr_with(s, &self.ctx).map_err(|d| err(format!("{what}: {}", d.message)))
    }

    fn effects(&self, j: &Json) -> Result<EffectList, Diagnostic> {
        let arr = j.as_array().ok_or_else(|| err("eps must be an array"))?;
        let mut out = Vec::new();
        for it in arr {
            let o = it
                .as_object()
                .ok_or_else(|| err("effect must be an object"))?;
            let region = self.expr(
                o.get("region")
                    .ok_or_else(|| err("effect without region"))?,
                "region",
            )?;
            match o.get("field") {
                Some(f) => {
                    let f = f.as_str().ok_or_else(|| err("field must be a string"))?;
                    out.push(Effect::new(region, f));
                }
                None => out.extend(region_to_effects(self.p, &region)),
            }
        }
        Ok(out)
    }

    fn node(&self, j: &Json) -> Result<Node, Diagnostic> {
        let o = j
            .as_object()
            .ok_or_else(|| err("derivation node must be an object"))?;
        for k in o.keys() {
            if !matches!(
                k.as_str(),
                "rule" | "P" | "Q" | "eps" | "cmd" | "children" | "meta"
            ) {
                return Err(err(format!("unknown node key `{k}`")));
            }
        }
        let rule_s = o
            .get("rule")
            .and_then(Json::as_str)
            .ok_or_else(|| err("node without rule"))?;
        let rule = Rule::parse(rule_s).ok_or_else(|| err(format!("unknown rule `{rule_s}`")))?;
        let opt_expr = |k: &str| o.get(k).map(|v| self.expr(v, k)).transpose();
        let cmd = match o.get("cmd") {
            Some(c) => {
                let s = c.as_str().ok_or_else(|| err("cmd must be a string"))?;
                Some(parse_cmd(s, &self.ctx).map_err(|d| err(format!("cmd: {}", d.message)))?)
            }
            None => None,
        };
        let mut children = Vec::new();
        if let Some(cs) = o.get("children") {
            for c in cs
                .as_array()
                .ok_or_else(|| err("children must be an array"))?
            {
                if let Some(r) = c.get("ref") {
                    if r.as_str() != Some("total") {
                        return Err(err("only {\"ref\": \"total\"} references are supported"));
                    }
                    children.push(Child::TotalRef);
                } else {
                    children.push(Child::Node(Box::new(self.node(c)?)));
                }
            }
        }
        let mut meta = Meta::default();
        if let Some(m) = o.get("meta") {
            let m = m.as_object().ok_or_else(|| err("meta must be an object"))?;
            for (k, v) in m {
                match k.as_str() {
                    "R" => meta.frame = Some(self.expr(v, "R")?),
                    "snap" => {
                        meta.snap = Some(Name::from(
                            v.as_str().ok_or_else(|| err("snap must be a string"))?,
                        ))
                    }
                    "split" => {
                        meta.split =
                            Some(v.as_u64().ok_or_else(|| err("split must be a natural"))? as usize)
                    }
                    "guard" => meta.guard = Some(self.expr(v, "guard")?),
                    "entry" => {
                        meta.entry = Some(parse_head(
                            self.p,
                            v.as_str().ok_or_else(|| err("entry must be a string"))?,
                        )?)
                    }
                    other => return Err(err(format!("unknown meta key `{other}`"))),
                }
            }
        }
        Ok(Node {
            rule,
            pre: opt_expr("P")?,
            post: opt_expr("Q")?,
            eps: o.get("eps").map(|e| self.effects(e)).transpose()?,
            cmd,
            children,
            meta,
        })
    }
}

/// `Owner;member`
pub fn parse_head(p: &Program, s: &str) -> Result<EntryHead, Diagnostic> {
    let (o, m) = s
        .split_once(';')
        .ok_or_else(|| err(format!("entry `{s}` must be Owner;member")))?;
    let owner = if p.is_class(o) {
        Owner::Class(Name::from(o))
    } else {
        Owner::Trait(Name::from(o))
    };
    Ok(EntryHead::new(owner, m))
}

pub fn parse_cert(p: &Program, src: &str) -> Result<CertFile, Diagnostic> {
    let j: Json = serde_json::from_str(src).map_err(|e| err(format!("invalid JSON: {e}")))?;
    read_cert(p, &j)
}

pub fn read_cert(p: &Program, j: &Json) -> Result<CertFile, Diagnostic> {
    let o = j
        .as_object()
        .ok_or_else(|| err("certificate must be an object"))?;
    if let Some(s) = o.get("schema") {
        if s.as_str() != Some(SCHEMA) {
            return Err(err(format!("unsupported schema {s}")));
        }
    }
    if let Some(d) = o.get("dialect") {
        if d.as_str() != Some("region") {
            return Err(err(format!("certificate dialect {d} is not the region logic")));
        }
    }
    let r = Reader {
        p,
        ctx: ParseCtx::of_program(p),
    };
    let mut out = CertFile::default();
    let ms = o
        .get("methods")
        .and_then(Json::as_array)
        .ok_or_else(|| err("certificate needs a methods array"))?;
    for m in ms {
        let mo = m
            .as_object()
            .ok_or_else(|| err("method entry must be an object"))?;
        let name = |k: &str| {
            mo.get(k)
                .and_then(Json::as_str)
                .map(Name::from)
                .ok_or_else(|| err(format!("method entry without {k}")))
        };
        out.methods.push(MethodEntry {
            class: name("class")?,
            method: name("method")?,
            total: mo.get("total").map(|n| r.node(n)).transpose()?,
            partial: mo.get("partial").map(|n| r.node(n)).transpose()?,
        });
    }
    Ok(out)
}

fn effects_json(es: &[Effect]) -> Json {
    Json::Array(es.iter().map(Effect::to_json).collect())
}

/// Canonical JSON for a node, with every effect spelled out.
pub fn node_to_json(n: &Node) -> Json {
    let mut o = Map::new();
    o.insert("rule".into(), Json::from(n.rule.name()));
    if let Some(c) = &n.cmd {
        o.insert("cmd".into(), Json::from(print_cmd(c)));
    }
    if let Some(e) = &n.pre {
        o.insert("P".into(), Json::from(print_expr(e)));
    }
    if let Some(e) = &n.post {
        o.insert("Q".into(), Json::from(print_expr(e)));
    }
    if let Some(e) = &n.eps {
        o.insert("eps".into(), effects_json(e));
    }
    let mut meta = Map::new();
    if let Some(r) = &n.meta.frame {
        meta.insert("R".into(), Json::from(print_expr(r)));
    }
    if let Some(s) = &n.meta.snap {
        meta.insert("snap".into(), Json::from(s.as_str()));
    }
    if let Some(s) = n.meta.split {
        meta.insert("split".into(), Json::from(s));
    }
    if let Some(g) = &n.meta.guard {
        meta.insert("guard".into(), Json::from(print_expr(g)));
    }
    if let Some(h) = &n.meta.entry {
        meta.insert("entry".into(), Json::from(h.to_string()));
    }
    if !meta.is_empty() {
        o.insert("meta".into(), Json::Object(meta));
    }
    if !n.children.is_empty() {
        let cs = n
            .children
            .iter()
            .map(|c| match c {
                Child::Node(n) => node_to_json(n),
                Child::TotalRef => serde_json::json!({"ref": "total"}),
            })
            .collect();
        o.insert("children".into(), Json::Array(cs));
    }
    Json::Object(o)
}

pub fn cert_to_json(c: &CertFile) -> Json {
    let ms: Vec<Json> = c
        .methods
        .iter()
        .map(|m| {
            let mut o = Map::new();
            o.insert("class".into(), Json::from(m.class.as_str()));
            o.insert("method".into(), Json::from(m.method.as_str()));
            if let Some(t) = &m.total {
                o.insert("total".into(), node_to_json(t));
            }
            if let Some(t) = &m.partial {
                o.insert("partial".into(), node_to_json(t));
            }
            Json::Object(o)
        })
        .collect();
    serde_json::json!({"schema": SCHEMA, "methods": ms})
}
