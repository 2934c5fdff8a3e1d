//! Semantic side conditions, their discharge modes and verdicts.

use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::effects::{effects_to_json, reff, EffectList};
use crate::entry::{EntryHead, MemberKind};
use crate::name::Name;
use crate::syntax::{conjuncts, print_expr, types::TypeEnv, Expr};
use crate::wd::Layer;

#[derive(Clone, Debug)]
pub enum ObKind {
    /// `⟦P⟧𝐁 ⇒ ⟦P'⟧𝐁`
    Implies {
        pre: Expr,
        post: Expr,
    },
    /// `⟦P⟧𝐁 ⇒ DF₂ e`
    DfHolds {
        pre: Expr,
        e: Expr,
    },
    /// `P ⊩ ε̄' ≤ ε̄`
    Subeffect {
        pre: Expr,
        sub: EffectList,
        sup: EffectList,
    },
    /// `ε̄2 is P,ε̄1-immune`
    Immune {
        pre: Expr,
        eps2: EffectList,
        eps1: EffectList,
    },
    /// `P ⊩ ε̄ # r`
    Disjoint {
        pre: Expr,
        eps: EffectList,
        region: Expr,
    },
    /// `P ⇒ ε̄ ·/. η̄`
    Separates {
        pre: Expr,
        eps: EffectList,
        eta: EffectList,
    },
    /// `⟦P⟧𝐁 ⇒ M_v (T,m, ⟦Mse T m⟧α s[!ȳ/ā!]) (D,n, s[mse])`
    MeasureDecrease {
        pre: Expr,
        callee: EntryHead,
        bindings: Vec<(Name, Expr)>,
        caller: EntryHead,
    },
    TotalAbstraction {
        class: Name,
        tr: Name,
        method: Name,
    },
    VirtualEntrySound {
        kind: MemberKind,
        class: Name,
        tr: Name,
        member: Name,
    },
    /// DFC of the trait member and `this is C` imply the class member's DFC.
    DfcRefine {
        layer: Layer,
        tr: Name,
        class: Name,
        func: Name,
    },
    /// The class member's DFC implies `DF` of its body at its own entry.
    Fdf {
        layer: Layer,
        class: Name,
        func: Name,
    },
    /// Body footprints stay within the reads region used for call effects.
    ReadsSound {
        reads_of: EntryHead,
        class: Name,
        func: Name,
    },
    WellFounded {
        kind: MemberKind,
    },
    /// Substituted postcondition of a call, checked when the call runs.
    CallPost {
        callee: EntryHead,
        post: Expr,
    },
}

impl ObKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObKind::Implies { .. } => "IMPLIES",
            ObKind::DfHolds { .. } => "DF_HOLDS",
            ObKind::Subeffect { .. } => "SUBEFFECT",
            ObKind::Immune { .. } => "IMMUNE",
            ObKind::Disjoint { .. } => "DISJOINT",
            ObKind::Separates { .. } => "SEPARATES",
            ObKind::MeasureDecrease { .. } => "MEASURE_DECREASE",
            ObKind::TotalAbstraction { .. } => "TOTAL_ABSTRACTION",
            ObKind::VirtualEntrySound {
                kind: MemberKind::Function,
                ..
            } => "VIRTUAL_ENTRY_SOUND_F",
            ObKind::VirtualEntrySound { .. } => "VIRTUAL_ENTRY_SOUND_M",
            ObKind::DfcRefine {
                layer: Layer::One, ..
            } => "P1",
            ObKind::DfcRefine { .. } => "P2",
            ObKind::Fdf {
                layer: Layer::One, ..
            } => "FDF1",
            ObKind::Fdf { .. } => "FDF2",
            ObKind::ReadsSound { .. } => "READS_SOUND",
            ObKind::WellFounded {
                kind: MemberKind::Function,
            } => "WELL_FOUNDED_F",
            ObKind::WellFounded { .. } => "WELL_FOUNDED_M",
            ObKind::CallPost { .. } => "CALL_POST",
        }
    }

    /// Human-readable statement for reports.
    pub fn statement(&self) -> String {
        let pe = print_expr;
        let ef = |e: &EffectList| effects_to_json(e).to_string();
        match self {
            ObKind::Implies { pre, post } => format!("{} ==> {}", pe(pre), pe(post)),
            ObKind::DfHolds { pre, e } => format!("{} ==> DF2({})", pe(pre), pe(e)),
            ObKind::Subeffect { pre, sub, sup } => {
                format!("{} |- {} <= {}", pe(pre), ef(sub), ef(sup))
            }
            ObKind::Immune { pre, eps2, eps1 } => {
                format!("{} is {},{}-immune", ef(eps2), pe(pre), ef(eps1))
            }
            ObKind::Disjoint { pre, eps, region } => {
                format!("{} |- {} # {}", pe(pre), ef(eps), pe(region))
            }
            ObKind::Separates { pre, eps, eta } => {
                format!("{} ==> {} separates {}", pe(pre), ef(eps), ef(eta))
            }
            ObKind::MeasureDecrease {
                pre,
                callee,
                bindings,
                caller,
            } => {
                let b: Vec<String> = bindings
                    .iter()
                    .map(|(x, e)| format!("{}/{x}", pe(e)))
                    .collect();
                format!(
                    "{} ==> M_v ({callee}, Mse[{}]) ({caller}, mse)",
                    pe(pre),
                    b.join(", ")
                )
            }
            ObKind::TotalAbstraction { class, tr, method } => {
                format!("Total {tr}.{method} ==> Total {class}.{method}")
            }
            ObKind::VirtualEntrySound {
                class, tr, member, ..
            } => format!("order({tr};{member}, s) E ==> order({class};{member}, s) E"),
            ObKind::DfcRefine {
                tr, class, func, ..
            } => format!("DFC {tr}.{func} && this is {class} ==> DFC {class}.{func}"),
            ObKind::Fdf { class, func, .. } => {
                format!("DFC {class}.{func} ==> DF ({class};{func}, s) (Body {class}.{func}) s")
            }
            ObKind::ReadsSound {
                reads_of,
                class,
                func,
            } => format!("footprint of Body {class}.{func} within F(Reads {reads_of})"),
            ObKind::WellFounded { kind } => format!("order on {kind:?} entries is well-founded"),
            ObKind::CallPost { callee, post } => {
                format!("exit state of {callee} satisfies {}", pe(post))
            }
        }
    }

    /// Decides the obligation syntactically when a shortcut applies.
    pub fn syntactic(&self) -> Option<bool> {
        match self {
            ObKind::Implies { pre, post } => {
                let have = conjuncts(pre);
                conjuncts(post)
                    .iter()
                    .all(|c| c.is_true_lit() || have.contains(c))
                    .then_some(true)
            }
            ObKind::DfHolds { e, .. } => crate::syntax::call_free(e).then_some(true),
            ObKind::Subeffect { sub, sup, .. } => {
                sub.iter().all(|e| sup.contains(e)).then_some(true)
            }
            ObKind::Immune { eps2, eps1, .. } => (eps1.is_empty()
                || eps2
                    .iter()
                    .all(|e| reff(&e.region).is_ok_and(|r| r.is_empty())))
            .then_some(true),
            ObKind::Disjoint { eps, .. } => eps.is_empty().then_some(true),
            ObKind::Separates { eps, eta, .. } => {
                (eps.is_empty() || eta.is_empty()).then_some(true)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Syntactic,
    Bounded,
    Runtime,
    Trusted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Trusted,
    Sampled,
}

#[derive(Clone, Debug)]
pub struct Obligation {
    pub id: String,
    pub kind: ObKind,
    pub mode: Mode,
    /// Where the obligation comes from: a derivation node path or a program member.
    pub origin: String,
    /// Types of the variables the obligation quantifies over.
    pub env: TypeEnv,
}

impl Obligation {
    pub fn new(id: String, kind: ObKind, origin: String, env: TypeEnv) -> Self {
        let mode = match kind {
            ObKind::CallPost { .. } => Mode::Runtime,
            ObKind::TotalAbstraction { .. } => Mode::Syntactic,
            _ if kind.syntactic().is_some() => Mode::Syntactic,
            _ => Mode::Bounded,
        };
        Obligation {
            id,
            kind,
            mode,
            origin,
            env,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub id: String,
    pub kind: &'static str,
    pub mode: Mode,
    pub status: Status,
    pub origin: String,
    pub statement: String,
    /// States (or walks, when sampled) examined.
    pub explored: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Json>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Verdict {
    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).unwrap_or_else(|_| json!({"id": self.id}))
    }
}
