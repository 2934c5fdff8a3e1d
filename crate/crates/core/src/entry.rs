//! Entries, reduced entries and the well-founded orders on them.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::callfree::eval_alpha;
use crate::name::Name;
use crate::state::{Ptr, State, Value};
use crate::syntax::{Expr, OrderSpec, Owner, Program};

pub const TOP_OWNER: &str = "Object";
pub const TOP_MEMBER: &str = "main";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryHead {
    pub owner: Owner,
    pub member: Name,
}

impl EntryHead {
    pub fn new(owner: Owner, member: &str) -> Self {
        EntryHead {
            owner,
            member: Name::from(member),
        }
    }

    /// `Object;main`, the entry of top-level evaluation.
    pub fn top() -> Self {
        EntryHead::new(Owner::Class(Name::from(TOP_OWNER)), TOP_MEMBER)
    }

    pub fn is_top(&self) -> bool {
        matches!(&self.owner, Owner::Class(c) if c == TOP_OWNER) && self.member == TOP_MEMBER
    }

    pub fn is_virtual(&self) -> bool {
        self.owner.is_trait()
    }
}

impl fmt::Display for EntryHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{}", self.owner, self.member)
    }
}

impl Serialize for EntryHead {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Whether heads name functions (ordered by `F_v`) or methods (`M_v`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemberKind {
    Function,
    Method,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedEntry {
    pub head: EntryHead,
    pub value: Value,
}

impl ReducedEntry {
    pub fn top() -> Self {
        ReducedEntry {
            head: EntryHead::top(),
            value: Value::Nat(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EntryError {
    #[error("entry head {0} has no measure")]
    NoMeasure(String),
    #[error("measure of {0} is not call-free")]
    MeasureNotCallFree(String),
}

pub fn measure_of<'p>(
    p: &'p Program,
    kind: MemberKind,
    head: &EntryHead,
) -> Result<&'p Expr, EntryError> {
    let m = match kind {
        MemberKind::Function => p
            .func(&head.owner, &head.member)
            .and_then(|f| f.decreases.as_ref()),
        MemberKind::Method => p
            .method(&head.owner, &head.member)
            .and_then(|m| m.measure()),
    };
    m.ok_or_else(|| EntryError::NoMeasure(head.to_string()))
}

/// Reduces an entry to `(head, ⟦Mse head⟧α state)`.
pub fn reduce(
    p: &Program,
    kind: MemberKind,
    head: &EntryHead,
    s: &State,
) -> Result<ReducedEntry, EntryError> {
    if head.is_top() {
        return Ok(ReducedEntry::top());
    }
    let m = measure_of(p, kind, head)?;
    let value =
        eval_alpha(p, m, s).map_err(|_| EntryError::MeasureNotCallFree(head.to_string()))?;
    Ok(ReducedEntry {
        head: head.clone(),
        value,
    })
}

/// Applies a catalogue order. The top entry is above every other entry.
pub fn order_holds(spec: &OrderSpec, a: &ReducedEntry, b: &ReducedEntry) -> bool {
    if a.head.is_top() {
        return false;
    }
    if b.head.is_top() {
        return true;
    }
    base_order(spec, a, b)
}

fn base_order(spec: &OrderSpec, a: &ReducedEntry, b: &ReducedEntry) -> bool {
    match spec {
        OrderSpec::NatLt => a.value.as_nat() < b.value.as_nat(),
        OrderSpec::ProperSubset => {
            let (ra, rb) = (a.value.as_region(), b.value.as_region());
            ra.len() < rb.len() && ra.is_subset(&rb)
        }
        OrderSpec::Lex { ranks, then } => {
            let rank = |h: &EntryHead| {
                ranks
                    .iter()
                    .position(|r| *r == h.member)
                    .unwrap_or(ranks.len())
            };
            let (x, y) = (rank(&a.head), rank(&b.head));
            x < y || (x == y && base_order(then, a, b))
        }
    }
}

pub fn order_for(p: &Program, kind: MemberKind) -> OrderSpec {
    match kind {
        MemberKind::Function => p.function_order(),
        MemberKind::Method => p.method_order(),
    }
}

/// `FOrder a b`
pub fn forder(
    p: &Program,
    a: (&EntryHead, &State),
    b: (&EntryHead, &State),
) -> Result<bool, EntryError> {
    let ra = reduce(p, MemberKind::Function, a.0, a.1)?;
    let rb = reduce(p, MemberKind::Function, b.0, b.1)?;
    Ok(order_holds(&p.function_order(), &ra, &rb))
}

/// `MOrder a b`
pub fn morder(
    p: &Program,
    a: (&EntryHead, &State),
    b: (&EntryHead, &State),
) -> Result<bool, EntryError> {
    let ra = reduce(p, MemberKind::Method, a.0, a.1)?;
    let rb = reduce(p, MemberKind::Method, b.0, b.1)?;
    Ok(order_holds(&p.method_order(), &ra, &rb))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderVerdict {
    pub irreflexive: Result<(), String>,
    pub transitive: Result<(), String>,
    pub acyclic: Result<(), Vec<String>>,
}

impl OrderVerdict {
    pub fn pass(&self) -> bool {
        self.irreflexive.is_ok() && self.transitive.is_ok() && self.acyclic.is_ok()
    }

    pub fn describe_failure(&self) -> Option<String> {
        if let Err(w) = &self.acyclic {
            return Some(format!("cycle: {}", w.join(" > ")));
        }
        if let Err(w) = &self.irreflexive {
            return Some(format!("reflexive at {w}"));
        }
        if let Err(w) = &self.transitive {
            return Some(format!("not transitive: {w}"));
        }
        None
    }
}

fn show(r: &ReducedEntry) -> String {
    format!("({}, {:?})", r.head, r.value)
}

/// Searches a finite set of reduced entries for a counterexample to
/// well-foundedness of `rel`. A pass means no counterexample in the set.
pub fn check_wellfoundedness(
    entries: &[ReducedEntry],
    rel: impl Fn(&ReducedEntry, &ReducedEntry) -> bool,
) -> OrderVerdict {
    let n = entries.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if rel(&entries[i], &entries[j]) {
                adj[i].push(j);
            }
        }
    }
    let irreflexive = match (0..n).find(|&i| adj[i].contains(&i)) {
        Some(i) => Err(show(&entries[i])),
        None => Ok(()),
    };
    let mut transitive = Ok(());
    'outer: for i in 0..n {
        for &j in &adj[i] {
            for &k in &adj[j] {
                if !adj[i].contains(&k) {
                    transitive = Err(format!(
                        "{} < {} < {} but not {} < {}",
                        show(&entries[i]),
                        show(&entries[j]),
                        show(&entries[k]),
                        show(&entries[i]),
                        show(&entries[k])
                    ));
                    break 'outer;
                }
            }
        }
    }
    // Iterative DFS for a cycle in the "a < b" graph.
    let mut color = vec![0u8; n];
    let mut parent = vec![usize::MAX; n];
    let mut acyclic = Ok(());
    'roots: for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        color[root] = 1;
        while let Some(&mut (v, ref mut idx)) = stack.last_mut() {
            if *idx < adj[v].len() {
                let w = adj[v][*idx];
                *idx += 1;
                if color[w] == 0 {
                    color[w] = 1;
                    parent[w] = v;
                    stack.push((w, 0));
                } else if color[w] == 1 {
                    let mut chain = vec![show(&entries[w])];
                    let mut u = v;
                    while u != w && u != usize::MAX {
                        chain.push(show(&entries[u]));
                        u = parent[u];
                    }
                    chain.push(show(&entries[w]));
                    chain.reverse();
                    acyclic = Err(chain);
                    break 'roots;
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    OrderVerdict {
        irreflexive,
        transitive,
        acyclic,
    }
}

/// Reduced entries over the given heads and measure values drawn from naturals
/// `0..=nat_max`, booleans and every region over `max_addr` pointers.
pub fn bounded_reduced_entries(
    heads: &[EntryHead],
    nat_max: u64,
    max_addr: u64,
    class: &str,
) -> Vec<ReducedEntry> {
    let mut values: Vec<Value> = (0..=nat_max).map(Value::Nat).collect();
    values.push(Value::Bool(false));
    values.push(Value::Bool(true));
    let ptrs: Vec<Ptr> = (1..=max_addr).map(|a| Ptr::new(a, class)).collect();
    for mask in 0u64..(1 << ptrs.len()) {
        let r = ptrs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.clone())
            .collect();
        values.push(Value::Region(r));
    }
    let mut out = Vec::new();
    for h in heads {
        for v in &values {
            out.push(ReducedEntry {
                head: h.clone(),
                value: v.clone(),
            });
        }
    }
    out
}

/// Heads of every function (or method) with a measure, keyed for reporting.
pub fn measured_heads(p: &Program, kind: MemberKind) -> BTreeMap<String, EntryHead> {
    let heads = match kind {
        MemberKind::Function => p.function_heads(),
        MemberKind::Method => p.method_heads(),
    };
    heads
        .into_iter()
        .map(|(o, m)| EntryHead {
            owner: o,
            member: m,
        })
        .filter(|h| measure_of(p, kind, h).is_ok())
        .map(|h| (h.to_string(), h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(member: &str, v: Value) -> ReducedEntry {
        ReducedEntry {
            head: EntryHead::new(Owner::Trait("T".into()), member),
            value: v,
        }
    }

    fn region(addrs: &[u64]) -> Value {
        Value::Region(addrs.iter().map(|a| Ptr::new(*a, "C")).collect())
    }

    #[test]
    fn top_is_above_everything() {
        let a = re("f", Value::Nat(100));
        assert!(order_holds(&OrderSpec::NatLt, &a, &ReducedEntry::top()));
        assert!(!order_holds(&OrderSpec::NatLt, &ReducedEntry::top(), &a));
        assert!(!order_holds(
            &OrderSpec::NatLt,
            &ReducedEntry::top(),
            &ReducedEntry::top()
        ));
    }

    #[test]
    fn subset_order() {
        let o = OrderSpec::ProperSubset;
        assert!(order_holds(
            &o,
            &re("f", region(&[2])),
            &re("f", region(&[1, 2]))
        ));
        assert!(!order_holds(
            &o,
            &re("f", region(&[])),
            &re("f", region(&[]))
        ));
        assert!(!order_holds(
            &o,
            &re("f", region(&[1])),
            &re("f", region(&[2]))
        ));
    }

    #[test]
    fn lex_ranks_then_base() {
        let o = OrderSpec::Lex {
            ranks: vec!["a".into(), "b".into()],
            then: Box::new(OrderSpec::NatLt),
        };
        assert!(order_holds(
            &o,
            &re("a", Value::Nat(9)),
            &re("b", Value::Nat(0))
        ));
        assert!(!order_holds(
            &o,
            &re("b", Value::Nat(0)),
            &re("a", Value::Nat(9))
        ));
        assert!(order_holds(
            &o,
            &re("b", Value::Nat(1)),
            &re("b", Value::Nat(2))
        ));
    }

    #[test]
    fn wellfoundedness_checks() {
        let heads = vec![EntryHead::new(Owner::Trait("T".into()), "f")];
        let es = bounded_reduced_entries(&heads, 8, 4, "C");
        let v = check_wellfoundedness(&es, |a, b| order_holds(&OrderSpec::ProperSubset, a, b));
        assert!(v.pass(), "{v:?}");
        let v = check_wellfoundedness(&es, |a, b| order_holds(&OrderSpec::NatLt, a, b));
        assert!(v.pass());
        let v = check_wellfoundedness(&es, |_, _| true);
        assert!(!v.pass());
        assert!(v.irreflexive.is_err());
        assert!(v.acyclic.is_err());
        let v = check_wellfoundedness(&es, |a, b| {
            a.value != b.value
                && a.value.as_nat() <= 1
                && b.value.as_nat() <= 1
                && matches!(a.value, Value::Nat(_))
                && matches!(b.value, Value::Nat(_))
        });
        let w = v.acyclic.unwrap_err();
        assert_eq!(w.first(), w.last());
    }
}
