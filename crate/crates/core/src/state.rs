//! Runtime values and states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use im::{OrdMap, OrdSet};
use serde_json::{json, Map, Value as Json};

use crate::name::{reserved, Name};

pub const NULL_CLASS: &str = "Null";
/// Prefix of the class name of an object whose class is still open.
pub const LAZY: char = '?';

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ptr {
    pub addr: u64,
    pub class: Name,
}

impl Ptr {
    pub fn new(addr: u64, class: &str) -> Ptr {
        Ptr {
            addr,
            class: Name::from(class),
        }
    }

    /// Created by the enumerator with its class still open; the class
    /// name holds the target it must inhabit.
    pub fn is_lazy(&self) -> bool {
        self.class.starts_with(LAZY)
    }

    pub fn null() -> Ptr {
        Ptr::new(0, NULL_CLASS)
    }

    pub fn is_null(&self) -> bool {
        self.addr == 0 && self.class == NULL_CLASS
    }
}

impl fmt::Debug for Ptr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            f.write_str("null")
        } else {
            write!(f, "{}#{}", self.class, self.addr)
        }
    }
}

pub type Region = BTreeSet<Ptr>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Nat(u64),
    Bool(bool),
    Ptr(Ptr),
    Region(Region),
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Ptr(p) => write!(f, "{p:?}"),
            Value::Region(r) => f.debug_set().entries(r.iter()).finish(),
        }
    }
}

/// Value of unbound variables and unwritten heap locations.
pub const DEFAULT: Value = Value::Nat(0);

impl Value {
    pub fn null() -> Value {
        Value::Ptr(Ptr::null())
    }

    /// `↓n`
    pub fn as_nat(&self) -> u64 {
        match self {
            Value::Nat(n) => *n,
            _ => 0,
        }
    }

    /// `↓b`
    pub fn as_bool(&self) -> bool {
        matches!(self, Value::Bool(true))
    }

    /// `↓p`
    pub fn as_ptr(&self) -> Ptr {
        match self {
            Value::Ptr(p) => p.clone(),
            _ => Ptr::null(),
        }
    }

    /// `↓r`
    pub fn as_region(&self) -> Region {
        match self {
            Value::Region(r) => r.clone(),
            _ => Region::new(),
        }
    }

    pub fn region_ref(&self) -> Option<&Region> {
        match self {
            Value::Region(r) => Some(r),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Nat(n) => json!(n),
            Value::Bool(b) => json!(b),
            Value::Ptr(p) => ptr_json(p),
            Value::Region(r) => Json::Array(r.iter().map(ptr_json).collect()),
        }
    }

    pub fn from_json(j: &Json) -> Result<Value, String> {
        match j {
            Json::Number(n) => n
                .as_u64()
                .map(Value::Nat)
                .ok_or_else(|| format!("not a natural: {n}")),
            Json::Bool(b) => Ok(Value::Bool(*b)),
            Json::Array(items) => {
                if matches!(items.first(), Some(Json::Number(_))) {
                    Ok(Value::Ptr(ptr_from_json(j)?))
                } else {
                    let mut r = Region::new();
                    for it in items {
                        r.insert(ptr_from_json(it)?);
                    }
                    Ok(Value::Region(r))
                }
            }
            Json::Null => Ok(Value::null()),
            other => Err(format!("unsupported value {other}")),
        }
    }
}

fn ptr_json(p: &Ptr) -> Json {
    json!([p.addr, p.class.as_str()])
}

fn ptr_from_json(j: &Json) -> Result<Ptr, String> {
    match j {
        Json::Array(a) if a.len() == 2 => {
            let addr = a[0].as_u64().ok_or("pointer address must be a natural")?;
            let class = a[1].as_str().ok_or("pointer class must be a string")?;
            Ok(Ptr::new(addr, class))
        }
        Json::Null => Ok(Ptr::null()),
        other => Err(format!("not a pointer: {other}")),
    }
}

pub type Loc = (Ptr, Name);

/// A read of an item the enumerator has not decided yet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Miss {
    Var(Name),
    Loc(Loc),
    Alloc,
    /// The class of an object created without one.
    Class(Ptr),
}

/// Records the first undecided read of a partially built state.
#[derive(Debug, Default)]
pub struct Probe {
    miss: OnceLock<Miss>,
}

impl Probe {
    pub fn new() -> Arc<Probe> {
        Arc::new(Probe::default())
    }

    fn record(&self, m: Miss) {
        let _ = self.miss.set(m);
    }

    pub fn miss(&self) -> Option<&Miss> {
        self.miss.get()
    }
}

#[derive(Clone, Default)]
pub struct State {
    stack: OrdMap<Name, Value>,
    heap: OrdMap<Loc, Value>,
    alloc: OrdSet<Ptr>,
    stack_probe: Option<Arc<Probe>>,
    heap_probe: Option<Arc<Probe>>,
    /// With a heap probe: whether reading `alloc` is decided.
    alloc_frozen: bool,
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl PartialEq for State {
    fn eq(&self, other: &State) -> bool {
        self.alloc == other.alloc
            && self.stack_diff(other).is_none()
            && self.heap_diff(other).is_none()
    }
}

impl State {
    pub fn new() -> State {
        State::default()
    }

    /// Raw stack read; `alloc` is an ordinary name here.
    pub fn get(&self, x: &str) -> Value {
        match self.stack.get(x) {
            Some(v) => v.clone(),
            None => {
                if let Some(p) = &self.stack_probe {
                    p.record(Miss::Var(Name::from(x)));
                }
                DEFAULT
            }
        }
    }

    /// `s[x]`: the allocation set for `alloc`, the stack value otherwise.
    pub fn lookup(&self, x: &str) -> Value {
        if x == reserved::ALLOC {
            if let Some(p) = &self.heap_probe {
                if !self.alloc_frozen {
                    p.record(Miss::Alloc);
                }
            }
            Value::Region(self.alloc.iter().cloned().collect())
        } else {
            self.get(x)
        }
    }

    pub fn is_bound(&self, x: &str) -> bool {
        self.stack.contains_key(x)
    }

    pub fn update(&self, x: &str, v: Value) -> State {
        let mut s = self.clone();
        s.stack.insert(Name::from(x), v);
        s
    }

    pub fn update_mut(&mut self, x: &str, v: Value) {
        self.stack.insert(Name::from(x), v);
    }

    /// An attached probe has recorded a miss, so values read so far may be stand-ins.
    pub fn probe_missed(&self) -> bool {
        self.heap_probe.as_ref().is_some_and(|p| p.miss().is_some())
            || self.stack_probe.as_ref().is_some_and(|p| p.miss().is_some())
    }

    /// Shares heap and allocation storage with `other`.
    pub fn same_heap(&self, other: &State) -> bool {
        self.heap.ptr_eq(&other.heap) && self.alloc.ptr_eq(&other.alloc)
    }

    /// Class of `p`; observing an undecided class is a miss.
    pub fn class_of<'p>(&self, p: &'p Ptr) -> &'p Name {
        if p.is_lazy() {
            if let Some(pr) = &self.heap_probe {
                pr.record(Miss::Class(p.clone()));
            }
        }
        &p.class
    }

    /// Replaces the object `from` by `to` everywhere.
    pub fn rename_ptr(&self, from: &Ptr, to: &Ptr) -> State {
        let fix = |v: &Value| match v {
            Value::Ptr(q) if q == from => Value::Ptr(to.clone()),
            Value::Region(r) if r.contains(from) => {
                let mut r = r.clone();
                r.remove(from);
                r.insert(to.clone());
                Value::Region(r)
            }
            v => v.clone(),
        };
        let mut s = self.clone();
        s.stack = self.stack.iter().map(|(k, v)| (k.clone(), fix(v))).collect();
        s.heap = self
            .heap
            .iter()
            .map(|((q, f), v)| {
                let q = if q == from { to.clone() } else { q.clone() };
                ((q, f.clone()), fix(v))
            })
            .collect();
        if s.alloc.remove(from).is_some() {
            s.alloc.insert(to.clone());
        }
        s
    }

    pub fn heap_get(&self, p: &Ptr, f: impl Into<Name>) -> Value {
        let key = (p.clone(), f.into());
        match self.heap.get(&key) {
            Some(v) => v.clone(),
            None => {
                if let Some(pr) = &self.heap_probe {
                    if self.alloc.contains(p) {
                        pr.record(Miss::Loc(key));
                    }
                }
                DEFAULT
            }
        }
    }

    pub fn heap_bound(&self, loc: &Loc) -> bool {
        self.heap.contains_key(loc)
    }

    pub fn heap_update(&self, p: &Ptr, f: &str, v: Value) -> State {
        let mut s = self.clone();
        s.heap.insert((p.clone(), Name::from(f)), v);
        s
    }

    pub fn heap_update_mut(&mut self, p: &Ptr, f: &str, v: Value) {
        self.heap.insert((p.clone(), Name::from(f)), v);
    }

    pub fn alloc(&self) -> &OrdSet<Ptr> {
        &self.alloc
    }

    pub fn is_allocated(&self, p: &Ptr) -> bool {
        self.alloc.contains(p)
    }

    /// Adds a pointer to the allocation set without touching the heap.
    pub fn add_alloc(&mut self, p: Ptr) {
        self.alloc.insert(p);
    }

    /// Least address ≥ 1 not used by any allocated pointer.
    pub fn next_addr(&self) -> u64 {
        let used: BTreeSet<u64> = self.alloc.iter().map(|p| p.addr).collect();
        (1..).find(|a| !used.contains(a)).unwrap()
    }

    /// Allocates an instance of `class`, initialising its fields from `init`.
    pub fn allocate(
        &self,
        class: &str,
        init: impl IntoIterator<Item = (Name, Value)>,
    ) -> (Ptr, State) {
        let p = Ptr::new(self.next_addr(), class);
        let mut s = self.clone();
        let stale: Vec<Loc> = s.heap.keys().filter(|(q, _)| q == &p).cloned().collect();
        for l in stale {
            s.heap.remove(&l);
        }
        for (f, v) in init {
            s.heap.insert((p.clone(), f), v);
        }
        s.alloc.insert(p.clone());
        (p, s)
    }

    /// `s[!x1..xn/v1..vn!]`: fresh stack holding only the bindings; heap and
    /// allocation set unchanged. Errors on a repeated variable.
    pub fn trunc_subst(&self, bindings: &[(Name, Value)]) -> Result<State, String> {
        let mut stack = OrdMap::new();
        for (x, v) in bindings {
            if stack.insert(x.clone(), v.clone()).is_some() {
                return Err(format!(
                    "variable {x} bound twice in truncating substitution"
                ));
            }
        }
        Ok(State {
            stack,
            heap: self.heap.clone(),
            alloc: self.alloc.clone(),
            stack_probe: None,
            heap_probe: self.heap_probe.clone(),
            alloc_frozen: self.alloc_frozen,
        })
    }

    /// Same state with `other`'s stack.
    pub fn with_stack_of(&self, other: &State) -> State {
        let mut s = self.clone();
        s.stack = other.stack.clone();
        s.stack_probe = other.stack_probe.clone();
        s
    }

    pub fn stack_vars(&self) -> impl Iterator<Item = (&Name, &Value)> {
        self.stack.iter()
    }

    pub fn heap_entries(&self) -> impl Iterator<Item = (&Loc, &Value)> {
        self.heap.iter()
    }

    pub fn remove_var(&mut self, x: &str) {
        self.stack.remove(x);
    }

    // ---- probes ----

    pub fn attach_probe(&mut self, probe: Arc<Probe>, alloc_frozen: bool) {
        self.stack_probe = Some(probe.clone());
        self.heap_probe = Some(probe);
        self.alloc_frozen = alloc_frozen;
    }

    pub fn detach_probe(&mut self) {
        self.stack_probe = None;
        self.heap_probe = None;
    }

    pub fn set_alloc_frozen(&mut self, b: bool) {
        self.alloc_frozen = b;
    }

    pub fn alloc_frozen(&self) -> bool {
        self.alloc_frozen
    }

    // ---- comparison ----

    fn stack_diff(&self, other: &State) -> Option<Name> {
        let keys: BTreeSet<&Name> = self.stack.keys().chain(other.stack.keys()).collect();
        keys.into_iter()
            .find(|k| {
                self.stack.get(*k).unwrap_or(&DEFAULT) != other.stack.get(*k).unwrap_or(&DEFAULT)
            })
            .cloned()
    }

    fn heap_diff(&self, other: &State) -> Option<Loc> {
        let keys: BTreeSet<&Loc> = self.heap.keys().chain(other.heap.keys()).collect();
        keys.into_iter()
            .find(|k| {
                self.heap.get(*k).unwrap_or(&DEFAULT) != other.heap.get(*k).unwrap_or(&DEFAULT)
            })
            .cloned()
    }

    pub fn stack_eq_on(&self, other: &State, vars: &BTreeSet<Name>) -> bool {
        vars.iter().all(|x| self.get_raw(x) == other.get_raw(x))
    }

    fn get_raw(&self, x: &str) -> Value {
        self.stack.get(x).cloned().unwrap_or(DEFAULT)
    }

    pub fn heap_get_raw(&self, loc: &Loc) -> Value {
        self.heap.get(loc).cloned().unwrap_or(DEFAULT)
    }

    pub fn var_raw(&self, x: &str) -> Value {
        self.get_raw(x)
    }

    // ---- JSON ----

    pub fn to_json(&self) -> Json {
        let mut stack = Map::new();
        for (k, v) in self.stack.iter() {
            stack.insert(k.to_string(), v.to_json());
        }
        let mut heap: BTreeMap<(u64, String), Map<String, Json>> = BTreeMap::new();
        for ((p, f), v) in self.heap.iter() {
            heap.entry((p.addr, p.class.to_string()))
                .or_default()
                .insert(f.to_string(), v.to_json());
        }
        let mut hj = Map::new();
        for ((a, c), fields) in heap {
            hj.insert(format!("{a}:{c}"), Json::Object(fields));
        }
        json!({
            "alloc": Json::Array(self.alloc.iter().map(ptr_json).collect()),
            "heap": Json::Object(hj),
            "stack": Json::Object(stack),
        })
    }

    pub fn from_json(j: &Json) -> Result<State, String> {
        let obj = j.as_object().ok_or("state must be an object")?;
        for k in obj.keys() {
            if !matches!(k.as_str(), "alloc" | "heap" | "stack") {
                return Err(format!("unknown state key `{k}`"));
            }
        }
        let mut s = State::new();
        if let Some(st) = obj.get("stack") {
            for (k, v) in st.as_object().ok_or("stack must be an object")? {
                if k == reserved::ALLOC {
                    return Err("`alloc` is not a stack variable".into());
                }
                s.stack.insert(Name::from(k.as_str()), Value::from_json(v)?);
            }
        }
        if let Some(a) = obj.get("alloc") {
            for p in a.as_array().ok_or("alloc must be an array")? {
                let p = ptr_from_json(p)?;
                if p.addr == 0 {
                    return Err("address 0 is reserved for null".into());
                }
                s.alloc.insert(p);
            }
        }
        if let Some(h) = obj.get("heap") {
            for (k, fields) in h.as_object().ok_or("heap must be an object")? {
                let (a, c) = k
                    .split_once(':')
                    .ok_or_else(|| format!("heap key `{k}` must be addr:Class"))?;
                let addr: u64 = a.parse().map_err(|_| format!("bad address in `{k}`"))?;
                let p = Ptr::new(addr, c);
                for (f, v) in fields.as_object().ok_or("heap entry must be an object")? {
                    s.heap
                        .insert((p.clone(), Name::from(f.as_str())), Value::from_json(v)?);
                }
            }
        }
        Ok(s)
    }
}

/// `v = s|V;L;grow`: stacks agree off `vars`, heaps agree off `locs` (and off
/// locations of pointers allocated in between), allocation sets equal, or
/// growing when `alloc_may_grow`. Returns a description of the first breach.
pub fn eq_except(
    s: &State,
    t: &State,
    vars: &BTreeSet<Name>,
    locs: &BTreeSet<Loc>,
    alloc_may_grow: bool,
) -> Result<(), String> {
    let keys: BTreeSet<&Name> = s.stack.keys().chain(t.stack.keys()).collect();
    for k in keys {
        if vars.contains(k) {
            continue;
        }
        let (a, b) = (s.get_raw(k), t.get_raw(k));
        if a != b {
            return Err(format!("variable {k} changed from {a:?} to {b:?}"));
        }
    }
    let hkeys: BTreeSet<&Loc> = s.heap.keys().chain(t.heap.keys()).collect();
    for l in hkeys {
        if locs.contains(l) {
            continue;
        }
        if !s.alloc.contains(&l.0) && t.alloc.contains(&l.0) {
            continue;
        }
        let (a, b) = (s.heap_get_raw(l), t.heap_get_raw(l));
        if a != b {
            return Err(format!(
                "location {:?}.{} changed from {a:?} to {b:?}",
                l.0, l.1
            ));
        }
    }
    if alloc_may_grow {
        if !s.alloc.is_subset(&t.alloc) {
            return Err("allocation set shrank".into());
        }
    } else if s.alloc != t.alloc {
        return Err("allocation set changed".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_alloc_aware() {
        let mut s = State::new().update("x", Value::Nat(3));
        s.add_alloc(Ptr::new(1, "Crust"));
        assert_eq!(s.lookup("x"), Value::Nat(3));
        assert_eq!(
            s.lookup("alloc"),
            Value::Region([Ptr::new(1, "Crust")].into_iter().collect())
        );
        assert_eq!(s.lookup("y"), Value::Nat(0));
    }

    #[test]
    fn casts_default() {
        assert!(Value::Bool(true).as_bool());
        assert!(Value::Nat(5).as_region().is_empty());
        let p = Ptr::new(1, "Anchovy");
        assert_eq!(Value::Ptr(p.clone()).as_ptr(), p);
        assert!(Value::Nat(1).as_ptr().is_null());
        assert_eq!(Value::Bool(true).as_nat(), 0);
    }

    #[test]
    fn trunc_subst_resets_stack() {
        let mut s = State::new().update("y", Value::Nat(9));
        s.heap_update_mut(&Ptr::new(1, "A"), "f", Value::Nat(4));
        let p = Ptr::new(1, "A");
        let t = s
            .trunc_subst(&[
                ("this".into(), Value::Ptr(p.clone())),
                ("x".into(), Value::Nat(2)),
            ])
            .unwrap();
        assert_eq!(t.lookup("x"), Value::Nat(2));
        assert_eq!(t.lookup("y"), Value::Nat(0));
        assert_eq!(t.heap_get(&p, "f"), Value::Nat(4));
        let t2 = t.trunc_subst(&[("this".into(), Value::Ptr(p)), ("x".into(), Value::Nat(2))]);
        assert_eq!(t2.unwrap(), t);
        assert!(s
            .trunc_subst(&[("x".into(), Value::Nat(1)), ("x".into(), Value::Nat(2))])
            .is_err());
        assert_eq!(s.trunc_subst(&[]).unwrap().stack_vars().count(), 0);
    }

    #[test]
    fn allocate_least_unused() {
        let mut s = State::new();
        s.add_alloc(Ptr::new(1, "Crust"));
        let (p, t) = s.allocate("Crust", []);
        assert_eq!(p, Ptr::new(2, "Crust"));
        assert_eq!(t.alloc().len(), 2);
        assert!(!s.is_allocated(&p));
        let (q, _) = State::new().allocate("Crust", []);
        assert_eq!(q.addr, 1);
    }

    #[test]
    fn heap_point_update() {
        let p = Ptr::new(1, "A");
        let s = State::new().heap_update(&p, "f", Value::Nat(1));
        let t = s.heap_update(&p, "g", Value::Nat(2));
        assert_eq!(t.heap_get(&p, "f"), Value::Nat(1));
        assert_eq!(t.heap_get(&p, "g"), Value::Nat(2));
    }

    #[test]
    fn semantic_equality_uses_defaults() {
        let s = State::new().update("x", Value::Nat(0));
        assert_eq!(s, State::new());
    }

    #[test]
    fn eq_except_contract() {
        let p = Ptr::new(1, "A");
        let mut s = State::new().update("x", Value::Nat(1));
        s.add_alloc(p.clone());
        let t = s
            .update("y", Value::Nat(2))
            .heap_update(&p, "f", Value::Nat(3));
        let vars: BTreeSet<Name> = ["y".into()].into_iter().collect();
        let locs: BTreeSet<Loc> = [(p.clone(), Name::from("f"))].into_iter().collect();
        assert!(eq_except(&s, &t, &vars, &locs, false).is_ok());
        assert!(eq_except(&s, &t, &BTreeSet::new(), &locs, false).is_err());
        assert!(eq_except(&s, &t, &vars, &BTreeSet::new(), false).is_err());
        let (_, u) = t.allocate("A", [("f".into(), Value::Nat(0))]);
        assert!(eq_except(&s, &u, &vars, &locs, false).is_err());
        assert!(eq_except(&s, &u, &vars, &locs, true).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let p = Ptr::new(1, "Anchovy");
        let c = Ptr::new(2, "Crust");
        let mut s = State::new()
            .update("this", Value::Ptr(p.clone()))
            .update(
                "f",
                Value::Region([p.clone(), c.clone()].into_iter().collect()),
            )
            .update("b", Value::Bool(true))
            .update("e", Value::Region(Region::new()));
        s.add_alloc(p.clone());
        s.add_alloc(c.clone());
        s.heap_update_mut(&p, "nt", Value::Ptr(c));
        s.heap_update_mut(&p, "k", Value::null());
        let j = s.to_json();
        let back = State::from_json(&j).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), j);
        assert_eq!(j["stack"]["this"], json!([1, "Anchovy"]));
    }

    #[test]
    fn probe_records_first_miss() {
        let mut s = State::new();
        let p = Ptr::new(1, "A");
        s.add_alloc(p.clone());
        let probe = Probe::new();
        s.attach_probe(probe.clone(), true);
        s.heap_get(&p, "f");
        s.get("z");
        assert_eq!(probe.miss(), Some(&Miss::Loc((p, "f".into()))));
    }
}
