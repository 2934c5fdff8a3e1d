#![allow(dead_code)]

use xrl::logic::{check_certificates, parse_cert, CheckOutcome};
use xrl::state::{Ptr, Region, State, Value};
use xrl::syntax::{parse_program, Program};

pub const PIZZA: &str = include_str!("../../corpus/pizza.xrl");
pub const PIZZA_PROOF: &str = include_str!("../../corpus/pizza.xrlproof");
pub const LOOPER: &str = include_str!("../../corpus/looper.xrl");
pub const LOOPER_PROOF: &str = include_str!("../../corpus/looper.xrlproof");

pub fn load(src: &str, proof: &str) -> (Program, CheckOutcome) {
    let p = parse_program(src).expect("program parses");
    let cert = parse_cert(&p, proof).expect("certificate parses");
    let out = check_certificates(&p, &cert);
    assert!(out.diags.is_empty(), "{:?}", out.diags);
    (p, out)
}

pub fn pizza() -> (Program, CheckOutcome) {
    load(PIZZA, PIZZA_PROOF)
}

pub fn looper() -> (Program, CheckOutcome) {
    load(LOOPER, LOOPER_PROOF)
}

/// A Crust at address 1 under `toppings`, listed bottom-up. Returns the
/// state and the head pointer.
pub fn chain(toppings: &[&str]) -> (State, Ptr) {
    let mut s = State::new();
    let crust = Ptr::new(1, "Crust");
    s.add_alloc(crust.clone());
    let mut fp: Region = [crust.clone()].into_iter().collect();
    s.heap_update_mut(&crust, "fp", Value::Region(fp.clone()));
    let mut head = crust;
    for (i, class) in toppings.iter().enumerate() {
        let me = Ptr::new(i as u64 + 2, class);
        s.add_alloc(me.clone());
        fp.insert(me.clone());
        s.heap_update_mut(&me, "nt", Value::Ptr(head.clone()));
        s.heap_update_mut(&me, "fp", Value::Region(fp.clone()));
        head = me;
    }
    (s, head)
}

/// Entry state of `remA` at the head of `toppings`: `f` and `p` bound to
/// the footprint and price, `mse` to the footprint.
pub fn rema_entry(toppings: &[&str]) -> State {
    let (s, head) = chain(toppings);
    let fp = s.heap_get(&head, "fp");
    s.update("this", Value::Ptr(head))
        .update("f", fp.clone())
        .update("p", Value::Nat(toppings.len() as u64 + 1))
        .update("mse", fp)
}

/// Alternating Anchovy and Cheese toppings.
pub fn mixed(k: usize) -> Vec<&'static str> {
    (0..k)
        .map(|i| if i % 2 == 0 { "Anchovy" } else { "Cheese" })
        .collect()
}
