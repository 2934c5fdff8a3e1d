mod common;

use std::collections::BTreeSet;

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrl::effects::{locs, mod_vars, region_to_effects};
use xrl::interp::gen::{class_fields, entry_state, GenConfig};
use xrl::interp::{Interp, Monitors};
use xrl::name::Name;
use xrl::state::{eq_except, Loc, Ptr, State, Value};
use xrl::syntax::parser::{parse_expr_with, ParseCtx};
use xrl::syntax::Owner;
use xrl::wd::{eval_a2, fp_a2};

const CLASSES: [&str; 3] = ["Anchovy", "Cheese", "Crust"];

/// Runs with every monitor off, so the contract is checked here alone.
#[test]
fn frame_contract_on_500_runs() {
    let (p, certs) = pizza();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = GenConfig::default();
    let (mut runs, mut ok) = (0, 0);
    while runs < 500 {
        let class = *CLASSES.choose(&mut rng).unwrap();
        let Some(s) = entry_state(&p, &mut rng, class, "remA", true, &cfg) else {
            continue;
        };
        runs += 1;
        let d = certs.certs[&(class.into(), "remA".into())].total.clone().unwrap();
        let m = p.method(&Owner::Class(class.into()), "remA").unwrap();
        let out = Interp::new(&p, &certs, Monitors::none()).inter_t(&d, s.clone());
        let Some(t) = out.ok() else {
            panic!("run {runs} did not end normally: {:?}", out.violation())
        };
        ok += 1;
        let mv = mod_vars(m.body.as_ref().unwrap());
        let grow = mv.contains("alloc");
        let vars: BTreeSet<Name> = mv
            .into_iter()
            .filter(|x| x.as_str() != "alloc")
            .chain(["ret".into(), "mse".into()])
            .collect();
        let ls = locs(&p, &region_to_effects(&p, &m.modifies), &s);
        if let Err(e) = eq_except(&s, t, &vars, &ls, grow) {
            panic!("run {runs} of {class}.remA breaks its frame: {e}\n{}", s.to_json());
        }
    }
    assert_eq!(ok, 500);
}

fn random_value(rng: &mut ChaCha8Rng, alloc: &[Ptr]) -> Value {
    match rng.gen_range(0..5) {
        0 => Value::Nat(rng.gen_range(0..50)),
        1 => Value::Bool(rng.gen()),
        2 => Value::null(),
        3 => Value::Ptr(alloc.choose(rng).cloned().unwrap_or_else(Ptr::null)),
        _ => Value::Region(alloc.iter().filter(|_| rng.gen()).cloned().collect()),
    }
}

fn outside(p: &xrl::syntax::Program, s: &State, fp: &BTreeSet<Loc>) -> Vec<Loc> {
    s.alloc()
        .iter()
        .flat_map(|o| {
            class_fields(p, &o.class)
                .into_iter()
                .map(move |f| (o.clone(), f.name.clone()))
        })
        .filter(|l| !fp.contains(l))
        .collect()
}

#[test]
fn reads_outside_the_footprint_do_not_matter() {
    let (p, _) = pizza();
    let exprs = [
        "this.price@Pizza()",
        "this.valid@Pizza()",
        "this.valid@Pizza() && f == this.fp && p == this.price@Pizza()",
        "this.fp",
    ]
    .map(|e| parse_expr_with(e, &ParseCtx::of_program(&p)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = GenConfig {
        junk: 0.5,
        ..GenConfig::default()
    };
    let (mut mutations, mut undefined, mut failures) = (0, 0, Vec::<String>::new());
    while mutations < 1000 {
        let class = *CLASSES.choose(&mut rng).unwrap();
        let Some(s) = entry_state(&p, &mut rng, class, "remA", false, &cfg) else {
            continue;
        };
        let e = exprs.choose(&mut rng).unwrap();
        let v = eval_a2(&p, e, &s).expect("preconditions make the corpus expressions defined");
        let fp = fp_a2(&p, e, &s).unwrap();
        let cands = outside(&p, &s, &fp);
        if cands.is_empty() {
            continue;
        }
        let alloc: Vec<Ptr> = s.alloc().iter().cloned().collect();
        let mut t = s.clone();
        for _ in 0..rng.gen_range(1..=3) {
            let (o, f) = cands.choose(&mut rng).unwrap();
            t.heap_update_mut(o, f, random_value(&mut rng, &alloc));
        }
        // Values are defined only where DF holds; count the mutations that keep it.
        let Ok(w) = eval_a2(&p, e, &t) else {
            undefined += 1;
            continue;
        };
        mutations += 1;
        if w != v {
            failures.push(format!("{e:?}: {v:?} became {w:?}"));
        }
    }
    assert!(undefined < mutations, "{undefined} mutations broke well-definedness");
    assert!(failures.is_empty(), "{} failures, first: {}", failures.len(), failures[0]);
}

#[test]
fn footprints_are_exactly_the_chain() {
    let (p, _) = pizza();
    let tops = mixed(5);
    let s = rema_entry(&tops);
    let fp = fp_a2(&p, &parse_expr_with("this.price@Pizza()", &ParseCtx::of_program(&p)).unwrap(), &s).unwrap();
    let objs: BTreeSet<u64> = fp.iter().map(|l| l.0.addr).collect();
    // A Crust prices at 1 without reading the heap.
    assert_eq!(objs, (2..=6).collect());
}

#[test]
fn a_write_inside_the_footprint_can_change_the_value() {
    let (p, _) = pizza();
    let e = parse_expr_with("this.price@Pizza()", &ParseCtx::of_program(&p)).unwrap();
    let s = rema_entry(&mixed(3));
    let head = s.get("this").as_ptr();
    let crust = Ptr::new(1, "Crust");
    let t = s.heap_update(&head, "nt", Value::Ptr(crust));
    assert_eq!(eval_a2(&p, &e, &s), Ok(Value::Nat(4)));
    assert_eq!(eval_a2(&p, &e, &t), Ok(Value::Nat(2)));
}
