//! One PASS/FAIL line per acceptance criterion, written straight to stderr
//! so they show without `--nocapture`. The test fails if any criterion fails.

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrl::effects::{locs, mod_vars, region_to_effects};
use xrl::interp::diff::{diff, DiffConfig};
use xrl::interp::gen::{class_fields, entry_state, GenConfig};
use xrl::interp::{Interp, Monitors, RunOutcome};
use xrl::logic::{check_certificates, parse_cert, CheckOutcome};
use xrl::mutate::{assess, parse_mutations};
use xrl::name::Name;
use xrl::simple::{parse_simple, simple_check, simple_inter_p, simple_inter_t, SimpleOutcome};
use xrl::state::{eq_except, Ptr, Region, State, Value};
use xrl::syntax::parser::{parse_expr_with, ParseCtx};
use xrl::syntax::{parse_program, Owner, Program};
use xrl::wd::{eval_a2, fp_a2};

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/corpus");
const PIZZA: &str = include_str!("../../core/corpus/pizza.xrl");
const PIZZA_PROOF: &str = include_str!("../../core/corpus/pizza.xrlproof");
const LOOPER: &str = include_str!("../../core/corpus/looper.xrl");
const LOOPER_PROOF: &str = include_str!("../../core/corpus/looper.xrlproof");
const MUTATIONS: &str = include_str!("../../core/corpus/pizza.mutations.json");
const COUNTDOWN: &str = include_str!("../../core/corpus/countdown.simple");
const COUNTDOWN_PROOF: &str = include_str!("../../core/corpus/countdown.simpleproof");

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn load(src: &str, proof: &str) -> (Program, CheckOutcome) {
    let p = parse_program(src).unwrap();
    let out = check_certificates(&p, &parse_cert(&p, proof).unwrap());
    assert!(out.diags.is_empty(), "{:?}", out.diags);
    (p, out)
}

/// Toppings bottom-up over a Crust at address 1, `this` at the head.
fn chain(tops: &[&str]) -> State {
    let mut s = State::new();
    let crust = Ptr::new(1, "Crust");
    s.add_alloc(crust.clone());
    let mut fp: Region = [crust.clone()].into_iter().collect();
    s.heap_update_mut(&crust, "fp", Value::Region(fp.clone()));
    let mut head = crust;
    for (i, c) in tops.iter().enumerate() {
        let me = Ptr::new(i as u64 + 2, c);
        s.add_alloc(me.clone());
        fp.insert(me.clone());
        s.heap_update_mut(&me, "nt", Value::Ptr(head.clone()));
        s.heap_update_mut(&me, "fp", Value::Region(fp.clone()));
        head = me;
    }
    s.update("this", Value::Ptr(head))
}

fn rema_entry(tops: &[&str]) -> State {
    let s = chain(tops);
    let fp = s.heap_get(&s.get("this").as_ptr(), "fp");
    s.update("f", fp.clone())
        .update("p", Value::Nat(tops.len() as u64 + 1))
        .update("mse", fp)
}

fn mixed(k: usize, first: &'static str) -> Vec<&'static str> {
    let other = if first == "Anchovy" { "Cheese" } else { "Anchovy" };
    (0..k).map(|i| if i % 2 == 0 { first } else { other }).collect()
}

fn head_class(tops: &[&str]) -> String {
    tops.last().copied().unwrap_or("Crust").to_string()
}

fn c1_check_exits_zero() -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_xrl"))
        .args(["check", &format!("{CORPUS}/pizza.xrl"), &format!("{CORPUS}/pizza.xrlproof")])
        .output()
        .map_err(|e| e.to_string())?;
    let j: serde_json::Value =
        serde_json::from_slice(&out.stdout).map_err(|e| format!("report is not JSON: {e}"))?;
    if out.status.code() != Some(0) {
        return Err(format!("exit {:?}", out.status.code()));
    }
    let entry: Vec<_> = j["obligations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["id"].as_str().unwrap().starts_with("entry/"))
        .collect();
    let kinds: BTreeSet<&str> = entry.iter().map(|o| o["kind"].as_str().unwrap()).collect();
    for k in ["VIRTUAL_ENTRY_SOUND_F", "VIRTUAL_ENTRY_SOUND_M", "TOTAL_ABSTRACTION", "P1", "FDF1"] {
        if !kinds.contains(k) {
            return Err(format!("no {k} obligation"));
        }
    }
    if let Some(o) = entry.iter().find(|o| o["status"] != "pass") {
        return Err(format!("{} is {}", o["id"], o["status"]));
    }
    Ok(format!("exit 0, {} entry obligations pass", entry.len()))
}

fn c2_price_values() -> Verdict {
    let p = parse_program(PIZZA).unwrap();
    let e = parse_expr_with("this.price@Pizza()", &ParseCtx::of_program(&p)).unwrap();
    for k in 0..=8usize {
        for t in ["Anchovy", "Cheese"] {
            let got = eval_a2(&p, &e, &chain(&vec![t; k]));
            if got != Ok(Value::Nat(k as u64 + 1)) {
                return Err(format!("k={k} {t}: {got:?}"));
            }
        }
    }
    Ok("price is k+1 for k in 0..=8".into())
}

fn c3_fuel_free_totality() -> Verdict {
    let (p, certs) = load(PIZZA, PIZZA_PROOF);
    let mut events = 0;
    for k in 0..=64 {
        for first in ["Anchovy", "Cheese"] {
            let tops = mixed(k, first);
            let d = certs.certs[&(head_class(&tops).as_str().into(), "remA".into())]
                .total
                .clone()
                .unwrap();
            let mut it = Interp::new(&p, &certs, Monitors::default()).with_trace();
            let out = it.inter_t(&d, rema_entry(&tops));
            if out.ok().is_none() {
                return Err(format!("k={k}: {:?}", out.violation()));
            }
            let tr = it.take_trace();
            events += tr.len();
            if tr.iter().any(|e| e.fuel.is_some() || e.monitors.iter().any(|m| !m.1)) {
                return Err(format!("k={k}: fuel or failed monitor in trace"));
            }
            let ms: Vec<Region> = tr
                .iter()
                .filter(|e| e.is_entry())
                .map(|e| e.reduced_measure.clone().unwrap().as_region())
                .collect();
            if ms.len() != k + 1 || ms.windows(2).any(|w| !(w[1].is_subset(&w[0]) && w[1].len() < w[0].len())) {
                return Err(format!("k={k}: entry measures do not strictly decrease"));
            }
        }
    }
    Ok(format!("130 runs, depth 0..=64, {events} events"))
}

fn c4_cast_and_looper() -> Verdict {
    let (p, certs) = load(PIZZA, PIZZA_PROOF);
    for k in 0..=16 {
        let tops = mixed(k, "Anchovy");
        let d = certs.certs[&(head_class(&tops).as_str().into(), "remA".into())]
            .partial
            .clone()
            .unwrap();
        let mut s = rema_entry(&tops);
        s.remove_var("mse");
        let a = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, 0, s.clone());
        let b = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, 1000, s);
        if a.ok().is_none() || a != b {
            return Err(format!("k={k}: fuel 0 and 1000 differ"));
        }
    }
    let (p, certs) = load(LOOPER, LOOPER_PROOF);
    let d = certs.certs[&("Spinner".into(), "spin".into())].partial.clone().unwrap();
    let me = Ptr::new(1, "Spinner");
    let mut s = State::new();
    s.add_alloc(me.clone());
    let s = s.update("this", Value::Ptr(me));
    let fuels: Vec<u64> = (0..=64).chain((1..=64).map(|i| i * 10_000 / 64)).collect();
    for &f in &fuels {
        let r = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, f, s.clone());
        if r != RunOutcome::Timeout {
            return Err(format!("looper at fuel {f}: {:?}", r.violation()));
        }
    }
    Ok(format!("Cast identical for 17 chains; looper Timeout at {} sampled fuels up to 10^4", fuels.len()))
}

fn c5_frames_and_reads() -> Verdict {
    let (p, certs) = load(PIZZA, PIZZA_PROOF);
    let classes = ["Anchovy", "Cheese", "Crust"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = 0;
    while runs < 500 {
        let class = *classes.choose(&mut rng).unwrap();
        let Some(s) = entry_state(&p, &mut rng, class, "remA", true, &GenConfig::default()) else {
            continue;
        };
        runs += 1;
        let m = p.method(&Owner::Class(class.into()), "remA").unwrap();
        let d = certs.certs[&(class.into(), "remA".into())].total.clone().unwrap();
        let out = Interp::new(&p, &certs, Monitors::none()).inter_t(&d, s.clone());
        let t = out.ok().ok_or_else(|| format!("run {runs} did not end normally"))?;
        let mv = mod_vars(m.body.as_ref().unwrap());
        let grow = mv.contains("alloc");
        let vars: BTreeSet<Name> = mv
            .into_iter()
            .filter(|x| x.as_str() != "alloc")
            .chain(["ret".into(), "mse".into()])
            .collect();
        let ls = locs(&p, &region_to_effects(&p, &m.modifies), &s);
        eq_except(&s, t, &vars, &ls, grow).map_err(|e| format!("run {runs}: {e}"))?;
    }
    let ctx = ParseCtx::of_program(&p);
    let exprs = ["this.price@Pizza()", "this.valid@Pizza()", "this.fp"]
        .map(|e| parse_expr_with(e, &ctx).unwrap());
    let cfg = GenConfig {
        junk: 0.5,
        ..GenConfig::default()
    };
    let (mut muts, mut skipped) = (0, 0);
    while muts < 1000 {
        let class = *classes.choose(&mut rng).unwrap();
        let Some(s) = entry_state(&p, &mut rng, class, "remA", false, &cfg) else {
            continue;
        };
        let e = exprs.choose(&mut rng).unwrap();
        let v = eval_a2(&p, e, &s).map_err(|x| format!("{x:?}"))?;
        let fp = fp_a2(&p, e, &s).unwrap();
        let cands: Vec<(Ptr, Name)> = s
            .alloc()
            .iter()
            .flat_map(|o| class_fields(&p, &o.class).into_iter().map(move |f| (o.clone(), f.name.clone())))
            .filter(|l| !fp.contains(l))
            .collect();
        let Some((o, f)) = cands.choose(&mut rng) else {
            continue;
        };
        let alloc: Vec<Ptr> = s.alloc().iter().cloned().collect();
        let val = match rng.gen_range(0..3) {
            0 => Value::Nat(rng.gen_range(0..50)),
            1 => Value::Ptr(alloc.choose(&mut rng).unwrap().clone()),
            _ => Value::Region(alloc.iter().filter(|_| rng.gen()).cloned().collect()),
        };
        let t = s.heap_update(o, f, val);
        match eval_a2(&p, e, &t) {
            Ok(w) if w == v => muts += 1,
            Ok(w) => return Err(format!("{e:?}: {v:?} became {w:?}")),
            Err(_) => skipped += 1,
        }
    }
    Ok(format!("500 frames hold; 1000 mutations outside the footprint keep the value ({skipped} left the defined domain)"))
}

fn c6_oracle() -> Verdict {
    let mut lines = Vec::new();
    for (src, proof) in [(PIZZA, PIZZA_PROOF), (LOOPER, LOOPER_PROOF)] {
        let (p, certs) = load(src, proof);
        let r = diff(&p, &certs, &DiffConfig::default(), Monitors::default(), None);
        if r.total_disagreements() != 0 {
            return Err(r.to_json()["first"].to_string());
        }
        for m in &r.methods {
            lines.push(format!("{} {}/{}", m.method, m.compared, m.generated));
        }
    }
    Ok(format!("0 disagreements; compared/generated: {}", lines.join(", ")))
}

fn c7_mutations() -> Verdict {
    let p = parse_program(PIZZA).unwrap();
    let cert: serde_json::Value = serde_json::from_str(PIZZA_PROOF).unwrap();
    let f = parse_mutations(MUTATIONS)?;
    if f.mutations.len() != 10 {
        return Err(format!("{} mutations shipped", f.mutations.len()));
    }
    for m in &f.mutations {
        if !assess(&p, &cert, m, 20, 1)?.caught() {
            return Err(format!("{} went unnoticed", m.name));
        }
    }
    Ok("10 of 10 caught".into())
}

fn c8_countdown() -> Verdict {
    let p = parse_simple(COUNTDOWN).map_err(|d| d.message)?;
    let c = simple_check(&p, &serde_json::from_str(COUNTDOWN_PROOF).unwrap(), 16);
    if !c.ok() {
        return Err(format!("{:?}", c.diags));
    }
    let mut s = State::new();
    s.update_mut("x", Value::Nat(100));
    let t = simple_inter_t(&p, &c, "p", s.clone());
    let ms: Vec<u64> = t.entries.iter().map(|e| e.1).collect();
    if ms != (0..=100).rev().collect::<Vec<_>>() {
        return Err(format!("entry measures {ms:?}"));
    }
    let q = simple_inter_p(&p, &c, "p", 0, s);
    match (t.outcome, q.outcome) {
        (SimpleOutcome::Ok(mut a), SimpleOutcome::Ok(mut b)) => {
            a.remove_var("mse");
            b.remove_var("mse");
            if a != b {
                return Err("interP(Cast) disagrees".into());
            }
        }
        (a, b) => return Err(format!("{a:?} / {b:?}")),
    }
    Ok("101 entries with measures 100..0; Cast agrees at fuel 0".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("1 pizza check exits 0 with entry obligations passing", c1_check_exits_zero),
        ("2 price semantics", c2_price_values),
        ("3 fuel-free totality", c3_fuel_free_totality),
        ("4 Cast fuel independence and looper timeout", c4_cast_and_looper),
        ("5 frame contract and read-effect soundness", c5_frames_and_reads),
        ("6 oracle equivalence", c6_oracle),
        ("7 mutation robustness", c7_mutations),
        ("8 simple-logic countdown", c8_countdown),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panic".into()))
        });
        let line = match r {
            Ok(d) => format!("PASS criterion {name}: {d}\n"),
            Err(d) => {
                failed += 1;
                format!("FAIL criterion {name}: {d}\n")
            }
        };
        let _ = std::io::stderr().write_all(line.as_bytes());
    }
    assert_eq!(failed, 0, "{failed} criteria failed");
}
