mod common;

use common::*;
use proptest::prelude::*;
use xrl::interp::{Interp, Monitors, RunOutcome, TraceEvent, ViolationKind};
use xrl::state::{Ptr, Value};

fn head_class(tops: &[&str]) -> &'static str {
    match tops.last() {
        Some(&"Anchovy") => "Anchovy",
        Some(&"Cheese") => "Cheese",
        _ => "Crust",
    }
}

fn run_total(tops: &[&str]) -> (RunOutcome, Vec<TraceEvent>) {
    let (p, certs) = pizza();
    let d = certs.certs[&(head_class(tops).into(), "remA".into())]
        .total
        .clone()
        .unwrap();
    let mut it = Interp::new(&p, &certs, Monitors::default()).with_trace();
    let out = it.inter_t(&d, rema_entry(tops));
    let tr = it.take_trace();
    (out, tr)
}

fn entry_measures(tr: &[TraceEvent]) -> Vec<Value> {
    tr.iter()
        .filter(|e| e.is_entry())
        .map(|e| e.reduced_measure.clone().expect("total entries carry a measure"))
        .collect()
}

#[test]
fn total_runs_need_no_fuel_up_to_depth_64() {
    for k in [0usize, 1, 2, 3, 5, 8, 13, 21, 34, 55, 64] {
        for first in ["Anchovy", "Cheese"] {
            let mut tops = mixed(k);
            if first == "Cheese" {
                tops.iter_mut().for_each(|t| *t = if *t == "Anchovy" { "Cheese" } else { "Anchovy" });
            }
            let (out, tr) = run_total(&tops);
            assert!(out.ok().is_some(), "k={k}: {:?}", out.violation());
            assert!(tr.iter().all(|e| e.monitors.iter().all(|m| m.1)));
            assert!(tr.iter().all(|e| e.fuel.is_none()));
            let ms = entry_measures(&tr);
            assert_eq!(ms.len(), k + 1);
            for w in ms.windows(2) {
                let (a, b) = (w[0].as_region(), w[1].as_region());
                assert!(b.is_subset(&a) && b.len() < a.len(), "k={k}: {a:?} then {b:?}");
            }
        }
    }
}

#[test]
fn remove_anchovies_result_has_no_anchovy() {
    let tops = ["Cheese", "Anchovy", "Anchovy", "Cheese", "Anchovy"];
    let (out, _) = run_total(&tops);
    let s = out.ok().unwrap().clone();
    let mut cur = s.get("ret").as_ptr();
    let mut seen = Vec::new();
    while cur.class.as_str() != "Crust" {
        seen.push(cur.class.to_string());
        cur = s.heap_get(&cur, "nt").as_ptr();
    }
    assert_eq!(seen, ["Cheese", "Cheese"]);
}

#[test]
fn trace_events_serialize_with_expected_keys() {
    let (_, tr) = run_total(&["Anchovy"]);
    let j = tr[0].to_json();
    for k in ["node", "rule", "entryHead", "reducedMeasure", "monitors"] {
        assert!(j.get(k).is_some(), "missing {k} in {j}");
    }
    assert!(j.get("fuel").is_none());
    assert_eq!(j["entryHead"], "Anchovy;remA");
}

#[test]
fn cast_ignores_fuel() {
    let (p, certs) = pizza();
    for k in [0usize, 1, 4, 9] {
        let tops = mixed(k);
        let d = certs.certs[&(head_class(&tops).into(), "remA".into())]
            .partial
            .clone()
            .unwrap();
        let mut s = rema_entry(&tops);
        s.remove_var("mse");
        let a = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, 0, s.clone());
        let b = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, 1000, s.clone());
        let (Some(a), Some(b)) = (a.ok(), b.ok()) else {
            panic!("k={k}: Cast runs must end normally")
        };
        assert_eq!(a, b);
        assert!(!a.is_bound("mse"), "Cast must unbind mse");
    }
}

#[test]
fn cast_restores_a_bound_mse() {
    let (p, certs) = pizza();
    let tops = mixed(3);
    let d = certs.certs[&("Anchovy".into(), "remA".into())].partial.clone().unwrap();
    let s = rema_entry(&tops).update("mse", Value::Nat(42));
    let out = Interp::new(&p, &certs, Monitors::default()).inter_p(&d, 0, s);
    assert_eq!(out.ok().unwrap().get("mse"), Value::Nat(42));
}

fn spin(fuel: u64) -> RunOutcome {
    let (p, certs) = looper();
    let d = certs.certs[&("Spinner".into(), "spin".into())].partial.clone().unwrap();
    let mut s = xrl::state::State::new();
    let me = Ptr::new(1, "Spinner");
    s.add_alloc(me.clone());
    Interp::new(&p, &certs, Monitors::default()).inter_p(&d, fuel, s.update("this", Value::Ptr(me)))
}

#[test]
fn looper_times_out_at_sampled_fuels() {
    for fuel in (0..=16).chain([100, 1000, 5000, 9999, 10_000]) {
        assert_eq!(spin(fuel), RunOutcome::Timeout, "fuel {fuel}");
    }
}

#[test]
fn total_call_to_missing_certificate_is_reported() {
    let (p, mut certs) = pizza();
    let d = certs.certs[&("Anchovy".into(), "remA".into())].total.clone().unwrap();
    certs.certs.remove(&("Crust".into(), "remA".into()));
    let out = Interp::new(&p, &certs, Monitors::default()).inter_t(&d, rema_entry(&["Anchovy"]));
    assert_eq!(out.violation().unwrap().kind, ViolationKind::MissingCertificate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn looper_times_out_for_any_fuel(fuel in 0u64..=10_000) {
        prop_assert_eq!(spin(fuel), RunOutcome::Timeout);
    }

    #[test]
    fn total_runs_on_random_chains(bits in proptest::collection::vec(any::<bool>(), 0..12)) {
        let tops: Vec<&str> = bits.iter().map(|b| if *b { "Anchovy" } else { "Cheese" }).collect();
        let (out, tr) = run_total(&tops);
        prop_assert!(out.ok().is_some());
        prop_assert_eq!(entry_measures(&tr).len(), tops.len() + 1);
    }
}
