use proptest::prelude::*;
use xrl::obligation::Status;
use xrl::simple::{
    parse_simple, simple_check, simple_inter_p, simple_inter_t, SimpleChecked, SimpleOutcome,
    SimpleProgram,
};
use xrl::state::{State, Value};

const COUNTDOWN: &str = include_str!("../corpus/countdown.simple");
const COUNTDOWN_PROOF: &str = include_str!("../corpus/countdown.simpleproof");

fn countdown() -> (SimpleProgram, SimpleChecked) {
    let p = parse_simple(COUNTDOWN).unwrap();
    let c = simple_check(&p, &serde_json::from_str(COUNTDOWN_PROOF).unwrap(), 16);
    assert!(c.ok(), "{:?} {:?}", c.diags, c.verdicts);
    (p, c)
}

fn at(x: u64) -> State {
    let mut s = State::new();
    s.update_mut("x", Value::Nat(x));
    s
}

#[test]
fn countdown_certificate_checks() {
    let (_, c) = countdown();
    assert!(c.verdicts.iter().all(|v| v.status == Status::Pass));
    assert!(c.verdicts.iter().any(|v| v.id.ends_with(":measure")));
}

#[test]
fn countdown_entries_decrease_to_zero() {
    let (p, c) = countdown();
    let r = simple_inter_t(&p, &c, "p", at(100));
    assert!(matches!(r.outcome, SimpleOutcome::Ok(_)));
    let ms: Vec<u64> = r.entries.iter().map(|e| e.1).collect();
    assert_eq!(ms, (0..=100).rev().collect::<Vec<_>>());
}

#[test]
fn cast_runs_without_fuel() {
    let (p, c) = countdown();
    let t = simple_inter_t(&p, &c, "p", at(100));
    let q = simple_inter_p(&p, &c, "p", 0, at(100));
    let (SimpleOutcome::Ok(a), SimpleOutcome::Ok(mut b)) = (t.outcome, q.outcome) else {
        panic!("both runs must terminate")
    };
    assert!(!b.is_bound("mse"));
    b.update_mut("mse", Value::Nat(100));
    assert_eq!(a, b);
    assert_eq!(q.entries, t.entries);
}

fn reject(proof: &str) -> SimpleChecked {
    let p = parse_simple(COUNTDOWN).unwrap();
    simple_check(&p, &serde_json::from_str(proof).unwrap(), 16)
}

#[test]
fn non_decreasing_call_fails_its_measure_obligation() {
    let src = COUNTDOWN.replace("decreases x", "decreases x + 1");
    let p = parse_simple(&src).unwrap();
    let proof = COUNTDOWN_PROOF.replace("mse == x", "mse == x + 1");
    let c = simple_check(&p, &serde_json::from_str(&proof).unwrap(), 16);
    assert!(c.diags.is_empty(), "{:?}", c.diags);
    assert!(c.verdicts.iter().all(|v| v.status != Status::Fail));

    let looping = "proc p(x) requires true ensures true decreases x { if x == 0 { skip } else { y := p(x) } }";
    let p = parse_simple(looping).unwrap();
    let proof = COUNTDOWN_PROOF.replace("y := p(x - 1)", "y := p(x)");
    let c = simple_check(&p, &serde_json::from_str(&proof).unwrap(), 16);
    let bad: Vec<_> = c.verdicts.iter().filter(|v| v.status == Status::Fail).collect();
    assert_eq!(bad.len(), 1);
    assert!(bad[0].id.ends_with(":measure"));
}

#[test]
fn cast_inside_total_is_rejected() {
    let proof = COUNTDOWN_PROOF.replace(
        r#""total": {
        "rule": "Conseq""#,
        r#""total": {
        "rule": "Cast""#,
    );
    assert_ne!(proof, COUNTDOWN_PROOF);
    assert!(!reject(&proof).ok());
}

#[test]
fn wrong_dialect_is_rejected() {
    let proof = COUNTDOWN_PROOF.replace("\"simple\"", "\"region\"");
    let c = reject(&proof);
    assert_eq!(c.diags[0].code, "CERT_FORMAT");
}

proptest! {
    #[test]
    fn entries_follow_the_measure(x in 0u64..300) {
        let (p, c) = countdown();
        let r = simple_inter_t(&p, &c, "p", at(x));
        prop_assert!(matches!(r.outcome, SimpleOutcome::Ok(_)));
        prop_assert_eq!(r.entries.len() as u64, x + 1);
        prop_assert!(r.entries.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn partial_fuel_is_call_depth(x in 0u64..40, fuel in 0u64..60) {
        let (p, c) = countdown();
        let mut proof: serde_json::Value = serde_json::from_str(COUNTDOWN_PROOF).unwrap();
        proof["procs"][0]["partial"] = serde_json::json!({
            "rule": "If",
            "P": "true",
            "meta": { "guard": "x == 0" },
            "children": [
                { "rule": "Conseq", "Q": "true", "children": [ { "rule": "Skip" } ] },
                { "rule": "Conseq", "Q": "true", "children": [ { "rule": "Cal", "cmd": "y := p(x - 1)" } ] }
            ]
        });
        let c2 = simple_check(&p, &proof, 16);
        prop_assert!(c2.ok(), "{:?}", c2.diags);
        let r = simple_inter_p(&p, &c2, "p", fuel, at(x));
        if fuel >= x {
            prop_assert!(matches!(r.outcome, SimpleOutcome::Ok(_)));
        } else {
            prop_assert_eq!(r.outcome, SimpleOutcome::Timeout);
        }
        let cast = simple_inter_p(&p, &c, "p", 0, at(x));
        prop_assert!(matches!(cast.outcome, SimpleOutcome::Ok(_)));
    }
}
