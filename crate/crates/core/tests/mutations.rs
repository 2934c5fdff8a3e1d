mod common;

use common::*;
use xrl::mutate::{apply, assess, parse_mutations, Caught};

const MUTATIONS: &str = include_str!("../corpus/pizza.mutations.json");

#[test]
fn every_shipped_mutation_is_caught() {
    let (p, _) = pizza();
    let cert: serde_json::Value = serde_json::from_str(PIZZA_PROOF).unwrap();
    let f = parse_mutations(MUTATIONS).unwrap();
    assert_eq!(f.mutations.len(), 10);
    for m in &f.mutations {
        let c = assess(&p, &cert, m, 20, 1).unwrap();
        assert!(c.caught(), "{} went unnoticed", m.name);
    }
}

#[test]
fn mutations_change_the_certificate() {
    let cert: serde_json::Value = serde_json::from_str(PIZZA_PROOF).unwrap();
    for m in &parse_mutations(MUTATIONS).unwrap().mutations {
        assert_ne!(apply(&cert, m).unwrap(), cert, "{} is a no-op", m.name);
    }
}

#[test]
fn the_unmutated_certificate_is_silent() {
    let (p, _) = pizza();
    let cert: serde_json::Value = serde_json::from_str(PIZZA_PROOF).unwrap();
    let f = parse_mutations(MUTATIONS).unwrap();
    let mut m = f.mutations[0].clone();
    m.set.clear();
    m.remove.clear();
    m.splice = false;
    m.node = None;
    m.trust.clear();
    assert_eq!(assess(&p, &cert, &m, 20, 1).unwrap(), Caught::Silent);
}

#[test]
fn wrong_schema_is_refused() {
    assert!(parse_mutations(&MUTATIONS.replace("xrl-mutations/1", "other")).is_err());
}
