mod common;

use common::*;
use xrl::interp::diff::{diff, DiffConfig};
use xrl::interp::{Fault, Monitors};

#[test]
fn pizza_agrees_with_the_oracle_on_200_states_per_method() {
    let (p, certs) = pizza();
    let r = diff(&p, &certs, &DiffConfig::default(), Monitors::default(), None);
    assert_eq!(r.total_disagreements(), 0, "{}", r.to_json());
    assert_eq!(r.methods.len(), 3);
    for m in &r.methods {
        assert!(m.generated >= 190, "{} generated only {}", m.method, m.generated);
        assert_eq!(m.compared, m.generated, "{}", m.method);
    }
}

#[test]
fn looper_is_skipped_where_the_oracle_runs_out() {
    let (p, certs) = looper();
    let cfg = DiffConfig {
        count: 20,
        ..DiffConfig::default()
    };
    let r = diff(&p, &certs, &cfg, Monitors::default(), None);
    assert_eq!(r.total_disagreements(), 0);
    assert_eq!(r.methods[0].oracle_timeouts, r.methods[0].generated);
}

#[test]
fn injected_fault_is_detected() {
    let (p, certs) = pizza();
    let cfg = DiffConfig {
        count: 20,
        ..DiffConfig::default()
    };
    let r = diff(&p, &certs, &cfg, Monitors::none(), Some(Fault::SkipStackRestore));
    assert!(r.total_disagreements() > 0);
    assert!(r.to_json()["first"].is_object());
}

#[test]
fn reports_are_reproducible() {
    let (p, certs) = pizza();
    let cfg = DiffConfig {
        count: 10,
        seed: 3,
        ..DiffConfig::default()
    };
    let a = diff(&p, &certs, &cfg, Monitors::default(), None).to_json();
    let b = diff(&p, &certs, &cfg, Monitors::default(), None).to_json();
    assert_eq!(a, b);
    assert_eq!(a["schema"], "xrl-diff/1");
}
