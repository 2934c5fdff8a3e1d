//! Differential runs of the derivation-guided interpreters against the oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use super::gen::{entry_state, GenConfig};
use super::{oracle_run, Fault, Interp, Monitors, OracleOutcome, RunOutcome};
use crate::logic::CheckOutcome;
use crate::name::reserved;
use crate::state::State;
use crate::syntax::{Owner, Program};

pub const DIFF_SCHEMA: &str = "xrl-diff/1";

#[derive(Clone, Copy, Debug)]
pub struct DiffConfig {
    pub seed: u64,
    /// States per method.
    pub count: usize,
    /// Fuel for the oracle and for partial runs.
    pub fuel: u64,
    pub gen: GenConfig,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            seed: 7,
            count: 200,
            fuel: 10_000,
            gen: GenConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Disagreement {
    pub method: String,
    pub sample: usize,
    pub interpreter: &'static str,
    pub detail: String,
    pub state: State,
}

impl Disagreement {
    pub fn to_json(&self) -> Json {
        json!({
            "method": self.method,
            "sample": self.sample,
            "interpreter": self.interpreter,
            "detail": self.detail,
            "state": self.state.to_json(),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct MethodStats {
    pub method: String,
    pub generated: usize,
    pub compared: usize,
    pub oracle_timeouts: usize,
    pub disagreements: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DiffReport {
    pub seed: u64,
    pub count: usize,
    pub methods: Vec<MethodStats>,
    pub disagreements: Vec<Disagreement>,
}

impl DiffReport {
    pub fn total_disagreements(&self) -> usize {
        self.methods.iter().map(|m| m.disagreements).sum()
    }

    pub fn to_json(&self) -> Json {
        json!({
            "schema": DIFF_SCHEMA,
            "seed": self.seed,
            "count": self.count,
            "disagreements": self.total_disagreements(),
            "methods": self.methods.iter().map(|m| json!({
                "method": m.method,
                "generated": m.generated,
                "compared": m.compared,
                "oracle_timeouts": m.oracle_timeouts,
                "disagreements": m.disagreements,
            })).collect::<Vec<_>>(),
            "first": self.disagreements.first().map(Disagreement::to_json),
        })
    }
}

fn strip(s: &State) -> State {
    let mut s = s.clone();
    s.remove_var(reserved::MSE);
    s
}

fn compare(run: &RunOutcome, oracle: &State) -> Option<String> {
    match run {
        RunOutcome::Ok(s) if strip(s) == strip(oracle) => None,
        RunOutcome::Ok(s) => Some(format!(
            "final states differ: interpreter {} oracle {}",
            strip(s).to_json(),
            oracle.to_json()
        )),
        RunOutcome::Timeout => Some("interpreter timed out, oracle terminated".into()),
        RunOutcome::MonitorViolation(v) => Some(format!(
            "monitor {} at {}: {}",
            v.kind.code(),
            v.path,
            v.detail
        )),
    }
}

/// Runs every certified method on `cfg.count` generated states. Methods are
/// visited in name order from one seeded generator, so reports are stable.
pub fn diff(
    p: &Program,
    certs: &CheckOutcome,
    cfg: &DiffConfig,
    mon: Monitors,
    fault: Option<Fault>,
) -> DiffReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = DiffReport {
        seed: cfg.seed,
        count: cfg.count,
        ..Default::default()
    };
    for ((class, method), mc) in &certs.certs {
        let name = format!("{class}.{method}");
        let mut stats = MethodStats {
            method: name.clone(),
            ..Default::default()
        };
        let Some(body) = p
            .method(&Owner::Class(class.clone()), method)
            .and_then(|m| m.body.as_ref())
        else {
            continue;
        };
        for i in 0..cfg.count {
            let total = mc.total.is_some();
            let Some(s) = entry_state(p, &mut rng, class, method, total, &cfg.gen) else {
                continue;
            };
            stats.generated += 1;
            let plain = strip(&s);
            let expected = match oracle_run(body, cfg.fuel, &plain, p) {
                OracleOutcome::Ok(t) => t,
                OracleOutcome::Timeout => {
                    stats.oracle_timeouts += 1;
                    continue;
                }
                OracleOutcome::Stuck(m) => {
                    stats.disagreements += 1;
                    report.disagreements.push(Disagreement {
                        method: name.clone(),
                        sample: i,
                        interpreter: "oracle",
                        detail: format!("oracle stuck: {m}"),
                        state: plain,
                    });
                    continue;
                }
            };
            stats.compared += 1;
            let mut runs: Vec<(&'static str, RunOutcome)> = Vec::new();
            let interp = || {
                let it = Interp::new(p, certs, mon);
                match fault {
                    Some(f) => it.with_fault(f),
                    None => it,
                }
            };
            if let Some(d) = &mc.total {
                runs.push(("interT", interp().inter_t(d, s.clone())));
            }
            if let Some(d) = &mc.partial {
                runs.push(("interP", interp().inter_p(d, cfg.fuel, plain.clone())));
            }
            let mut bad = false;
            for (who, r) in runs {
                if let Some(detail) = compare(&r, &expected) {
                    bad = true;
                    report.disagreements.push(Disagreement {
                        method: name.clone(),
                        sample: i,
                        interpreter: who,
                        detail,
                        state: plain.clone(),
                    });
                }
            }
            if bad {
                stats.disagreements += 1;
            }
        }
        report.methods.push(stats);
    }
    report
}
