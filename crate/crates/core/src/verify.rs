//! End-to-end checking of a program against its certificates.

use serde_json::{json, Value as Json};

use crate::discharge::{discharge_all, Policy};
use crate::logic::{check_certificates, entry_obligations, CertFile, CheckOutcome};
use crate::obligation::{Mode, Obligation, Status, Verdict};
use crate::syntax::{check_wellformed, Diagnostic, Program};

pub const REPORT_SCHEMA: &str = "xrl-report/1";

#[derive(Debug, Default)]
pub struct Verification {
    pub diags: Vec<Diagnostic>,
    pub outcome: CheckOutcome,
    pub obligations: Vec<Obligation>,
    pub verdicts: Vec<Verdict>,
}

impl Verification {
    /// No diagnostics and no failed obligation.
    pub fn ok(&self) -> bool {
        self.diags.is_empty() && self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.status == Status::Fail)
    }

    pub fn verdict(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn count(&self, s: Status) -> usize {
        self.verdicts.iter().filter(|v| v.status == s).count()
    }

    pub fn to_json(&self) -> Json {
        let trusted: Vec<&str> = self
            .verdicts
            .iter()
            .filter(|v| v.status == Status::Trusted)
            .map(|v| v.id.as_str())
            .collect();
        let runtime = self
            .verdicts
            .iter()
            .filter(|v| v.mode == Mode::Runtime)
            .count();
        json!({
            "schema": REPORT_SCHEMA,
            "ok": self.ok(),
            "diagnostics": self.diags,
            "derivation_size": self.outcome.size(),
            "summary": {
                "total": self.verdicts.len(),
                "pass": self.count(Status::Pass),
                "fail": self.count(Status::Fail),
                "trusted": self.count(Status::Trusted),
                "sampled": self.count(Status::Sampled),
                "runtime": runtime,
            },
            "trusted": trusted,
            "obligations": self.verdicts.iter().map(Verdict::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Well-formedness, certificate checking and obligation discharge.
pub fn verify(p: &Program, cert: &CertFile, policy: &Policy) -> Verification {
    let mut diags = check_wellformed(p);
    if !diags.is_empty() {
        return Verification {
            diags,
            ..Default::default()
        };
    }
    let outcome = check_certificates(p, cert);
    diags.extend(outcome.diags.iter().cloned());
    let mut obligations = entry_obligations(p);
    obligations.extend(outcome.obligations.iter().cloned());
    let verdicts = discharge_all(p, &obligations, policy);
    Verification {
        diags,
        outcome,
        obligations,
        verdicts,
    }
}
