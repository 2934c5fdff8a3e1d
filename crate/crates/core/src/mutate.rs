//! Certificate mutations: JSON edits of derivation nodes and the check that
//! each one is caught by the checker, an obligation or a runtime monitor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{Map, Value as Json};

use crate::discharge::Policy;
use crate::interp::gen::{entry_state, GenConfig};
use crate::interp::{Interp, Monitors, RunOutcome};
use crate::logic::cert::read_cert;
use crate::obligation::Status;
use crate::syntax::Program;
use crate::verify::verify;

pub const MUTATION_SCHEMA: &str = "xrl-mutations/1";

#[derive(Clone, Debug, Deserialize)]
pub struct MutationFile {
    pub schema: String,
    pub mutations: Vec<Mutation>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Mutation {
    pub name: String,
    pub class: String,
    pub method: String,
    /// `total` or `partial`.
    pub which: String,
    /// Node path such as `T.1.0`; the first segment names the root.
    pub path: String,
    /// Keys merged into the node.
    #[serde(default)]
    pub set: Map<String, Json>,
    #[serde(default)]
    pub remove: Vec<String>,
    /// Replace the node by its first child.
    #[serde(default)]
    pub splice: bool,
    /// Replace the node wholesale, creating the root if needed.
    pub node: Option<Json>,
    /// Obligation ids accepted without checking.
    #[serde(default)]
    pub trust: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Caught {
    Rejected(Vec<String>),
    Failed(Vec<String>),
    Monitor(String),
    /// Every check passed and every run ended normally.
    Silent,
}

impl Caught {
    pub fn caught(&self) -> bool {
        !matches!(self, Caught::Silent)
    }
}

pub fn parse_mutations(src: &str) -> Result<MutationFile, String> {
    let f: MutationFile = serde_json::from_str(src).map_err(|e| e.to_string())?;
    if f.schema != MUTATION_SCHEMA {
        return Err(format!("expected schema {MUTATION_SCHEMA}, found {}", f.schema));
    }
    Ok(f)
}

/// Applies `m` to a certificate in JSON form.
pub fn apply(cert: &Json, m: &Mutation) -> Result<Json, String> {
    let mut out = cert.clone();
    let methods = out
        .get_mut("methods")
        .and_then(Json::as_array_mut)
        .ok_or("certificate has no methods array")?;
    let entry = methods
        .iter_mut()
        .find(|e| e["class"] == m.class.as_str() && e["method"] == m.method.as_str())
        .ok_or_else(|| format!("no entry for {}.{}", m.class, m.method))?;
    let mut segs = m.path.split('.');
    segs.next();
    let idx: Vec<usize> = segs
        .map(|s| s.parse().map_err(|_| format!("bad path segment `{s}`")))
        .collect::<Result<_, _>>()?;
    if idx.is_empty() {
        if let Some(n) = &m.node {
            entry[m.which.as_str()] = n.clone();
            return Ok(out);
        }
    }
    let mut node = entry
        .get_mut(m.which.as_str())
        .ok_or_else(|| format!("no {} derivation", m.which))?;
    for i in idx {
        node = node
            .get_mut("children")
            .and_then(|c| c.get_mut(i))
            .ok_or_else(|| format!("path {} leaves the derivation", m.path))?;
    }
    if let Some(n) = &m.node {
        *node = n.clone();
    }
    if m.splice {
        let child = node["children"]
            .get(0)
            .cloned()
            .ok_or("cannot splice a leaf")?;
        *node = child;
    }
    let obj = node.as_object_mut().ok_or("node is not an object")?;
    for k in &m.remove {
        obj.remove(k);
    }
    for (k, v) in &m.set {
        obj.insert(k.clone(), v.clone());
    }
    Ok(out)
}

/// Checks the mutated certificate, then runs the mutated method on
/// `runs` generated entry states.
pub fn assess(p: &Program, cert: &Json, m: &Mutation, runs: usize, seed: u64) -> Result<Caught, String> {
    let mutated = apply(cert, m)?;
    let cf = match read_cert(p, &mutated) {
        Ok(c) => c,
        Err(d) => return Ok(Caught::Rejected(vec![d.message])),
    };
    let mut policy = Policy::from_env();
    policy.trust.extend(m.trust.iter().cloned());
    let v = verify(p, &cf, &policy);
    if !v.diags.is_empty() {
        return Ok(Caught::Rejected(
            v.diags.iter().map(|d| format!("{}: {}", d.code, d.message)).collect(),
        ));
    }
    let failed: Vec<String> = v
        .verdicts
        .iter()
        .filter(|x| x.status == Status::Fail)
        .map(|x| x.id.clone())
        .collect();
    if !failed.is_empty() {
        return Ok(Caught::Failed(failed));
    }
    let key = (m.class.as_str().into(), m.method.as_str().into());
    let Some(mc) = v.outcome.certs.get(&key) else {
        return Ok(Caught::Silent);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = m.which == "total";
    for _ in 0..runs {
        let Some(s) = entry_state(p, &mut rng, &m.class, &m.method, total, &GenConfig::default())
        else {
            continue;
        };
        let mut it = Interp::new(p, &v.outcome, Monitors::default());
        let r = match (total, &mc.total, &mc.partial) {
            (true, Some(d), _) => it.inter_t(d, s),
            (false, _, Some(d)) => it.inter_p(d, 10_000, s),
            _ => continue,
        };
        if let RunOutcome::MonitorViolation(x) = r {
            return Ok(Caught::Monitor(format!("{} at {}", x.kind.code(), x.path)));
        }
    }
    Ok(Caught::Silent)
}
