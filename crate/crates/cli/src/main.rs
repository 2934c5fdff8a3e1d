//! Command-line driver: check, run, diff, obligations and fmt.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value as Json};

use xrl::discharge::Policy;
use xrl::interp::diff::{diff, DiffConfig};
use xrl::interp::{with_entry_measure, Interp, Monitors, RunOutcome};
use xrl::logic::cert::{parse_head, read_cert};
use xrl::logic::{check_certificates, entry_obligations, CertFile};
use xrl::simple::{
    parse_simple, simple_check, simple_inter_p, simple_inter_t, SimpleOutcome, SimpleProgram,
};
use xrl::state::State;
use xrl::syntax::{check_wellformed, parse_program, print_program, Owner, Program};
use xrl::verify::verify;

const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;
const VIOLATION: u8 = 3;

/// Bound on naturals when deciding simple-program obligations.
const SIMPLE_BOUND: u64 = 16;

#[derive(Parser)]
#[command(name = "xrl", version, about = "Check and run region-logic certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check certificates and discharge every obligation.
    Check {
        program: PathBuf,
        #[arg(required = true)]
        certs: Vec<PathBuf>,
    },
    /// Run a certified method from a state given as JSON.
    Run {
        program: PathBuf,
        cert: PathBuf,
        /// `Class.method`, or a procedure name for simple programs.
        #[arg(long)]
        method: String,
        /// Initial state JSON file.
        #[arg(long)]
        state: PathBuf,
        /// Run the partial derivation.
        #[arg(long)]
        partial: bool,
        /// Fuel for partial runs.
        #[arg(long)]
        fuel: Option<u64>,
        /// Write trace events as JSON lines to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare the interpreters against the oracle on generated states.
    Diff {
        program: PathBuf,
        cert: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 10_000)]
        fuel: u64,
    },
    /// List obligations without discharging them.
    Obligations {
        program: PathBuf,
        certs: Vec<PathBuf>,
    },
    /// Print a program in canonical form.
    Fmt { program: PathBuf },
}

enum Fail {
    Usage(String),
    Report(Json, u8),
}

type Out = Result<(Json, u8), Fail>;

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Json, Fail> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Fail::Usage(format!("{}: invalid JSON: {e}", path.display())))
}

fn diag_report(diags: Json) -> Fail {
    Fail::Report(
        json!({"schema": "xrl-report/1", "ok": false, "diagnostics": diags}),
        FAILED,
    )
}

fn is_simple(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "simple")
}

fn program(path: &Path) -> Result<Program, Fail> {
    let p = parse_program(&read(path)?).map_err(|ds| diag_report(json!(ds)))?;
    let ds = check_wellformed(&p);
    if !ds.is_empty() {
        return Err(diag_report(json!(ds)));
    }
    Ok(p)
}

fn simple_program(path: &Path) -> Result<SimpleProgram, Fail> {
    parse_simple(&read(path)?).map_err(|d| diag_report(json!([d])))
}

/// Concatenates the methods of several certificate files.
fn certs(p: &Program, paths: &[PathBuf]) -> Result<CertFile, Fail> {
    let mut merged = CertFile::default();
    for path in paths {
        let c = read_cert(p, &read_json(path)?).map_err(|d| diag_report(json!([d])))?;
        merged.methods.extend(c.methods);
    }
    Ok(merged)
}

fn cmd_check(program_path: &Path, cert_paths: &[PathBuf]) -> Out {
    if is_simple(program_path) {
        let p = simple_program(program_path)?;
        let [c] = cert_paths else {
            return Err(Fail::Usage("simple programs take one certificate".into()));
        };
        let out = simple_check(&p, &read_json(c)?, SIMPLE_BOUND);
        let code = if out.ok() { OK } else { FAILED };
        return Ok((out.to_json(), code));
    }
    let p = program(program_path)?;
    let cert = certs(&p, cert_paths)?;
    let v = verify(&p, &cert, &Policy::from_env());
    let code = if v.ok() { OK } else { FAILED };
    Ok((v.to_json(), code))
}

fn cmd_obligations(program_path: &Path, cert_paths: &[PathBuf]) -> Out {
    let p = program(program_path)?;
    let mut obs = entry_obligations(&p);
    let mut diags = Vec::new();
    if !cert_paths.is_empty() {
        let out = check_certificates(&p, &certs(&p, cert_paths)?);
        obs.extend(out.obligations);
        diags = out.diags;
    }
    let list: Vec<Json> = obs
        .iter()
        .map(|o| {
            json!({
                "id": o.id,
                "kind": o.kind.name(),
                "mode": o.mode,
                "origin": o.origin,
                "statement": o.kind.statement(),
            })
        })
        .collect();
    let code = if diags.is_empty() { OK } else { FAILED };
    Ok((
        json!({"schema": "xrl-obligations/1", "diagnostics": diags, "obligations": list}),
        code,
    ))
}

fn cmd_fmt(program_path: &Path) -> Result<String, Fail> {
    let p = parse_program(&read(program_path)?).map_err(|ds| diag_report(json!(ds)))?;
    Ok(print_program(&p))
}

struct RunArgs<'a> {
    method: &'a str,
    state: &'a Path,
    partial: bool,
    fuel: Option<u64>,
    trace: Option<&'a Path>,
}

fn initial_state(path: &Path) -> Result<State, Fail> {
    State::from_json(&read_json(path)?)
        .map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))
}

fn cmd_run(program_path: &Path, cert_path: &Path, a: &RunArgs<'_>) -> Out {
    if !a.partial && a.fuel.is_some() {
        return Err(Fail::Usage("--fuel applies only to --partial runs".into()));
    }
    let fuel = a.fuel.unwrap_or(10_000);
    let s = initial_state(a.state)?;
    if is_simple(program_path) {
        let p = simple_program(program_path)?;
        let checked = simple_check(&p, &read_json(cert_path)?, SIMPLE_BOUND);
        if !checked.diags.is_empty() {
            return Err(diag_report(json!(checked.diags)));
        }
        let r = if a.partial {
            simple_inter_p(&p, &checked, a.method, fuel, s)
        } else {
            simple_inter_t(&p, &checked, a.method, s)
        };
        if let Some(path) = a.trace {
            let lines: String = r
                .entries
                .iter()
                .map(|(h, m)| format!("{}\n", json!({"entryHead": h, "reducedMeasure": m})))
                .collect();
            std::fs::write(path, lines)
                .map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
        }
        return Ok(match r.outcome {
            SimpleOutcome::Ok(t) => (json!({"outcome": "ok", "state": t.to_json()}), OK),
            SimpleOutcome::Timeout => (json!({"outcome": "timeout"}), OK),
            SimpleOutcome::Violation { path, detail } => (
                json!({"outcome": "monitor_violation", "node": path, "detail": detail}),
                VIOLATION,
            ),
        });
    }
    let p = program(program_path)?;
    let (class, method) = a
        .method
        .split_once('.')
        .ok_or_else(|| Fail::Usage(format!("--method `{}` must be Class.method", a.method)))?;
    if !p.is_class(class) || p.method(&Owner::Class(class.into()), method).is_none() {
        return Err(Fail::Usage(format!("no method {}", a.method)));
    }
    let cert = certs(&p, &[cert_path.to_path_buf()])?;
    let out = check_certificates(&p, &cert);
    if !out.diags.is_empty() {
        return Err(diag_report(json!(out.diags)));
    }
    let mc = out
        .certs
        .get(&(class.into(), method.into()))
        .ok_or_else(|| Fail::Usage(format!("no certificate for {}", a.method)))?;
    let mut it = Interp::new(&p, &out, Monitors::default());
    if a.trace.is_some() {
        it = it.with_trace();
    }
    let r = if a.partial {
        let d = mc.partial.as_ref().ok_or_else(|| Fail::Usage("no partial derivation".into()))?;
        it.inter_p(d, fuel, s)
    } else {
        let d = mc
            .total
            .as_ref()
            .ok_or_else(|| Fail::Usage(format!("{} has no total derivation; use --partial", a.method)))?;
        let head = parse_head(&p, &format!("{class};{method}")).map_err(|d| diag_report(json!([d])))?;
        it.inter_t(d, with_entry_measure(&p, &head, s))
    };
    if let Some(path) = a.trace {
        let lines: String = it
            .take_trace()
            .iter()
            .map(|e| format!("{}\n", e.to_json()))
            .collect();
        std::fs::write(path, lines).map_err(|e| Fail::Usage(format!("{}: {e}", path.display())))?;
    }
    let code = match r {
        RunOutcome::MonitorViolation(_) => VIOLATION,
        _ => OK,
    };
    Ok((r.to_json(), code))
}

fn cmd_diff(program_path: &Path, cert_path: &Path, cfg: DiffConfig) -> Out {
    let p = program(program_path)?;
    let out = check_certificates(&p, &certs(&p, &[cert_path.to_path_buf()])?);
    if !out.diags.is_empty() {
        return Err(diag_report(json!(out.diags)));
    }
    let r = diff(&p, &out, &cfg, Monitors::default(), None);
    let code = if r.total_disagreements() == 0 { OK } else { FAILED };
    Ok((r.to_json(), code))
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit_json(j: &Json) {
    emit(&format!("{}\n", serde_json::to_string_pretty(j).expect("reports serialize")));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.cmd {
        Cmd::Check { program, certs } => cmd_check(program, certs),
        Cmd::Run {
            program,
            cert,
            method,
            state,
            partial,
            fuel,
            trace,
        } => cmd_run(
            program,
            cert,
            &RunArgs {
                method,
                state,
                partial: *partial,
                fuel: *fuel,
                trace: trace.as_deref(),
            },
        ),
        Cmd::Diff {
            program,
            cert,
            seed,
            count,
            fuel,
        } => cmd_diff(
            program,
            cert,
            DiffConfig {
                seed: *seed,
                count: *count,
                fuel: *fuel,
                ..DiffConfig::default()
            },
        ),
        Cmd::Obligations { program, certs } => cmd_obligations(program, certs),
        Cmd::Fmt { program } => match cmd_fmt(program) {
            Ok(text) => {
                emit(&text);
                return ExitCode::from(OK);
            }
            Err(f) => Err(f),
        },
    };
    match res {
        Ok((j, code)) | Err(Fail::Report(j, code)) => {
            emit_json(&j);
            ExitCode::from(code)
        }
        Err(Fail::Usage(m)) => {
            eprintln!("xrl: {m}");
            ExitCode::from(USAGE)
        }
    }
}
