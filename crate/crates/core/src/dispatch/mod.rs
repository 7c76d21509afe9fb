//! Solver dispatch: emit problems as SMT-LIB2 or VNN-LIB, run external
//! solvers under a timeout, and turn their output into verdicts.
//!
//! Every `sat` answer is checked against the concrete evaluator before it is
//! reported as a counterexample.
//!
//! ```
//! use std::sync::Arc;
//! use verimux::dispatch::emit_smtlib;
//! use verimux::model::parse_native_model;
//! use verimux::problem::*;
//!
//! let model = parse_native_model(r#"{"kind":"network","layers":[{"dense":{"w":[[2.0]],"b":[0.0]}}]}"#).unwrap();
//! let atom = LinearAtom::new([(Var::Output(0), verimux::exact::from_i64(1))].into(), LinOp::Le, verimux::exact::from_i64(1)).unwrap();
//! let p = VerificationProblem {
//!     input_region: IntervalBox::new(vec![0.0], vec![1.0]).unwrap(),
//!     residual: vec![],
//!     model: Arc::new(model),
//!     model_name: "M".into(),
//!     output_constraint: NormalizedGoal::atom(Atom::Linear(atom)),
//!     polarity: Polarity::Proof,
//!     meta: ProblemMeta { goal: "G".into(), sample: None, part: None },
//! };
//! let script = emit_smtlib(&negate_goal(&p)).unwrap();
//! assert!(script.contains("(assert (= Y_0 (* 2.0 X_0)))"));
//! assert!(script.contains("(assert (> Y_0 1.0))"));
//! ```

mod emit;
pub mod sexpr;

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::analyzer::{check_witness, Outcome, Verdict};
use crate::exact;
use crate::model::{to_native_json, Model};
use crate::problem::{negate_goal, Polarity, VerificationProblem};

pub use emit::{emit_smtlib, emit_vnnlib};
use sexpr::Sexpr;

/// Extra time a killed solver gets to exit before it is abandoned.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("model cannot be encoded: {0}")]
    UnsupportedModel(String),
    #[error("the counterexample condition is unsatisfiable by construction (false)")]
    EmptyConstraint,
    #[error("only problems in falsification form can be emitted; negate the goal first")]
    WrongPolarity,
    #[error("unsupported atom: {0}")]
    UnsupportedAtom(String),
    #[error("executable not found: {0}")]
    ExecutableNotFound(String),
    #[error("failed to start solver: {0}")]
    SpawnFailure(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("unparseable solver output: {0}")]
    UnparseableOutput(String),
    #[error("adapter registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `sat`/`unsat`/`unknown` followed by a `get-model` answer.
    Smtlib,
    /// VNN-COMP result lines (`sat`/`violated`, `unsat`/`holds`) with a
    /// `((X_0 v) ...)` witness block.
    Vnncomp,
    /// The in-repo replay solver. Reads like `smtlib`, and accepts any model.
    Mock,
}

fn default_timeout() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverAdapter {
    pub id: String,
    /// Executable followed by arguments. `{problem}`, `{model}` and
    /// `{timeout}` are substituted per run.
    pub command: Vec<String>,
    pub dialect: Dialect,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
}

impl SolverAdapter {
    pub fn validate(&self) -> Result<(), DispatchError> {
        let bad = |why: &str| Err(DispatchError::Registry(format!("adapter `{}`: {why}", self.id)));
        if self.id.is_empty() {
            return bad("empty id");
        }
        if self.command.is_empty() {
            return bad("empty command");
        }
        if !self.command.iter().any(|a| a.contains("{problem}")) {
            return bad("command never mentions {problem}");
        }
        if !(self.timeout >= 1.0 && self.timeout.is_finite()) {
            return bad("timeout must be at least 1 second");
        }
        Ok(())
    }

    /// Whether the adapter can be given problems over `m`.
    pub fn supports(&self, m: &Model) -> Result<(), String> {
        match self.dialect {
            Dialect::Mock => Ok(()),
            Dialect::Smtlib | Dialect::Vnncomp if m.has_rbf() => Err("RBF kernels have no linear encoding".into()),
            Dialect::Smtlib | Dialect::Vnncomp => Ok(()),
        }
    }

    /// The replay solver shipped with this crate, answering `unknown` unless
    /// a recorded answer is found.
    pub fn mock(id: &str, replay_dir: Option<&Path>) -> SolverAdapter {
        let mut command = vec!["verimux-mock-solver".to_string()];
        if let Some(dir) = replay_dir {
            command.push("--replay-dir".into());
            command.push(dir.display().to_string());
        }
        command.push("{problem}".into());
        SolverAdapter { id: id.into(), command, dialect: Dialect::Mock, timeout: default_timeout() }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    adapters: Vec<SolverAdapter>,
}

/// Reads `{"adapters": [...]}`.
pub fn parse_registry(source: &str) -> Result<Vec<SolverAdapter>, DispatchError> {
    let file: RegistryFile = serde_json::from_str(source).map_err(|e| DispatchError::Registry(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for a in &file.adapters {
        a.validate()?;
        if !seen.insert(a.id.clone()) {
            return Err(DispatchError::Registry(format!("duplicate adapter id `{}`", a.id)));
        }
    }
    Ok(file.adapters)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolverResult {
    /// `None` when the process was killed.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall: Duration,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobFiles {
    pub problem: PathBuf,
    pub model: Option<PathBuf>,
}

/// Looks for `name` as a path, next to the running executable (and one
/// level up, where cargo keeps binaries during tests), then on `PATH`.
pub fn resolve_executable(name: &str) -> Result<PathBuf, DispatchError> {
    let candidate = Path::new(name);
    if name.contains(std::path::MAIN_SEPARATOR) || name.contains('/') {
        return if candidate.is_file() { Ok(candidate.to_path_buf()) } else { Err(DispatchError::ExecutableNotFound(name.into())) };
    }
    let mut dirs = Vec::new();
    if let Ok(exe) = std::env::current_exe() {
        if let Some(dir) = exe.parent() {
            dirs.push(dir.to_path_buf());
            if let Some(up) = dir.parent() {
                dirs.push(up.to_path_buf());
            }
        }
    }
    if let Some(path) = std::env::var_os("PATH") {
        dirs.extend(std::env::split_paths(&path));
    }
    dirs.into_iter()
        .map(|d| d.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| DispatchError::ExecutableNotFound(name.into()))
}

fn substitute(arg: &str, files: &JobFiles, timeout: Duration) -> String {
    let model = files.model.as_ref().map(|m| m.display().to_string()).unwrap_or_default();
    arg.replace("{problem}", &files.problem.display().to_string())
        .replace("{model}", &model)
        .replace("{timeout}", &timeout.as_secs_f64().ceil().max(1.0).to_string())
}

/// Runs the adapter's command on `files`, killing it once `timeout` has
/// passed. The child sees only `PATH` and a fixed `C` locale.
pub fn run_external(adapter: &SolverAdapter, files: &JobFiles, timeout: Duration) -> Result<RawSolverResult, DispatchError> {
    let program = resolve_executable(&adapter.command[0])?;
    for f in std::iter::once(&files.problem).chain(&files.model) {
        std::fs::metadata(f).map_err(|e| DispatchError::Io { path: f.display().to_string(), reason: e.to_string() })?;
    }
    let mut cmd = Command::new(&program);
    cmd.args(adapter.command[1..].iter().map(|a| substitute(a, files, timeout)))
        .env_clear()
        .env("LC_ALL", "C")
        .env("LANG", "C")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(path) = std::env::var_os("PATH") {
        cmd.env("PATH", path);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| DispatchError::SpawnFailure(format!("{}: {e}", program.display())))?;
    let drain = |mut r: Box<dyn Read + Send>| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped")));
    let err = drain(Box::new(child.stderr.take().expect("piped")));

    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= timeout => {
                timed_out = true;
                let _ = child.kill();
                let deadline = Instant::now() + KILL_GRACE;
                break loop {
                    match child.try_wait() {
                        Ok(Some(s)) => break Some(s),
                        Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                        _ => break None,
                    }
                };
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(DispatchError::Io { path: program.display().to_string(), reason: e.to_string() }),
        }
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(RawSolverResult {
        exit_code: if timed_out { None } else { status.and_then(|s| s.code()) },
        stdout,
        stderr,
        wall: start.elapsed(),
        timed_out,
    })
}

enum Status {
    Sat,
    Unsat,
    Unknown,
    Timeout,
}

fn status_line(stdout: &str, dialect: Dialect) -> Option<Status> {
    stdout.lines().map(str::trim).find_map(|l| match (l, dialect) {
        ("sat", _) => Some(Status::Sat),
        ("unsat", _) => Some(Status::Unsat),
        ("unknown", _) => Some(Status::Unknown),
        ("violated", Dialect::Vnncomp) => Some(Status::Sat),
        ("holds", Dialect::Vnncomp) => Some(Status::Unsat),
        ("timeout", Dialect::Vnncomp) => Some(Status::Timeout),
        _ => None,
    })
}

/// Input assignment from `(define-fun X_i () Real v)` or `(X_i v)` entries.
fn extract_inputs(stdout: &str, n: usize) -> Result<Vec<f64>, DispatchError> {
    let body: String = stdout
        .lines()
        .filter(|l| !matches!(l.trim(), "sat" | "unsat" | "unknown" | "violated" | "holds"))
        .collect::<Vec<_>>()
        .join("\n");
    let exprs = sexpr::parse_all(&body).map_err(|e| DispatchError::UnparseableOutput(e.to_string()))?;
    let mut values: Vec<Option<f64>> = vec![None; n];
    fn visit(e: &Sexpr, values: &mut [Option<f64>]) {
        let Some(items) = e.list() else { return };
        let binding = match items {
            [Sexpr::Atom(kw), Sexpr::Atom(name), Sexpr::List(args), _sort, value] if kw == "define-fun" && args.is_empty() => {
                Some((name, value))
            }
            [Sexpr::Atom(name), value] => Some((name, value)),
            _ => None,
        };
        if let Some((name, value)) = binding {
            let index = name.strip_prefix("X_").and_then(|i| i.parse::<usize>().ok());
            if let (Some(i), Some(v)) = (index, sexpr::real_value(value)) {
                if i < values.len() {
                    values[i] = Some(exact::to_f64(&v));
                    return;
                }
            }
        }
        for item in items {
            visit(item, values);
        }
    }
    for e in &exprs {
        visit(e, &mut values);
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| DispatchError::UnparseableOutput(format!("model has no value for X_{i}"))))
        .collect()
}

/// Maps solver output to a verdict on `p`, the problem that was emitted (in
/// falsification form). A `sat` model is re-evaluated concretely: it becomes
/// `Falsified` only if it violates the property by more than `tolerance`.
pub fn parse_solver_result(raw: &RawSolverResult, dialect: Dialect, p: &VerificationProblem, engine: &str, tolerance: f64) -> Verdict {
    let done = |o: Outcome| Verdict::new(o, engine, raw.wall.as_secs_f64() * 1e3, 1);
    if raw.timed_out {
        return done(Outcome::Timeout);
    }
    let Some(status) = status_line(&raw.stdout, dialect) else {
        return done(match raw.exit_code {
            Some(0) => Outcome::error(DispatchError::UnparseableOutput(first_line(&raw.stdout)).to_string()),
            code => {
                let code = code.map_or("signal".to_string(), |c| c.to_string());
                Outcome::error(format!("solver exited with {code}: {}", first_line(&raw.stderr)))
            }
        });
    };
    match status {
        Status::Timeout => done(Outcome::Timeout),
        Status::Unknown => done(Outcome::unknown("solver answered unknown")),
        Status::Unsat if p.polarity == Polarity::Falsification => done(Outcome::Valid),
        Status::Unsat => done(Outcome::error("unsat answer for a problem that was not in falsification form")),
        Status::Sat => {
            let x = match extract_inputs(&raw.stdout, p.input_region.dim()) {
                Ok(x) => x,
                Err(e) => return done(Outcome::error(format!("sat without a usable model: {e}"))),
            };
            // decimal rounding can leave the box by an ulp
            let x: Vec<f64> =
                x.iter().zip(p.input_region.lo.iter().zip(&p.input_region.hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
            match check_witness(p, &x, tolerance) {
                Ok(()) => done(Outcome::Falsified { witness: x }),
                Err(_) => {
                    let margin = crate::model::eval_model(&p.model, &x).map(|y| p.property().compile().margin(&x, &y));
                    match margin {
                        Ok(m) if m.abs() <= tolerance && p.residual_holds(&x) => {
                            done(Outcome::unknown(format!("solver model {x:?} lies on the property boundary")))
                        }
                        _ => done(Outcome::error(format!("solver-model mismatch: {x:?} does not violate the property"))),
                    }
                }
            }
        }
    }
}

fn first_line(s: &str) -> String {
    let line = s.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("(empty)");
    line.chars().take(200).collect()
}

/// File name stem for a problem id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

fn write(path: &Path, text: &str) -> Result<(), DispatchError> {
    std::fs::write(path, text).map_err(|e| DispatchError::Io { path: path.display().to_string(), reason: e.to_string() })
}

/// Files an adapter is given for `p` (already in falsification form).
pub fn write_job_files(p: &VerificationProblem, dialect: Dialect, dir: &Path) -> Result<JobFiles, DispatchError> {
    std::fs::create_dir_all(dir).map_err(|e| DispatchError::Io { path: dir.display().to_string(), reason: e.to_string() })?;
    let stem = file_stem(&p.id());
    match dialect {
        Dialect::Smtlib | Dialect::Mock => {
            let text = match emit_smtlib(p) {
                Err(DispatchError::UnsupportedModel(why)) if dialect == Dialect::Mock => emit::emit_placeholder(p, &why),
                other => other?,
            };
            let problem = dir.join(format!("{stem}.smt2"));
            write(&problem, &text)?;
            Ok(JobFiles { problem, model: None })
        }
        Dialect::Vnncomp => {
            let problem = dir.join(format!("{stem}.vnnlib"));
            write(&problem, &emit_vnnlib(p)?)?;
            // NNet where the layer shape allows it, native JSON otherwise
            let nnet = match &*p.model {
                Model::Network(net) => crate::model::serialize_nnet(net).ok(),
                _ => None,
            };
            let model = match nnet {
                Some(text) => {
                    let path = dir.join(format!("{stem}.nnet"));
                    write(&path, &text)?;
                    path
                }
                None => {
                    let path = dir.join(format!("{stem}.json"));
                    write(&path, &to_native_json(&p.model))?;
                    path
                }
            };
            Ok(JobFiles { problem, model: Some(model) })
        }
    }
}

/// Emits `p`, runs the adapter on it and parses the answer.
pub fn solve(p: &VerificationProblem, adapter: &SolverAdapter, work_dir: &Path, timeout: Duration, tolerance: f64) -> Verdict {
    let start = Instant::now();
    let failed = |e: DispatchError| Verdict::new(Outcome::error(e.to_string()), &adapter.id, start.elapsed().as_secs_f64() * 1e3, 1);
    let emitted = match p.polarity {
        Polarity::Proof => negate_goal(p),
        Polarity::Falsification => p.clone(),
    };
    if let Err(why) = adapter.supports(&p.model) {
        return failed(DispatchError::UnsupportedModel(why));
    }
    let files = match write_job_files(&emitted, adapter.dialect, work_dir) {
        Ok(f) => f,
        Err(e) => return failed(e),
    };
    match run_external(adapter, &files, timeout) {
        Ok(raw) => parse_solver_result(&raw, adapter.dialect, &emitted, &adapter.id, tolerance),
        Err(e) => failed(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(stdout: &str) -> RawSolverResult {
        RawSolverResult { exit_code: Some(0), stdout: stdout.into(), stderr: String::new(), wall: Duration::ZERO, timed_out: false }
    }

    #[test]
    fn model_extraction() {
        let x = extract_inputs("sat\n(model\n (define-fun X_1 () Real (- 0.5))\n (define-fun X_0 () Real (/ 1.0 4.0)))", 2).unwrap();
        assert_eq!(x, vec![0.25, -0.5]);
        let x = extract_inputs("sat\n((X_0 0.125)\n (Y_0 3.0))", 1).unwrap();
        assert_eq!(x, vec![0.125]);
        assert!(extract_inputs("sat\n(model)", 1).is_err());
    }

    #[test]
    fn registry_validation() {
        let ok = r#"{"adapters":[{"id":"z3","command":["z3","{problem}"],"dialect":"smtlib"}]}"#;
        assert_eq!(parse_registry(ok).unwrap()[0].timeout, 10.0);
        let no_problem = r#"{"adapters":[{"id":"z3","command":["z3"],"dialect":"smtlib"}]}"#;
        assert!(parse_registry(no_problem).is_err());
        let short = r#"{"adapters":[{"id":"z3","command":["z3","{problem}"],"dialect":"smtlib","timeout":0.5}]}"#;
        assert!(parse_registry(short).is_err());
        let dup = r#"{"adapters":[{"id":"a","command":["a","{problem}"],"dialect":"mock"},{"id":"a","command":["b","{problem}"],"dialect":"mock"}]}"#;
        assert!(parse_registry(dup).is_err());
    }

    #[test]
    fn missing_binary() {
        let a = SolverAdapter {
            id: "ghost".into(),
            command: vec!["no-such-solver-binary".into(), "{problem}".into()],
            dialect: Dialect::Smtlib,
            timeout: 1.0,
        };
        let files = JobFiles { problem: PathBuf::from("/dev/null"), model: None };
        assert_eq!(
            run_external(&a, &files, Duration::from_secs(1)),
            Err(DispatchError::ExecutableNotFound("no-such-solver-binary".into()))
        );
    }

    #[test]
    fn status_mapping() {
        assert!(matches!(status_line("unsat\n", Dialect::Smtlib), Some(Status::Unsat)));
        assert!(matches!(status_line("holds\n", Dialect::Vnncomp), Some(Status::Unsat)));
        assert!(status_line("holds\n", Dialect::Smtlib).is_none());
        assert_eq!(first_line(&raw("\n  garbage here\nmore").stdout), "garbage here".to_string());
    }
}
