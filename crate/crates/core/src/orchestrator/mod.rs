//! Run configuration, engine planning, parallel execution and reports.
//!
//! ```
//! use verimux::analyzer::{Outcome, Verdict};
//! use verimux::orchestrator::combine_verdicts;
//!
//! let v = combine_verdicts(&[
//!     Verdict::new(Outcome::Valid, "builtin-affine", 3.0, 5),
//!     Verdict::new(Outcome::unknown("no answer"), "mock-smt", 1.0, 1),
//! ])
//! .unwrap();
//! assert_eq!(v.outcome, Outcome::Valid);
//! assert_eq!(v.provenance.subproblems, 6);
//! ```

mod cli;
mod combine;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyzer::{verify_goal, AnalyzerConfig, Domain, LayerStack, Verdict};
use crate::dispatch::{self, DispatchError, SolverAdapter};
use crate::metamorphic::MetamorphicError;
use crate::model::{parse_dataset, Dataset, Model, ModelError};
use crate::problem::{build_problems, BuildOptions, ProblemError, VerificationProblem};
use crate::speclang::{parse_spec, typecheck_spec_with_datasets, SpecError, TypedSpec};

pub use cli::cli_main;
pub use combine::{combine_verdicts, INCONSISTENT};
pub use report::{exit_code_for, render_report, CompositeReport, EngineEntry, GoalReport, ReportFormat, SCHEMA_VERSION};

pub const SEED_ENV: &str = "VERIMUX_SEED";

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("{path}: {source}")]
    Spec { path: String, source: SpecError },
    #[error("model `{name}`: {source}")]
    Model { name: String, source: ModelError },
    #[error("dataset `{name}`: {source}")]
    Dataset { name: String, source: ModelError },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Metamorphic(#[from] MetamorphicError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error("no engine can handle goal `{goal}`: {reasons}")]
    NoCapableEngine { goal: String, reasons: String },
    #[error("nothing to combine")]
    EmptyInput,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

fn io_error(path: &Path, e: impl ToString) -> OrchestratorError {
    OrchestratorError::Io { path: path.display().to_string(), reason: e.to_string() }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spec: PathBuf,
    /// Replace the file an imported model is read from.
    pub models: BTreeMap<String, PathBuf>,
    pub datasets: BTreeMap<String, PathBuf>,
    /// `builtin-box`, `builtin-affine`, `metamorphic`, or an adapter id.
    pub engines: Vec<String>,
    /// Seconds per engine and goal.
    pub timeout: f64,
    pub parallelism: usize,
    pub format: ReportFormat,
    pub seed: u64,
    /// Search limits for the built-in engines. `domain` is set per engine
    /// and `seed` by the field above.
    pub analyzer: AnalyzerConfig,
    /// Adapter registry file, added to the built-in `mock-smt`.
    pub adapters: Option<PathBuf>,
    /// Recorded answers for `mock-smt`.
    pub replay_dir: Option<PathBuf>,
    /// Keep emitted solver files here instead of a temporary directory.
    pub work_dir: Option<PathBuf>,
    pub apply_normalization: bool,
    pub clamp: Option<(f64, f64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec: PathBuf::new(),
            models: BTreeMap::new(),
            datasets: BTreeMap::new(),
            engines: vec![Domain::Affine.engine_id().into()],
            timeout: 60.0,
            parallelism: default_parallelism(),
            format: ReportFormat::Text,
            seed: 0,
            analyzer: AnalyzerConfig::default(),
            adapters: None,
            replay_dir: None,
            work_dir: None,
            apply_normalization: false,
            clamp: None,
        }
    }
}

impl RunConfig {
    /// TOML for `.toml`, JSON otherwise. Relative paths are taken from the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.spec);
        cfg.models.values_mut().for_each(rebase);
        cfg.datasets.values_mut().for_each(rebase);
        for p in [&mut cfg.adapters, &mut cfg.replay_dir, &mut cfg.work_dir].into_iter().flatten() {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Applies `VERIMUX_SEED` when set.
    pub fn apply_env(&mut self) -> Result<(), OrchestratorError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| OrchestratorError::Config(format!("{SEED_ENV}={v} is not a seed")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.engines.is_empty() {
            return Err(OrchestratorError::Config("at least one engine is required".into()));
        }
        if self.parallelism == 0 {
            return Err(OrchestratorError::Config("parallelism must be at least 1".into()));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(OrchestratorError::Config("timeout must be positive".into()));
        }
        self.analyzer.validate().map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    /// SHA-256 over the settings that can change a verdict; parallelism,
    /// output format and the work directory are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.parallelism = 1;
        c.format = ReportFormat::Text;
        c.work_dir = None;
        let json = serde_json::to_string(&c).expect("plain data");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Analyzer(Domain),
    Metamorphic,
    External(SolverAdapter),
}

impl Engine {
    pub fn id(&self) -> String {
        match self {
            Engine::Analyzer(d) => d.engine_id().into(),
            Engine::Metamorphic => "metamorphic".into(),
            Engine::External(a) => a.id.clone(),
        }
    }

    /// `Err(reason)` when the engine cannot take this problem.
    pub fn supports(&self, p: &VerificationProblem) -> Result<(), String> {
        match self {
            Engine::Analyzer(_) => LayerStack::from_model(&p.model).map(|_| ()).map_err(|e| e.to_string()),
            Engine::Metamorphic => Err("metamorphic testing yields agreement tables, not goal verdicts".into()),
            Engine::External(a) => a.supports(&p.model),
        }
    }
}

/// Engines named in `cfg`, in config order.
pub fn resolve_engines(cfg: &RunConfig) -> Result<Vec<Engine>, OrchestratorError> {
    let mut adapters = vec![SolverAdapter::mock("mock-smt", cfg.replay_dir.as_deref())];
    if let Some(path) = &cfg.adapters {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        for a in dispatch::parse_registry(&text)? {
            adapters.retain(|b| b.id != a.id);
            adapters.push(a);
        }
    }
    let mut engines = Vec::new();
    for id in &cfg.engines {
        let engine = match id.as_str() {
            "builtin-box" => Engine::Analyzer(Domain::Box),
            "builtin-affine" => Engine::Analyzer(Domain::Affine),
            "metamorphic" => Engine::Metamorphic,
            other => Engine::External(
                adapters
                    .iter()
                    .find(|a| a.id == other)
                    .cloned()
                    .ok_or_else(|| OrchestratorError::UnknownEngine(other.into()))?,
            ),
        };
        if engines.contains(&engine) {
            return Err(OrchestratorError::Config(format!("engine `{id}` listed twice")));
        }
        engines.push(engine);
    }
    Ok(engines)
}

/// Everything a spec refers to, loaded and turned into problems.
pub struct Workspace {
    pub spec: TypedSpec,
    pub models: BTreeMap<String, Arc<Model>>,
    pub datasets: BTreeMap<String, Dataset>,
}

/// Parses and typechecks the spec, loading the models and datasets it
/// imports (paths relative to the spec file unless overridden).
pub fn load_workspace(cfg: &RunConfig) -> Result<Workspace, OrchestratorError> {
    let text = std::fs::read_to_string(&cfg.spec).map_err(|e| io_error(&cfg.spec, e))?;
    let spec_err = |source| OrchestratorError::Spec { path: cfg.spec.display().to_string(), source };
    let module = parse_spec(&text).map_err(spec_err)?;
    let base = cfg.spec.parent().unwrap_or(Path::new(""));
    let mut models = BTreeMap::new();
    for import in &module.imports {
        let path = cfg.models.get(&import.name).cloned().unwrap_or_else(|| base.join(&import.path));
        let model = Model::load(&path, cfg.apply_normalization)
            .map_err(|source| OrchestratorError::Model { name: import.name.clone(), source })?;
        models.insert(import.name.clone(), Arc::new(model));
    }
    let mut datasets = BTreeMap::new();
    for import in &module.datasets {
        let path = cfg.datasets.get(&import.name).cloned().unwrap_or_else(|| base.join(&import.path));
        let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let d = parse_dataset(&text, import.labeled)
            .map_err(|source| OrchestratorError::Dataset { name: import.name.clone(), source })?;
        datasets.insert(import.name.clone(), d);
    }
    for name in cfg.models.keys().chain(cfg.datasets.keys()) {
        if !models.contains_key(name) && !datasets.contains_key(name) {
            return Err(OrchestratorError::Config(format!("override for `{name}`, which the spec does not import")));
        }
    }
    let sigs = models.iter().map(|(k, m)| (k.clone(), m.signature())).collect();
    let dims = datasets.iter().map(|(k, d)| (k.clone(), d.feature_dim)).collect();
    let spec = typecheck_spec_with_datasets(&module, &sigs, &dims).map_err(spec_err)?;
    Ok(Workspace { spec, models, datasets })
}

pub fn build_workspace_problems(ws: &Workspace, cfg: &RunConfig) -> Result<Vec<VerificationProblem>, OrchestratorError> {
    Ok(build_problems(&ws.spec, &ws.models, &ws.datasets, &BuildOptions { clamp: cfg.clamp })?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub problem: usize,
    pub engine: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    /// Problem-major, engines in config order.
    pub jobs: Vec<Job>,
    /// `(problem, engine, reason)`.
    pub skips: Vec<(usize, usize, String)>,
}

/// Pairs every problem with the engines able to handle it.
pub fn plan(engines: &[Engine], problems: &[VerificationProblem]) -> Result<Schedule, OrchestratorError> {
    let mut s = Schedule::default();
    for (pi, p) in problems.iter().enumerate() {
        let mut reasons = Vec::new();
        for (ei, e) in engines.iter().enumerate() {
            match e.supports(p) {
                Ok(()) => s.jobs.push(Job { problem: pi, engine: ei }),
                Err(why) => {
                    reasons.push(format!("{}: {why}", e.id()));
                    s.skips.push((pi, ei, why));
                }
            }
        }
        if !s.jobs.iter().any(|j| j.problem == pi) {
            return Err(OrchestratorError::NoCapableEngine { goal: p.id(), reasons: reasons.join("; ") });
        }
    }
    Ok(s)
}

static RUN_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn run_job(cfg: &RunConfig, engine: &Engine, p: &VerificationProblem, work_dir: &Path) -> Verdict {
    let timeout = Duration::from_secs_f64(cfg.timeout);
    match engine {
        Engine::Analyzer(domain) => {
            let acfg = AnalyzerConfig { domain: *domain, seed: cfg.seed, time_limit: Some(timeout), ..cfg.analyzer.clone() };
            verify_goal(p, &acfg)
        }
        Engine::External(a) => {
            let limit = timeout.min(Duration::from_secs_f64(a.timeout));
            dispatch::solve(p, a, &work_dir.join(dispatch::file_stem(&a.id)), limit, cfg.analyzer.tolerance)
        }
        Engine::Metamorphic => unreachable!("never scheduled"),
    }
}

/// Plans, runs and combines. Jobs run on a pool of `cfg.parallelism`
/// threads; results are assembled in schedule order.
pub fn run_problems(cfg: &RunConfig, problems: &[VerificationProblem]) -> Result<CompositeReport, OrchestratorError> {
    cfg.validate()?;
    let engines = resolve_engines(cfg)?;
    let schedule = plan(&engines, problems)?;
    let (work_dir, temporary) = match &cfg.work_dir {
        Some(d) => (d.clone(), false),
        None => {
            let n = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
            (std::env::temp_dir().join(format!("verimux-{}-{n}", std::process::id())), true)
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let verdicts: Vec<Verdict> = pool.install(|| {
        schedule.jobs.par_iter().map(|j| run_job(cfg, &engines[j.engine], &problems[j.problem], &work_dir)).collect()
    });
    if temporary {
        let _ = std::fs::remove_dir_all(&work_dir);
    }

    let mut goals = Vec::with_capacity(problems.len());
    for (pi, p) in problems.iter().enumerate() {
        let mut entries = Vec::new();
        let mut ran = Vec::new();
        for (ei, e) in engines.iter().enumerate() {
            let entry = if let Some(k) = schedule.jobs.iter().position(|j| j.problem == pi && j.engine == ei) {
                ran.push(verdicts[k].clone());
                EngineEntry { engine: e.id(), verdict: Some(verdicts[k].clone()), skipped: None }
            } else {
                let reason = schedule.skips.iter().find(|s| s.0 == pi && s.1 == ei).map(|s| s.2.clone());
                EngineEntry { engine: e.id(), verdict: None, skipped: reason }
            };
            entries.push(entry);
        }
        goals.push(GoalReport {
            id: p.id(),
            goal: p.meta.goal.clone(),
            sample: p.meta.sample,
            model: p.model_name.clone(),
            engines: entries,
            combined: combine_verdicts(&ran)?,
        });
    }
    let exit_code = exit_code_for(&goals);
    Ok(CompositeReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        engines: engines.iter().map(Engine::id).collect(),
        goals,
        exit_code,
    })
}

/// The whole pipeline for `cfg.spec`.
pub fn run(cfg: &RunConfig) -> Result<CompositeReport, OrchestratorError> {
    cfg.validate()?;
    let ws = load_workspace(cfg)?;
    let problems = build_workspace_problems(&ws, cfg)?;
    run_problems(cfg, &problems)
}
