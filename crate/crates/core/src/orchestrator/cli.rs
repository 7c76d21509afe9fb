use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dispatch::{self, Dialect};
use crate::metamorphic::{agreement_table, derive_property, Transformation};
use crate::model::{parse_dataset, Model};
use crate::problem::negate_goal;
use crate::speclang::print_formula;

use super::{build_workspace_problems, load_workspace, render_report, run, OrchestratorError, ReportFormat, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "verimux", version, about = "Specify, analyse and dispatch verification goals for ML models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build problems from a spec and run the configured engines on them.
    Verify(VerifyArgs),
    /// Write SMT-LIB or VNN-LIB files for every problem, without solving.
    Emit(EmitArgs),
    /// Agreement table of a model under an input transformation.
    Metamorphic(MetamorphicArgs),
    /// Parse and typecheck a spec.
    CheckSpec(SpecArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Property file (.mls).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Read an imported model from another file: NAME=PATH.
    #[arg(long = "model", value_name = "NAME=PATH", value_parser = parse_binding)]
    models: Vec<(String, PathBuf)>,
    /// Read an imported dataset from another file: NAME=PATH.
    #[arg(long = "dataset", value_name = "NAME=PATH", value_parser = parse_binding)]
    datasets: Vec<(String, PathBuf)>,
    /// Apply NNet input/output normalization inside the model.
    #[arg(long)]
    apply_normalization: bool,
    /// Clamp every input box to [LO, HI].
    #[arg(long, value_name = "LO,HI", value_parser = parse_clamp)]
    clamp: Option<(f64, f64)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Box,
    Affine,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// TOML or JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Engine id, repeatable: builtin-box, builtin-affine, metamorphic, or an adapter id.
    #[arg(long = "engine")]
    engines: Vec<String>,
    /// Built-in domain used when no --engine is given.
    #[arg(long, value_enum)]
    domain: Option<DomainArg>,
    /// Adapter registry (JSON).
    #[arg(long)]
    adapters: Option<PathBuf>,
    /// Recorded answers for the mock-smt adapter.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    /// Keep emitted solver files in this directory.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Seconds per engine and goal.
    #[arg(long)]
    timeout: Option<f64>,
    /// Number of jobs run at once.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_budget: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitFormat {
    Smtlib,
    Vnnlib,
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum)]
    format: EmitFormat,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MetamorphicArgs {
    /// Model file (.nnet or native JSON).
    #[arg(long)]
    model: PathBuf,
    /// CSV dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// The dataset's last column is a label.
    #[arg(long)]
    labeled: bool,
    /// Transformation file (JSON).
    #[arg(long)]
    transform: PathBuf,
    #[arg(long)]
    apply_normalization: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

fn parse_binding(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got `{s}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn parse_clamp(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo <= hi) {
        return Err("LO must not exceed HI".into());
    }
    Ok((lo, hi))
}

enum Failure {
    Usage(String),
    Input(OrchestratorError),
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        Failure::Input(e)
    }
}

fn apply_spec_args(cfg: &mut RunConfig, a: &SpecArgs) -> Result<(), Failure> {
    if let Some(s) = &a.spec {
        cfg.spec = s.clone();
    }
    if cfg.spec.as_os_str().is_empty() {
        return Err(Failure::Usage("--spec is required (or a config file naming one)".into()));
    }
    cfg.models.extend(a.models.iter().cloned());
    cfg.datasets.extend(a.datasets.iter().cloned());
    cfg.apply_normalization |= a.apply_normalization;
    if a.clamp.is_some() {
        cfg.clamp = a.clamp;
    }
    Ok(())
}

fn verify_config(a: &VerifyArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    apply_spec_args(&mut cfg, &a.spec)?;
    if !a.engines.is_empty() {
        cfg.engines = a.engines.clone();
    } else if let Some(d) = a.domain {
        cfg.engines = vec![match d {
            DomainArg::Box => "builtin-box".into(),
            DomainArg::Affine => "builtin-affine".into(),
        }];
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),*) => {$(
            if let Some(v) = a.$flag.clone() {
                cfg.$($field).+ = v;
            }
        )*};
    }
    set!(timeout => timeout, jobs => parallelism, format => format, split_budget => analyzer.split_budget,
         max_depth => analyzer.max_depth, samples => analyzer.samples, tolerance => analyzer.tolerance);
    for (flag, field) in [(&a.adapters, &mut cfg.adapters), (&a.replay_dir, &mut cfg.replay_dir), (&a.work_dir, &mut cfg.work_dir)] {
        if flag.is_some() {
            *field = flag.clone();
        }
    }
    cfg.apply_env()?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), OrchestratorError> {
    std::fs::write(path, text).map_err(|e| super::io_error(path, e))
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = verify_config(a)?;
    let report = run(&cfg)?;
    let text = render_report(&report, cfg.format);
    if let Some(path) = &a.output {
        write_file(path, &text)?;
    }
    let _ = out.write_all(text.as_bytes());
    Ok(report.exit_code)
}

fn emit(a: &EmitArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut cfg = RunConfig::default();
    apply_spec_args(&mut cfg, &a.spec)?;
    let ws = load_workspace(&cfg)?;
    let problems = build_workspace_problems(&ws, &cfg)?;
    let dialect = match a.format {
        EmitFormat::Smtlib => Dialect::Smtlib,
        EmitFormat::Vnnlib => Dialect::Vnncomp,
    };
    for p in &problems {
        let files = dispatch::write_job_files(&negate_goal(p), dialect, &a.out_dir).map_err(OrchestratorError::from)?;
        for f in std::iter::once(&files.problem).chain(&files.model) {
            let _ = writeln!(out, "{}", f.display());
        }
    }
    Ok(0)
}

fn metamorphic(a: &MetamorphicArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let model = Model::load(&a.model, a.apply_normalization)
        .map_err(|source| OrchestratorError::Model { name: a.model.display().to_string(), source })?;
    let text = std::fs::read_to_string(&a.dataset).map_err(|e| super::io_error(&a.dataset, e))?;
    let data = parse_dataset(&text, a.labeled)
        .map_err(|source| OrchestratorError::Dataset { name: a.dataset.display().to_string(), source })?;
    let tf = std::fs::read_to_string(&a.transform).map_err(|e| super::io_error(&a.transform, e))?;
    let t = Transformation::from_json(&tf).map_err(OrchestratorError::from)?;
    let table = agreement_table(&model, &data, &t).map_err(OrchestratorError::from)?;
    let relation = derive_property(&t);
    let text = match a.format {
        ReportFormat::Text => format!("expected: {relation}\n\n{table}"),
        ReportFormat::Json => {
            let v = serde_json::json!({ "relation": relation.to_string(), "table": table });
            serde_json::to_string_pretty(&v).expect("plain data") + "\n"
        }
    };
    let _ = out.write_all(text.as_bytes());
    Ok(0)
}

fn check_spec(a: &SpecArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut cfg = RunConfig::default();
    apply_spec_args(&mut cfg, a)?;
    let ws = load_workspace(&cfg)?;
    let module = &ws.spec.module;
    let _ = writeln!(
        out,
        "ok: {} models, {} datasets, {} predicates, {} goals",
        module.imports.len(),
        module.datasets.len(),
        module.predicates.len(),
        module.goals.len()
    );
    for g in &module.goals {
        let _ = writeln!(out, "goal {}: {}", g.name, print_formula(&g.body));
    }
    Ok(0)
}

/// Runs the command line `args` (program name first) and returns the exit
/// status: 0 all valid, 10 a counterexample, 20 undecided, 3 an error or
/// inconsistent verdicts, 2 bad usage, 1 unreadable or invalid input.
pub fn cli_main(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let result = match &cli.command {
        Cmd::Verify(a) => verify(a, out),
        Cmd::Emit(a) => emit(a, out),
        Cmd::Metamorphic(a) => metamorphic(a, out),
        Cmd::CheckSpec(a) => check_spec(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nRun with --help for usage.");
            2
        }
        Err(Failure::Input(e)) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, OrchestratorError::Config(_)) && std::env::var(SEED_ENV).is_ok() {
                let _ = writeln!(err, "note: {SEED_ENV} is set");
            }
            1
        }
    }
}
