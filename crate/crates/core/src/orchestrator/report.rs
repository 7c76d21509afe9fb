use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analyzer::{Outcome, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

/// One scheduled (goal, engine) pair: either a verdict or the reason the
/// engine was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEntry {
    pub engine: String,
    pub verdict: Option<Verdict>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    /// Problem id: goal name, `#row` for per-sample problems.
    pub id: String,
    pub goal: String,
    pub sample: Option<usize>,
    pub model: String,
    pub engines: Vec<EngineEntry>,
    pub combined: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeReport {
    pub schema_version: u32,
    pub tool_version: String,
    /// SHA-256 of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub engines: Vec<String>,
    pub goals: Vec<GoalReport>,
    pub exit_code: i32,
}

/// 0 when every goal is valid, 3 on any error, else 10 on any
/// counterexample, else 20.
pub fn exit_code_for(goals: &[GoalReport]) -> i32 {
    let any = |f: fn(&Outcome) -> bool| goals.iter().any(|g| f(&g.combined.outcome));
    if any(|o| matches!(o, Outcome::Error { .. })) {
        3
    } else if any(|o| matches!(o, Outcome::Falsified { .. })) {
        10
    } else if any(|o| matches!(o, Outcome::Unknown { .. } | Outcome::Timeout)) {
        20
    } else {
        0
    }
}

impl CompositeReport {
    /// Copy with all elapsed times zeroed, for comparing runs.
    pub fn without_timing(&self) -> CompositeReport {
        let mut r = self.clone();
        for g in &mut r.goals {
            g.combined.provenance.elapsed_ms = 0.0;
            for e in &mut g.engines {
                if let Some(v) = &mut e.verdict {
                    v.provenance.elapsed_ms = 0.0;
                }
            }
        }
        r
    }
}

fn detail(v: &Verdict) -> String {
    match &v.outcome {
        Outcome::Falsified { witness } => {
            let xs: Vec<String> = witness.iter().map(|x| format!("{x}")).collect();
            format!("witness [{}]", xs.join(", "))
        }
        Outcome::Unknown { reason } => reason.clone(),
        Outcome::Error { message } => message.clone(),
        Outcome::Valid | Outcome::Timeout => String::new(),
    }
}

pub fn render_report(r: &CompositeReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(r).expect("plain data") + "\n",
        ReportFormat::Text => render_text(r),
    }
}

fn render_text(r: &CompositeReport) -> String {
    let mut rows: Vec<[String; 5]> = vec![["goal", "engine", "verdict", "time (ms)", "detail"].map(String::from)];
    for g in &r.goals {
        for e in &g.engines {
            rows.push(match (&e.verdict, &e.skipped) {
                (Some(v), _) => [
                    g.id.clone(),
                    e.engine.clone(),
                    v.outcome.tag().into(),
                    format!("{:.1}", v.provenance.elapsed_ms),
                    detail(v),
                ],
                (None, reason) => {
                    [g.id.clone(), e.engine.clone(), "skipped".into(), String::new(), reason.clone().unwrap_or_default()]
                }
            });
        }
        rows.push([g.id.clone(), "combined".into(), g.combined.outcome.tag().into(), String::new(), detail(&g.combined)]);
    }
    let mut width = [0; 4];
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    writeln!(out, "verimux {} report, schema {}", r.tool_version, r.schema_version).unwrap();
    writeln!(out, "config {}  seed {}", r.config_hash, r.seed).unwrap();
    writeln!(out).unwrap();
    for row in &rows {
        let line = format!(
            "{:<w0$}  {:<w1$}  {:<w2$}  {:>w3$}  {}",
            row[0],
            row[1],
            row[2],
            row[3],
            row[4],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2],
            w3 = width[3]
        );
        writeln!(out, "{}", line.trim_end()).unwrap();
    }
    let count = |tag: &str| r.goals.iter().filter(|g| g.combined.outcome.tag() == tag).count();
    writeln!(out).unwrap();
    writeln!(
        out,
        "{} goals: {} valid, {} falsified, {} unknown, {} timeout, {} error; exit {}",
        r.goals.len(),
        count("valid"),
        count("falsified"),
        count("unknown"),
        count("timeout"),
        count("error"),
        r.exit_code
    )
    .unwrap();
    out
}
